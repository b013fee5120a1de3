// eigenprecode command-line driver.
//
//   gen-scenarios  synthesize scenarios as JSON lines
//   gen-dataset    label scenarios with the iterative oracle (resumable)
//   train          fit an LMNN or SLMNN and write its weights
//   eval           Monte-Carlo sum rates per method and scenario
//   bench          wall-clock of precoder computation per method
//
// Exit codes: 0 success, 2 usage or validation, 3 numerical failure, 4 IO.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "eigenprecode/config.hpp"
#include "eigenprecode/dataset.hpp"
#include "eigenprecode/evaluation.hpp"
#include "eigenprecode/io.hpp"
#include "eigenprecode/neural.hpp"

namespace ep = eigenprecode;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
};

ep::config::RunConfig load_config(const Common& c) {
  ep::config::RunConfig cfg;
  if (!c.config_path.empty()) {
    if (!fs::exists(c.config_path))
      throw ep::Error(ep::ErrorKind::InvalidConfig, "--config: file not found: " + c.config_path);
    cfg = ep::config::load(c.config_path);
  }
  if (c.seed) cfg.seed = c.seed;
  return cfg;
}

void require_input(const std::string& path, const std::string& flag) {
  if (!fs::exists(path)) throw ep::Error(ep::ErrorKind::InvalidArgument, flag + ": file not found: " + path);
}

std::string meta_path_for(const std::string& out) {
  const std::string suffix = ".jsonl";
  if (out.size() > suffix.size() && out.compare(out.size() - suffix.size(), suffix.size(), suffix) == 0)
    return out.substr(0, out.size() - suffix.size()) + ".meta.json";
  return out + ".meta.json";
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// ---------------------------------------------------------------------------

int cmd_gen_scenarios(const Common& common, const std::string& out, std::size_t n) {
  const auto cfg = load_config(common);
  const std::uint64_t seed = cfg.require_seed();
  std::vector<ep::io::Scenario> scenarios(n);
  ep::parallel_for(n, ep::resolve_threads(common.threads), [&](std::size_t i) {
    scenarios[i] = ep::dataset::make_scenario(cfg.scenario, cfg.ranges, seed, "scenario", i);
  });
  ep::io::write_scenarios(out, scenarios);
  std::cout << "wrote " << n << " scenarios to " << out << " (" << cfg.ranges.cells()
            << " (snr, beta) cells, seed " << seed << ")\n";
  return 0;
}

int cmd_gen_dataset(const Common& common, const std::string& out, std::size_t n,
                    const std::string& scenarios_path, bool resume) {
  const auto cfg = load_config(common);
  const std::uint64_t seed = cfg.require_seed();
  ep::dataset::DatasetOptions opts = cfg.dataset;
  opts.threads = common.threads;
  const std::string meta_path = meta_path_for(out);

  std::vector<ep::io::Scenario> given;
  if (!scenarios_path.empty()) {
    require_input(scenarios_path, "--scenarios");
    given = ep::io::read_scenarios(scenarios_path);
    n = given.size();
  }

  // Resume: keep complete lines whose index matches their position.
  std::size_t start = 0;
  std::size_t prior_rejections = 0;
  std::string kept;
  if (resume && fs::exists(out)) {
    for (const auto& line : ep::io::read_lines(out)) {
      const auto rec = ep::dataset::record_from_json(ep::io::parse_json(line, out));
      if (rec.index != start) break;
      kept += line + "\n";
      prior_rejections += static_cast<std::size_t>(rec.rejections);
      ++start;
    }
  }
  if (start > n) start = n;
  {
    std::ofstream os(out, std::ios::binary | std::ios::trunc);
    if (!os) throw ep::Error(ep::ErrorKind::Io, "cannot write " + out);
    os << kept;
  }
  std::ofstream os(out, std::ios::binary | std::ios::app);
  if (!os) throw ep::Error(ep::ErrorKind::Io, "cannot write " + out);
  if (start > 0) std::cerr << "resuming at record " << start << "\n";

  std::size_t done = start;
  auto sink = [&](const ep::dataset::DatasetRecord& r) {
    os << ep::dataset::to_json(r).dump() << "\n";
    os.flush();
    if (!os) throw ep::Error(ep::ErrorKind::Io, "failed writing " + out);
    ++done;
    if (done % 100 == 0 || done == n) std::cerr << "\r" << done << "/" << n << std::flush;
  };

  ep::dataset::GenerateStats stats;
  if (given.empty()) {
    stats = ep::dataset::generate_range(start, n, n, cfg.scenario, cfg.ranges, opts, seed, sink,
                                        prior_rejections);
  } else {
    // Labeling fixed scenarios: a rejected scenario is skipped and counted.
    stats.rejections = prior_rejections;
    for (std::size_t i = start; i < n; ++i) {
      auto o = ep::dataset::label(given[i], opts);
      if (!o.record) {
        ++stats.rejections;
        ++stats.reasons[o.reject_reason];
        continue;
      }
      o.record->index = i;
      ++stats.records;
      sink(*o.record);
    }
  }
  if (n > 0) std::cerr << "\n";
  stats.records = done;
  ep::io::write_text_file(meta_path,
                          ep::dataset::meta_json(cfg.scenario, cfg.ranges, opts, seed, stats).dump(2) + "\n");
  std::cout << "wrote " << done << " records to " << out << "; rejections " << stats.rejections
            << " (rate " << stats.rejection_rate() << ")\n";
  return 0;
}

int cmd_train(const Common& common, const std::string& dataset_path, const std::string& net_name,
              const std::string& out, const std::string& curve_path, int steps_override) {
  const auto cfg = load_config(common);
  const std::uint64_t seed = cfg.require_seed();
  require_input(dataset_path, "--dataset");
  ep::dataset::NetKind kind;
  if (net_name == "lmnn")
    kind = ep::dataset::NetKind::Lmnn;
  else if (net_name == "slmnn")
    kind = ep::dataset::NetKind::Slmnn;
  else
    throw ep::Error(ep::ErrorKind::InvalidArgument, "--net: must be lmnn or slmnn");
  const auto records = ep::dataset::read_dataset(dataset_path);
  if (records.empty()) throw ep::Error(ep::ErrorKind::EmptyDataset, dataset_path + " has no records");
  for (const auto& r : records) {
    const auto& c = r.scenario.config;
    if (c.Mv != cfg.scenario.Mv || c.Mh != cfg.scenario.Mh || c.Nv != cfg.scenario.Nv ||
        c.Nh != cfg.scenario.Nh || c.K != cfg.scenario.K)
      throw ep::Error(ep::ErrorKind::ShapeMismatch,
                      "record " + std::to_string(r.index) + " geometry differs from the config");
  }
  const auto& tc = cfg.training;
  const auto sp = ep::dataset::split(records.size(),
                                     {1.0 - tc.val_fraction - tc.test_fraction, tc.val_fraction, tc.test_fraction},
                                     seed);
  const auto train = ep::dataset::to_samples(records, sp.train, kind);
  const auto val = ep::dataset::to_samples(records, sp.val, kind);
  const ep::neural::NetSpec spec = ep::config::net_spec(cfg, kind);
  ep::neural::TrainOptions opts;
  opts.steps = steps_override > 0 ? steps_override : tc.steps;
  opts.batch = tc.batch;
  opts.adam.lr = tc.lr;
  opts.seed = ep::stream_seed(seed, "train", kind == ep::dataset::NetKind::Lmnn ? 0 : 1);
  opts.budget = cfg.scenario.P;
  opts.eval_every = tc.eval_every;
  const auto result = ep::neural::train(spec, train, val, opts);
  ep::neural::save_weights(out, spec, result.params);
  if (!curve_path.empty()) {
    std::string csv = "step,train_loss,val_loss\n";
    for (const auto& p : result.curve)
      csv += std::to_string(p.step) + "," + ep::evaluation::fmt(p.train_loss) + "," +
             ep::evaluation::fmt(p.val_loss) + "\n";
    ep::io::write_text_file(curve_path, csv);
  }
  const auto& last = result.curve.back();
  std::cout << "trained " << net_name << " on " << train.size() << " samples (" << val.size()
            << " validation) for " << opts.steps << " steps; final train loss "
            << ep::evaluation::fmt(last.train_loss) << ", validation loss "
            << ep::evaluation::fmt(last.val_loss) << "; wrote " << out << "\n";
  return 0;
}

ep::evaluation::Nets load_nets(const std::string& lmnn, const std::string& slmnn) {
  ep::evaluation::Nets nets;
  if (!lmnn.empty()) {
    if (!fs::exists(lmnn)) throw ep::Error(ep::ErrorKind::MissingWeights, "--lmnn: file not found: " + lmnn);
    nets.lmnn = ep::neural::load_weights(lmnn);
  }
  if (!slmnn.empty()) {
    if (!fs::exists(slmnn)) throw ep::Error(ep::ErrorKind::MissingWeights, "--slmnn: file not found: " + slmnn);
    nets.slmnn = ep::neural::load_weights(slmnn);
  }
  return nets;
}

ep::evaluation::MethodOptions method_options(const ep::config::RunConfig& cfg) {
  ep::evaluation::MethodOptions mo;
  mo.iterative = cfg.iterative;
  mo.eps = cfg.eval.eps;
  return mo;
}

int cmd_eval(const Common& common, const std::string& scenarios_path, const std::string& methods_arg,
             const std::string& lmnn, const std::string& slmnn, const std::string& out_csv,
             const std::string& out_json, std::size_t mc) {
  const auto cfg = load_config(common);
  const std::uint64_t seed = cfg.require_seed();
  const auto methods = methods_arg.empty() ? cfg.eval.methods : split_list(methods_arg);
  for (const auto& m : methods) ep::evaluation::check_method(m);
  require_input(scenarios_path, "--scenarios");
  const std::size_t samples = mc > 0 ? mc : cfg.eval.mc_samples;
  if (samples < 100) throw ep::Error(ep::ErrorKind::InvalidArgument, "--mc: must be >= 100");
  const auto nets = load_nets(lmnn, slmnn);
  ep::evaluation::require_nets(methods, nets);
  const auto scenarios = ep::io::read_scenarios(scenarios_path);
  const auto mo = method_options(cfg);

  std::vector<ep::evaluation::EvalReport> all;
  ep::io::json detail = ep::io::json::array();
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const auto& s = scenarios[i];
    const auto reports = ep::evaluation::compare(s.state, s.config, methods, nets, samples,
                                                 ep::stream_seed(seed, "eval/scenario", i), mo,
                                                 common.threads);
    for (const auto& r : reports) {
      auto j = ep::evaluation::to_json(r);
      j["scenario"] = i;
      detail.push_back(j);
      all.push_back(r);
    }
  }
  std::string csv = std::string(ep::evaluation::kCsvHeader) + "\n";
  for (const auto& r : all) csv += ep::evaluation::csv_row(r) + "\n";
  ep::io::json agg_json = ep::io::json::array();
  for (const auto& a : ep::evaluation::aggregate(all)) {
    csv += ep::evaluation::csv_row("mean:" + a.method, a.snr_db, a.beta, a.sum_rate_mc, a.stderr_mc,
                                   a.sum_rate_ub, a.wall_clock_us, a.mc_samples) +
           "\n";
    agg_json.push_back({{"method", a.method},
                        {"snr_db", a.snr_db},
                        {"beta", a.beta},
                        {"scenarios", a.count},
                        {"sum_rate_mc", a.sum_rate_mc},
                        {"stderr", a.stderr_mc},
                        {"sum_rate_ub", a.sum_rate_ub},
                        {"wall_clock_us", a.wall_clock_us}});
  }
  ep::io::write_text_file(out_csv, csv);
  if (!out_json.empty())
    ep::io::write_text_file(out_json, ep::io::json{{"reports", detail}, {"aggregates", agg_json}}.dump(2) + "\n");
  std::cout << "evaluated " << methods.size() << " methods on " << scenarios.size() << " scenarios ("
            << samples << " draws each); wrote " << out_csv << "\n";
  return 0;
}

int cmd_bench(const Common& common, const std::string& scenarios_path, const std::string& methods_arg,
              const std::string& lmnn, const std::string& slmnn, const std::string& out_csv, int repeats) {
  const auto cfg = load_config(common);
  const auto methods = methods_arg.empty() ? cfg.eval.methods : split_list(methods_arg);
  for (const auto& m : methods) ep::evaluation::check_method(m);
  require_input(scenarios_path, "--scenarios");
  const auto nets = load_nets(lmnn, slmnn);
  const auto scenarios = ep::io::read_scenarios(scenarios_path);
  const int r = repeats > 0 ? repeats : cfg.eval.bench_repeats;
  const auto timings = ep::evaluation::bench(scenarios, methods, nets, r, method_options(cfg));
  std::string csv = "method,runs,wall_clock_us,p95_us\n";
  for (const auto& t : timings)
    csv += t.method + "," + std::to_string(t.runs) + "," + ep::evaluation::fmt(t.median_us) + "," +
           ep::evaluation::fmt(t.p95_us) + "\n";
  ep::io::write_text_file(out_csv, csv);
  for (const auto& t : timings)
    std::cout << t.method << ": median " << t.median_us << " us, p95 " << t.p95_us << " us over " << t.runs
              << " runs\n";
  return 0;
}

int exit_code(const ep::Error& e) {
  switch (ep::classify(e.kind())) {
    case ep::ErrorClass::Usage: return 2;
    case ep::ErrorClass::Numerical: return 3;
    case ep::ErrorClass::Io: return 4;
  }
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust massive-MIMO precoding: scenarios, datasets, training, evaluation"};
  app.require_subcommand(1);
  Common common;
  std::uint64_t seed_value = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "Run config (JSON with a version field)");
    sub->add_option("--seed", seed_value, "Top-level seed (overrides the config)");
    sub->add_option("--threads", common.threads, "Worker cap (fallback: EIGENPRECODE_THREADS)");
  };

  std::string out, scenarios, methods, lmnn, slmnn, json_out, dataset_path, net, curve;
  std::size_t n = 0, mc = 0;
  int repeats = 0, steps = 0;
  bool resume = false;

  auto* gs = app.add_subcommand("gen-scenarios", "Write n synthetic scenarios as JSON lines");
  add_common(gs);
  gs->add_option("--out", out, "Output .jsonl")->required();
  gs->add_option("--n", n, "Number of scenarios")->required();

  auto* gd = app.add_subcommand("gen-dataset", "Label scenarios with the iterative oracle");
  add_common(gd);
  gd->add_option("--out", out, "Output dataset .jsonl (sidecar .meta.json next to it)")->required();
  gd->add_option("--n", n, "Number of records (ignored with --scenarios)");
  gd->add_option("--scenarios", scenarios, "Label these scenarios instead of synthesizing");
  gd->add_flag("--resume", resume, "Keep existing complete records and continue");

  auto* tr = app.add_subcommand("train", "Train an LMNN or SLMNN");
  add_common(tr);
  tr->add_option("--dataset", dataset_path, "Dataset .jsonl")->required();
  tr->add_option("--net", net, "lmnn or slmnn")->required();
  tr->add_option("--out", out, "Output weights file")->required();
  tr->add_option("--curve", curve, "Loss-curve CSV");
  tr->add_option("--steps", steps, "Override the configured step count");

  auto* ev = app.add_subcommand("eval", "Monte-Carlo sum rates per method");
  add_common(ev);
  ev->add_option("--scenarios", scenarios, "Scenario .jsonl")->required();
  ev->add_option("--methods", methods, "Comma-separated: rzf,slnr,iterative,lmnn-framework,lowcx");
  ev->add_option("--lmnn", lmnn, "LMNN weights");
  ev->add_option("--slmnn", slmnn, "SLMNN weights");
  ev->add_option("--out", out, "Output CSV")->required();
  ev->add_option("--json", json_out, "Output JSON with per-user detail");
  ev->add_option("--mc", mc, "Monte-Carlo draws per scenario");

  auto* be = app.add_subcommand("bench", "Wall-clock of precoder computation");
  add_common(be);
  be->add_option("--scenarios", scenarios, "Scenario .jsonl")->required();
  be->add_option("--methods", methods, "Comma-separated method list");
  be->add_option("--lmnn", lmnn, "LMNN weights");
  be->add_option("--slmnn", slmnn, "SLMNN weights");
  be->add_option("--out", out, "Output CSV")->required();
  be->add_option("--repeats", repeats, "Repetitions per scenario (default 50)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    for (auto* sub : {gs, gd, tr, ev, be})
      if (sub->parsed() && sub->count("--seed") > 0) common.seed = seed_value;
    if (gs->parsed()) return cmd_gen_scenarios(common, out, n);
    if (gd->parsed()) {
      if (scenarios.empty() && gd->count("--n") == 0)
        throw ep::Error(ep::ErrorKind::InvalidArgument, "gen-dataset: give --n or --scenarios");
      return cmd_gen_dataset(common, out, n, scenarios, resume);
    }
    if (tr->parsed()) return cmd_train(common, dataset_path, net, out, curve, steps);
    if (ev->parsed()) return cmd_eval(common, scenarios, methods, lmnn, slmnn, out, json_out, mc);
    if (be->parsed()) return cmd_bench(common, scenarios, methods, lmnn, slmnn, out, repeats);
  } catch (const ep::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

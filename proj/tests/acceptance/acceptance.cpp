// Acceptance harness: prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.
//
//   acceptance --workdir DIR [--only 1,2,8]
//
// Datasets and trained weights live in DIR; dataset generation resumes from
// whatever complete records are already there.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "../unit/helpers.hpp"
#include "eigenprecode/baselines.hpp"
#include "eigenprecode/dataset.hpp"
#include "eigenprecode/evaluation.hpp"
#include "eigenprecode/iterative.hpp"
#include "eigenprecode/lowcx.hpp"
#include "eigenprecode/neural.hpp"
#include "eigenprecode/structure.hpp"

namespace fs = std::filesystem;
using namespace eigenprecode;
using namespace testing_support;
using linalg::cosine_similarity;

namespace {

constexpr std::uint64_t kSeed = 20240607;
constexpr std::size_t kRecords = 20000;
constexpr std::size_t kHeldOut = 500;
constexpr int kTrainSteps = 10000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string read_file(const std::string& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::string& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os << text;
}

/// Runs the CLI; its output is appended to `log`.
int cli(const std::string& args, const std::string& log) {
  const std::string cmd = std::string(EIGENPRECODE_CLI) + " " + args + " >>" + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

double sum_ub(const Precoder& p, const CovarianceSet& covs, double sigma2) {
  double s = 0.0;
  for (double r : iterative::upper_bound_rates(p, covs, sigma2)) s += r;
  return s;
}

double median_of(std::vector<double> x) { return evaluation::median(std::move(x)); }

// ---------------------------------------------------------------------------
// Criteria 1-3: random multipliers on desk instances

struct RoundTripStats {
  double mu_rel = 0.0;
  double eig_residual = 0.0;
  double slackness = 0.0;
  double sum_gap = 0.0;
  double margin_deficit = -1e300;  // max over rows of sigma2 - margin
  double seconds = 0.0;
  int failures = 0;
  std::string first_error;
};

const RoundTripStats& round_trip_stats() {
  static const RoundTripStats stats = [] {
    RoundTripStats st;
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(kSeed);
    const double betas[] = {0.0, 0.5, 1.0};
    const double snrs[] = {0.0, 10.0, 20.0};
    for (int i = 0; i < 200; ++i) {
      DeskInstance d = desk_instance(1000 + i, betas[i % 3], snrs[(i / 3) % 3]);
      const Multipliers mu{random_mu(4, d.cfg.P, rng)};
      try {
        const Precoder p = structure::recover_precoder(mu, d.covs, d.cfg, structure::default_eps(d.cfg));
        const Multipliers back = structure::mu_from_precoder(p, d.covs, d.cfg.sigma2);
        for (std::size_t k = 0; k < 4; ++k)
          st.mu_rel = std::max(st.mu_rel, std::abs(back.mu[k] - mu.mu[k]) / mu.mu[k]);
        const auto c = structure::constraint_values(p, d.covs, d.cfg.sigma2);
        for (std::size_t k = 0; k < 4; ++k) {
          auto [s, n] = structure::assemble_sn(k, mu, d.covs, d.cfg.sigma2);
          const CVector& u = p.directions[k];
          const CVector su = s * u;
          st.eig_residual = std::max(st.eig_residual, (su - p.gammas[k] * (n * u)).norm() / su.norm());
          st.slackness = std::max(st.slackness, std::abs(mu.mu[k] * c[k]));
        }
        st.sum_gap = std::max(st.sum_gap, std::abs(mu.sum() - p.total_power()));
        RMatrix q = structure::build_t(p.directions, p.gammas, d.covs);
        for (Eigen::Index j = 0; j < 4; ++j) q.col(j) *= p.powers[j];
        for (Eigen::Index k = 0; k < 4; ++k) {
          double off = 0.0;
          for (Eigen::Index j = 0; j < 4; ++j)
            if (j != k) off += std::abs(q(k, j));
          st.margin_deficit = std::max(st.margin_deficit, d.cfg.sigma2 - (q(k, k) - off));
        }
      } catch (const Error& e) {
        if (st.failures++ == 0) st.first_error = e.what();
      }
    }
    st.seconds = seconds_since(t0);
    return st;
  }();
  return stats;
}

Outcome criterion1() {
  const auto& s = round_trip_stats();
  return {s.failures == 0 && s.mu_rel <= 1e-8 && s.seconds <= 60.0,
          "200 instances, max rel mu error " + num(s.mu_rel) + ", " + num(s.seconds, 3) + " s" +
              (s.failures ? ", " + std::to_string(s.failures) + " errors: " + s.first_error : "")};
}

Outcome criterion2() {
  const auto& s = round_trip_stats();
  return {s.failures == 0 && s.eig_residual <= 1e-6 && s.slackness <= 1e-8,
          "max eigen residual " + num(s.eig_residual) + ", max |mu_k C_k| " + num(s.slackness)};
}

Outcome criterion3() {
  const auto& s = round_trip_stats();
  return {s.failures == 0 && s.sum_gap <= 1e-8 && s.margin_deficit <= 1e-10,
          "max |sum mu - sum rho| " + num(s.sum_gap) + ", max (sigma2 - dominance margin) " +
              num(s.margin_deficit)};
}

// ---------------------------------------------------------------------------
// Criterion 4: special cases of the direction structure

Outcome criterion4() {
  double worst_a = 1.0, worst_b = 1.0, worst_c = 1.0;
  std::mt19937_64 rng(kSeed + 4);
  std::uniform_real_distribution<double> ub(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    DeskInstance d = desk_instance(4000 + i, ub(rng), 20.0 * ub(rng) - 5.0);
    const auto dir = structure::directions_from_mu(Multipliers{std::vector<double>(4, 1.0)}, d.covs, d.cfg.sigma2);
    const Precoder slnr = baselines::slnr(d.covs, d.cfg);
    for (std::size_t k = 0; k < 4; ++k)
      worst_a = std::min(worst_a, cosine_similarity(dir.directions[k], slnr.directions[k]));
  }
  for (int i = 0; i < 50; ++i) {
    DeskInstance d = desk_instance(4100 + i, 1.0, 20.0 * ub(rng) - 5.0);
    const auto dir =
        structure::directions_from_mu(Multipliers{std::vector<double>(4, d.cfg.P / 4.0)}, d.covs, d.cfg.sigma2);
    const Precoder rzf = baselines::rzf(d.state, d.cfg);
    for (std::size_t k = 0; k < 4; ++k)
      worst_b = std::min(worst_b, cosine_similarity(dir.directions[k], rzf.directions[k]));
  }
  for (int i = 0; i < 50; ++i) {
    DeskInstance d = desk_instance(4200 + i, 0.0, 10.0, 4, 1, 1);
    const Multipliers mu{random_mu(4, d.cfg.P, rng)};
    const auto dir = structure::directions_from_mu(mu, d.covs, d.cfg.sigma2);
    for (std::size_t k = 0; k < 4; ++k) {
      auto [s, n] = structure::assemble_sn(k, mu, d.covs, d.cfg.sigma2);
      Eigen::Index best = 0;
      double best_val = -1.0;
      for (Eigen::Index b = 0; b < d.v.cols(); ++b) {
        const CVector col = d.v.col(b);
        const double val = col.dot(s * col).real() / col.dot(n * col).real();
        if (val > best_val) {
          best_val = val;
          best = b;
        }
      }
      worst_c = std::min(worst_c, cosine_similarity(dir.directions[k], d.v.col(best)));
    }
  }
  const double tol = 1.0 - 1e-8;
  return {worst_a >= tol && worst_b >= tol && worst_c >= tol,
          "min cosine: unit mu vs SLNR " + num(worst_a, 12) + ", beta=1 mu=1/K vs RZF " + num(worst_b, 12) +
              ", beta=0 N=1 vs best DFT column " + num(worst_c, 12)};
}

// ---------------------------------------------------------------------------
// Criterion 5: the maximum eigenvector is the right one

Outcome criterion5() {
  double worst_sum = 0.0;
  int swaps = 0, lowered = 0, errors = 0;
  std::mt19937_64 rng(kSeed + 5);
  for (int i = 0; i < 20; ++i) {
    DeskInstance d = desk_instance(5000 + i, 0.5, 10.0, 3);
    const Multipliers mu{random_mu(3, d.cfg.P, rng)};
    const auto best = structure::directions_from_mu(mu, d.covs, d.cfg.sigma2, linalg::EigenStrategy::Dense);
    const auto rho_best = structure::power_control(best.directions, best.gammas, d.covs, d.cfg.sigma2);
    double sum_best = 0.0;
    for (double r : rho_best) sum_best += r;
    for (std::size_t k = 0; k < 3; ++k) {
      ++swaps;
      try {
        auto [s, n] = structure::assemble_sn(k, mu, d.covs, d.cfg.sigma2);
        const auto pairs = oracle_generalized_eigs(s, n);
        auto dirs = best.directions;
        auto gammas = best.gammas;
        dirs[k] = pairs[1].vector;
        gammas[k] = pairs[1].value;
        const auto rho = structure::power_control(dirs, gammas, d.covs, d.cfg.sigma2);
        double sum = 0.0;
        for (double r : rho) sum += r;
        worst_sum = std::max(worst_sum, std::abs(sum - sum_best));
        const double achieved = sinr(Precoder{dirs, rho, {}}, d.covs, d.cfg.sigma2)[k];
        if (achieved < best.gammas[k] && std::abs(achieved - pairs[1].value) <= 1e-8 * best.gammas[k]) ++lowered;
      } catch (const Error&) {
        ++errors;
      }
    }
  }
  return {errors == 0 && worst_sum <= 1e-8 && lowered == swaps,
          std::to_string(swaps) + " swaps, max |sum rho change| " + num(worst_sum) + ", gamma lowered in " +
              std::to_string(lowered) + (errors ? ", " + std::to_string(errors) + " power-control errors" : "")};
}

// ---------------------------------------------------------------------------
// Criterion 6: iterative solver

Outcome criterion6() {
  std::mt19937_64 rng(kSeed + 6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_drop = 0.0;
  for (int i = 0; i < 100; ++i) {
    DeskInstance d = desk_instance(6000 + i, u(rng), 30.0 * u(rng) - 10.0);
    iterative::IterativeOptions o;
    o.n_starts = 3;
    o.seed = static_cast<std::uint64_t>(i);
    for (Precoder p : iterative::initial_points(d.state, d.covs, d.cfg, o)) {
      double prev = iterative::objective(p, d.covs, d.cfg.sigma2, {});
      for (int it = 0; it < 20; ++it) {
        p = iterative::iterate_once(p, d.covs, d.cfg, {});
        const double obj = iterative::objective(p, d.covs, d.cfg.sigma2, {});
        worst_drop = std::max(worst_drop, prev - obj);
        prev = obj;
      }
    }
  }
  double worst_single = 0.0;
  for (int i = 0; i < 20; ++i) {
    DeskInstance d = desk_instance(6200 + i, u(rng), 30.0 * u(rng) - 10.0, 1);
    const Precoder p = iterative::solve(d.state, d.covs, d.cfg, iterative::IterativeOptions{});
    Eigen::SelfAdjointEigenSolver<CMatrix> es(d.covs[0]);
    const double expected = std::log2(1.0 + d.cfg.P * es.eigenvalues().maxCoeff() / d.cfg.sigma2);
    worst_single = std::max(worst_single, std::abs(sum_ub(p, d.covs, d.cfg.sigma2) - expected));
  }
  return {worst_drop <= 1e-9 && worst_single <= 1e-6,
          "max objective drop " + num(worst_drop) + " over 100 instances x 3 starts x 20 iterations; "
          "max single-user gap " + num(worst_single)};
}

// ---------------------------------------------------------------------------
// Learned pipeline (criteria 7-10)

struct Pipeline {
  bool ready = false;
  std::string error;
  std::vector<dataset::DatasetRecord> lmnn_records;
  std::vector<std::size_t> held_out;
  evaluation::Nets nets;
  std::string workdir, log, slmnn_weights;
};

Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

std::string config_json(const std::string& dataset_extra) {
  return R"({"version": 1, "seed": )" + std::to_string(kSeed) + R"(, "training": {"steps": )" +
         std::to_string(kTrainSteps) + R"(, "eval_every": 500})" + dataset_extra + "}\n";
}

void build_pipeline(const std::string& workdir) {
  Pipeline& p = pipeline();
  p.workdir = workdir;
  p.log = workdir + "/pipeline.log";
  const std::string lm_cfg = workdir + "/lmnn_config.json", sl_cfg = workdir + "/slmnn_config.json";
  write_file(lm_cfg, config_json(""));
  write_file(sl_cfg, config_json(R"(, "dataset": {"beta": [0.0]})"));
  const std::string lm_data = workdir + "/lmnn.jsonl", sl_data = workdir + "/slmnn.jsonl";
  const std::string lm_w = workdir + "/lmnn.bin";
  p.slmnn_weights = workdir + "/slmnn.bin";
  const std::string n = std::to_string(kRecords);
  const std::vector<std::pair<std::string, std::string>> steps{
      {"LMNN dataset", "gen-dataset --config " + lm_cfg + " --n " + n + " --resume --out " + lm_data},
      {"SLMNN dataset", "gen-dataset --config " + sl_cfg + " --n " + n + " --resume --out " + sl_data},
      {"LMNN training", "train --config " + lm_cfg + " --dataset " + lm_data + " --net lmnn --out " + lm_w +
                            " --curve " + workdir + "/lmnn_curve.csv"},
      {"SLMNN training", "train --config " + sl_cfg + " --dataset " + sl_data + " --net slmnn --out " +
                             p.slmnn_weights + " --curve " + workdir + "/slmnn_curve.csv"}};
  for (const auto& [what, args] : steps) {
    const auto t0 = std::chrono::steady_clock::now();
    std::cerr << "[pipeline] " << what << " ..." << std::flush;
    const int code = cli(args, p.log);
    std::cerr << " exit " << code << " (" << num(seconds_since(t0), 4) << " s)\n";
    if (code != 0) {
      p.error = what + " failed with exit " + std::to_string(code) + " (see " + p.log + ")";
      return;
    }
  }
  try {
    p.lmnn_records = dataset::read_dataset(lm_data);
    // the held-out set is the test split the CLI's training never saw
    const auto sp = dataset::split(p.lmnn_records.size(), {0.8, 0.1, 0.1}, kSeed);
    p.held_out.assign(sp.test.begin(), sp.test.begin() + static_cast<std::ptrdiff_t>(std::min(kHeldOut, sp.test.size())));
    p.nets.lmnn = neural::load_weights(lm_w);
    p.nets.slmnn = neural::load_weights(p.slmnn_weights);
    p.ready = true;
  } catch (const std::exception& e) {
    p.error = e.what();
  }
}

Outcome not_ready() { return {false, "pipeline unavailable: " + pipeline().error}; }

Outcome criterion7() {
  Pipeline& p = pipeline();
  if (!p.ready) return not_ready();
  const dataset::Ranges grid{{-10.0, 0.0, 10.0, 20.0}, {0.0, 0.3, 0.6, 0.9}, 0.25};
  int checks = 0, violations = 0;
  double worst = -1e300;
  std::string worst_where;
  for (std::size_t cell = 0; cell < grid.cells(); ++cell) {
    const io::Scenario s = dataset::make_scenario(ScenarioConfig{}, grid, kSeed, "accept/jensen", cell);
    const auto reports =
        evaluation::compare(s.state, s.config, evaluation::method_names(), p.nets, 2000, stream_seed(kSeed, "accept/jensen/mc", cell));
    for (const auto& r : reports) {
      ++checks;
      const double excess = r.sum_rate_mc - (r.sum_rate_ub + 3.0 * r.stderr_mc);
      if (excess > 0.0) ++violations;
      if (excess > worst) {
        worst = excess;
        worst_where = r.method + " at " + num(r.snr_db) + " dB, beta " + num(r.beta);
      }
    }
  }
  return {violations == 0, std::to_string(violations) + "/" + std::to_string(checks) +
                               " (method, cell) pairs exceed ub + 3 stderr; largest excess " + num(worst) + " (" +
                               worst_where + ")"};
}

Outcome criterion8() {
  Pipeline& p = pipeline();
  if (!p.ready) return not_ready();
  std::vector<double> ratios;
  for (std::size_t i : p.held_out) {
    const auto& r = p.lmnn_records[i];
    const auto& c = r.scenario.config;
    const CovarianceSet covs = channel::covariance(r.scenario.state, channel::sampling_matrix(c));
    const Multipliers mu = evaluation::lmnn_multipliers(r.scenario.state, c, *p.nets.lmnn);
    const Precoder pre = structure::recover_precoder(mu, covs, c, structure::default_eps(c));
    ratios.push_back(sum_ub(pre, covs, c.sigma2) / r.oracle_rate);
  }
  const double med = median_of(ratios);
  return {med >= 0.93, std::to_string(ratios.size()) + " held-out records, median ratio " + num(med) +
                           ", 10th percentile " + num(evaluation::quantile(ratios, 0.1))};
}

struct BenchMedians {
  bool ok = false;
  double iterative = 0.0, lowcx = 0.0;
};

/// Median wall clock of iterative and lowcx through the CLI bench command.
BenchMedians bench_medians(const Pipeline& p, const std::string& scenarios, int starts) {
  const std::string tag = std::to_string(starts);
  const std::string cfg = p.workdir + "/bench_config_" + tag + ".json";
  const std::string out = p.workdir + "/bench_" + tag + ".csv";
  write_file(cfg, R"({"version": 1, "seed": )" + std::to_string(kSeed) + R"(, "iterative": {"n_starts": )" + tag +
                      R"(, "max_iters": 20, "tol": 0}})" + "\n");
  BenchMedians b;
  b.ok = cli("bench --config " + cfg + " --scenarios " + scenarios + " --methods iterative,lowcx --repeats 5 --slmnn " +
                 p.slmnn_weights + " --out " + out,
             p.log) == 0;
  std::stringstream ss(read_file(out));
  std::string line;
  while (std::getline(ss, line)) {
    std::stringstream ls(line);
    std::string method, runs, median;
    std::getline(ls, method, ',');
    std::getline(ls, runs, ',');
    std::getline(ls, median, ',');
    if (method == "iterative") b.iterative = std::stod(median);
    if (method == "lowcx") b.lowcx = std::stod(median);
  }
  return b;
}

Outcome criterion9() {
  Pipeline& p = pipeline();
  if (!p.ready) return not_ready();
  std::vector<double> ratios;
  std::vector<io::Scenario> bench_set;
  const lowcx::Slmnn net{&p.nets.slmnn->spec, &p.nets.slmnn->params};
  for (std::size_t i : p.held_out) {
    const auto& r = p.lmnn_records[i];
    const auto& c = r.scenario.config;
    const CovarianceSet covs = channel::covariance(r.scenario.state, channel::sampling_matrix(c));
    const Precoder pre = lowcx::run(r.scenario.state, c, net, structure::default_eps(c));
    ratios.push_back(sum_ub(pre, covs, c.sigma2) / r.oracle_rate);
    if (bench_set.size() < 20) bench_set.push_back(r.scenario);
  }
  const double med = median_of(ratios);
  const std::string scen = p.workdir + "/bench_scenarios.jsonl";
  io::write_scenarios(scen, bench_set);
  // the iterative baseline always runs its full 20 fixed-point iterations;
  // the gated comparison uses its default 10 starts, the single start is reported
  const auto full = bench_medians(p, scen, 10);
  const auto single = bench_medians(p, scen, 1);
  const double speed = full.iterative > 0.0 ? full.lowcx / full.iterative : 1e300;
  const double speed_single = single.iterative > 0.0 ? single.lowcx / single.iterative : 1e300;
  return {full.ok && med >= 0.85 && speed <= 0.5,
          "median ratio " + num(med) + " (10th percentile " + num(evaluation::quantile(ratios, 0.1)) +
              "); bench median lowcx " + num(full.lowcx) + " us vs iterative (10 starts x 20 iterations) " +
              num(full.iterative) + " us, ratio " + num(speed) + "; vs a single 20-iteration start " +
              num(single.iterative) + " us, ratio " + num(speed_single)};
}

Outcome criterion10() {
  Pipeline& p = pipeline();
  if (!p.ready) return not_ready();
  const dataset::Ranges cell{{20.0}, {0.3}, 0.25};
  const std::vector<std::string> methods{"rzf", "slnr", "lmnn-framework", "lowcx"};
  std::vector<evaluation::EvalReport> all;
  for (std::size_t i = 0; i < 100; ++i) {
    const io::Scenario s = dataset::make_scenario(ScenarioConfig{}, cell, kSeed, "accept/trend", i);
    const auto r = evaluation::compare(s.state, s.config, methods, p.nets, 2000, stream_seed(kSeed, "accept/trend/mc", i));
    all.insert(all.end(), r.begin(), r.end());
  }
  const auto agg = evaluation::aggregate(all);
  auto find = [&](const std::string& m) {
    return *std::find_if(agg.begin(), agg.end(), [&](const auto& a) { return a.method == m; });
  };
  const auto rzf = find("rzf"), slnr = find("slnr"), fw = find("lmnn-framework"), lc = find("lowcx");
  const double gap1 = fw.sum_rate_mc - slnr.sum_rate_mc, se1 = std::hypot(fw.stderr_mc, slnr.stderr_mc);
  const double gap2 = slnr.sum_rate_mc - rzf.sum_rate_mc, se2 = std::hypot(slnr.stderr_mc, rzf.stderr_mc);
  return {gap1 > 3.0 * se1 && gap2 > 3.0 * se2,
          "mean MC sum rate: framework " + num(fw.sum_rate_mc) + ", SLNR " + num(slnr.sum_rate_mc) + ", RZF " +
              num(rzf.sum_rate_mc) + " (lowcx " + num(lc.sum_rate_mc) + "); gaps " + num(gap1) + " and " +
              num(gap2) + " vs 3 pooled stderr " + num(3.0 * se1) + " and " + num(3.0 * se2)};
}

// ---------------------------------------------------------------------------
// Criterion 11: numerical stack

/// Max relative error of central differences over every parameter of `spec`.
double gradient_error(const neural::NetSpec& spec, double budget, std::uint64_t seed, int* checked,
                     int* retried) {
  Rng rng = make_rng(seed, "accept/grad");
  neural::NetParams p = neural::init_params(spec, rng);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 0.3);
  const auto lay = spec.layout();
  for (const auto& b : lay.conv)
    for (std::size_t i = 0; i < b.bias_len; ++i) p.values[b.bias + i] = u(rng) - 0.1;
  for (const auto& b : lay.fc)
    for (std::size_t i = 0; i < b.bias_len; ++i) p.values[b.bias + i] = u(rng);
  // outputs kept strictly positive so every layer receives gradient
  for (std::size_t i = 0; i < lay.fc.back().bias_len; ++i) p.values[lay.fc.back().bias + i] = 1.0 + u(rng);
  std::vector<neural::TrainingSample> data(2);
  for (auto& d : data) {
    d.x = RMatrix(spec.input_h, spec.input_w);
    for (Eigen::Index i = 0; i < d.x.size(); ++i) d.x.data()[i] = g(rng);
    d.nu = 10.0 * u(rng);
    for (int k = 0; k < spec.k_out; ++k) d.mu.push_back(u(rng));
  }
  std::vector<const neural::TrainingSample*> batch{&data[0], &data[1]};
  const auto an = neural::loss_and_gradient(spec, p, batch, budget, false, nullptr);
  auto central = [&](std::size_t i, double h) {
    const double keep = p.values[i];
    p.values[i] = keep + h;
    const double up = neural::loss_and_gradient(spec, p, batch, budget, false, nullptr).loss;
    p.values[i] = keep - h;
    const double down = neural::loss_and_gradient(spec, p, batch, budget, false, nullptr).loss;
    p.values[i] = keep;
    return (up - down) / (2.0 * h);
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    // a step that straddles a ReLU or max-pool switch is retried with smaller steps
    double err = 1e300;
    bool first = true;
    for (double h : {1e-5, 1e-6, 1e-7}) {
      const double fd = central(i, h);
      const double scale = std::max(std::abs(fd), std::abs(an.grad[i]));
      err = std::min(err, scale < 1e-7 ? 0.0 : std::abs(fd - an.grad[i]) / scale);
      if (err <= 1e-4) break;
      if (first) ++*retried;
      first = false;
    }
    worst = std::max(worst, err);
    ++*checked;
  }
  return worst;
}

Outcome criterion11() {
  // desk LMNN and SLMNN cover convolution, pooling, fully connected and the output
  // layer; the small budget makes the output rescaling active
  int checked = 0, retried = 0;
  double grad = 0.0;
  grad = std::max(grad, gradient_error(neural::desk_lmnn_spec(4), 1e6, 1, &checked, &retried));
  grad = std::max(grad, gradient_error(neural::desk_lmnn_spec(4), 1.0, 2, &checked, &retried));
  grad = std::max(grad, gradient_error(neural::desk_slmnn_spec(4), 1e6, 3, &checked, &retried));
  grad = std::max(grad, gradient_error(neural::desk_slmnn_spec(4), 1.0, 4, &checked, &retried));

  std::mt19937_64 rng(kSeed + 11);
  double cg = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Eigen::Index n = i % 2 ? 64 : 16;
    const CMatrix a = random_hpd(n, rng);
    const CVector b = random_vector(n, rng);
    const auto r = linalg::conjugate_gradient([&a](const CVector& v) -> CVector { return a * v; }, b, 1e-12,
                                              static_cast<int>(3 * n));
    const CVector direct = naive_solve(a, b);
    cg = std::max(cg, (r.x - direct).norm() / direct.norm());
  }

  double eig_value = 0.0, eig_vector = 0.0;
  for (int i = 0; i < 20; ++i) {
    DeskInstance d = desk_instance(11000 + i, 0.1 * (i % 10), 10.0);
    const Multipliers mu{random_mu(4, d.cfg.P, rng)};
    auto [s, n] = structure::assemble_sn(static_cast<std::size_t>(i % 4), mu, d.covs, d.cfg.sigma2);
    const auto oracle = oracle_generalized_eigs(s, n);
    for (auto strategy : {linalg::EigenStrategy::Dense, linalg::EigenStrategy::MatrixFree}) {
      const auto e = linalg::max_generalized_eigenpair(s, n, linalg::kEigenTol, strategy);
      eig_value = std::max(eig_value, std::abs(e.value - oracle[0].value) / oracle[0].value);
      eig_vector = std::max(eig_vector, 1.0 - cosine_similarity(e.vector, oracle[0].vector));
    }
  }
  return {grad <= 1e-4 && cg <= 1e-8 && eig_value <= 1e-8 && eig_vector <= 1e-8,
          "gradient max rel error " + num(grad) + " over " + std::to_string(checked) +
              " parameters (" + std::to_string(retried) + " re-checked at a smaller step); CG vs direct " + num(cg) + "; eigenvalue rel " + num(eig_value) +
              ", 1 - cosine " + num(eig_vector)};
}

// ---------------------------------------------------------------------------
// Criterion 12: CLI determinism

/// Drops the named CSV columns.
std::string drop_columns(const std::string& csv, const std::set<std::string>& names) {
  std::stringstream in(csv);
  std::string line, out;
  std::vector<bool> keep;
  bool header = true;
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ls, cell, ',')) {
      if (header) keep.push_back(!names.count(cell));
      if (col < keep.size() && keep[col]) out += cell + ",";
      ++col;
    }
    header = false;
    out += "\n";
  }
  return out;
}

void strip_timing(io::json& j) {
  if (j.is_object()) {
    j.erase("wall_clock_us");
    for (auto& [k, v] : j.items()) strip_timing(v);
  } else if (j.is_array()) {
    for (auto& v : j) strip_timing(v);
  }
}

Outcome criterion12(const std::string& workdir) {
  const std::string base = workdir + "/determinism";
  fs::remove_all(base);
  const std::string log = base + "/cli.log";
  std::vector<std::string> outputs[2];
  std::vector<std::string> differing;
  std::string failure;
  for (int run = 0; run < 2; ++run) {
    const std::string d = base + "/run" + std::to_string(run);
    fs::create_directories(d);
    const std::string cfg = d + "/config.json";
    write_file(cfg, R"({"version": 1, "seed": 99, "training": {"steps": 40, "eval_every": 20}})");
    const std::vector<std::pair<std::string, std::string>> cmds{
        {"gen-scenarios", "gen-scenarios --config " + cfg + " --n 6 --out " + d + "/s.jsonl"},
        {"gen-dataset", "gen-dataset --config " + cfg + " --n 12 --out " + d + "/d.jsonl"},
        {"train lmnn", "train --config " + cfg + " --dataset " + d + "/d.jsonl --net lmnn --out " + d +
                           "/l.bin --curve " + d + "/l.csv"},
        {"train slmnn", "train --config " + cfg + " --dataset " + d + "/d.jsonl --net slmnn --out " + d +
                            "/w.bin --curve " + d + "/w.csv"},
        {"eval", "eval --config " + cfg + " --scenarios " + d +
                     "/s.jsonl --methods rzf,slnr,iterative,lmnn-framework,lowcx --lmnn " + d + "/l.bin --slmnn " +
                     d + "/w.bin --mc 200 --out " + d + "/e.csv --json " + d + "/e.json"},
        {"bench", "bench --config " + cfg + " --scenarios " + d +
                      "/s.jsonl --methods rzf,slnr,iterative,lmnn-framework,lowcx --lmnn " + d + "/l.bin --slmnn " +
                      d + "/w.bin --repeats 1 --out " + d + "/b.csv"}};
    for (const auto& [name, args] : cmds) {
      const int code = cli(args, log);
      if (code != 0 && failure.empty()) failure = name + " exited " + std::to_string(code);
    }
    io::json ej;
    try {
      ej = io::read_json_file(d + "/e.json");
      strip_timing(ej);
    } catch (const std::exception&) {
    }
    outputs[run] = {read_file(d + "/s.jsonl"),
                    read_file(d + "/d.jsonl"),
                    read_file(d + "/d.meta.json"),
                    read_file(d + "/l.bin"),
                    read_file(d + "/l.csv"),
                    read_file(d + "/w.bin"),
                    read_file(d + "/w.csv"),
                    drop_columns(read_file(d + "/e.csv"), {"wall_clock_us"}),
                    ej.dump(),
                    drop_columns(read_file(d + "/b.csv"), {"wall_clock_us", "p95_us"})};
  }
  const char* names[] = {"scenarios", "dataset", "dataset meta", "lmnn weights", "lmnn curve", "slmnn weights",
                         "slmnn curve", "eval csv", "eval json", "bench csv"};
  for (std::size_t i = 0; i < outputs[0].size(); ++i)
    if (outputs[0][i] != outputs[1][i] || outputs[0][i].empty()) differing.push_back(names[i]);
  std::string detail = failure.empty() ? "" : failure + "; ";
  if (differing.empty()) {
    detail += "10 artifacts from 6 commands byte-identical across two runs (timing columns excluded)";
  } else {
    detail += "differ or empty:";
    for (const auto& n : differing) detail += " " + n;
  }
  return {failure.empty() && differing.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string workdir = "acceptance_work";
  std::string only;
  app.add_option("--workdir", workdir, "Directory for datasets, weights and logs");
  app.add_option("--only", only, "Comma-separated criterion numbers to run");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);
  workdir = fs::absolute(workdir).string();

  std::set<int> selected;
  {
    std::stringstream ss(only);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) selected.insert(std::stoi(item));
  }
  auto wanted = [&](int c) { return selected.empty() || selected.count(c) > 0; };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"round-trip identity", criterion1},
      {"eigen-equation residual and complementary slackness", criterion2},
      {"multiplier-power sum and diagonal dominance", criterion3},
      {"SLNR, RZF and DFT-column equivalences", criterion4},
      {"maximum eigenvector optimality", criterion5},
      {"iterative monotonicity and single-user optimum", criterion6},
      {"Jensen bound on Monte-Carlo rates", criterion7},
      {"LMNN framework quality", criterion8},
      {"low-complexity quality and speed", criterion9},
      {"trend: framework > SLNR > RZF at beta 0.3, 20 dB", criterion10},
      {"numerical stack", criterion11},
      {"CLI determinism", [&] { return criterion12(workdir); }}};

  bool needs_pipeline = false;
  for (int c = 7; c <= 10; ++c) needs_pipeline = needs_pipeline || wanted(c);
  if (needs_pipeline) build_pipeline(workdir);

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first << ": " << o.detail << " ["
              << num(seconds_since(t0), 3) << " s]" << std::endl;
  }
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << failed << " failing" << std::endl;
  return failed ? 1 : 0;
}

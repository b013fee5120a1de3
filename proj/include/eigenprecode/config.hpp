#pragma once

// Run configuration: one JSON document with a version field. Unknown keys are
// rejected and every failure names the offending field.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eigenprecode/dataset.hpp"
#include "eigenprecode/error.hpp"
#include "eigenprecode/evaluation.hpp"
#include "eigenprecode/io.hpp"
#include "eigenprecode/iterative.hpp"
#include "eigenprecode/neural.hpp"

namespace eigenprecode::config {

using io::json;

inline constexpr int kConfigVersion = 1;

struct TrainingConfig {
  int steps = 10000;
  int batch = 0;
  double lr = 1e-3;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  int eval_every = 500;
};

struct EvalConfig {
  std::vector<std::string> methods{"rzf", "slnr", "iterative"};
  std::size_t mc_samples = 2000;
  double eps = -1.0;
  int bench_repeats = 50;
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  ScenarioConfig scenario;
  dataset::Ranges ranges;
  dataset::DatasetOptions dataset;
  iterative::IterativeOptions iterative;  // online solver used by eval and bench
  std::string net = "desk";
  TrainingConfig training;
  EvalConfig eval;

  std::uint64_t require_seed() const {
    if (!seed) throw Error(ErrorKind::InvalidConfig, "seed: missing (set it in the config or pass --seed)");
    return *seed;
  }
};

inline void read_iterative(const json& j, iterative::IterativeOptions& o, const std::string& where,
                           bool allow_refine) {
  std::set<std::string> keys{"max_iters", "n_starts", "tol", "weights"};
  if (allow_refine) keys.insert({"refine_iters", "refine_tol"});
  io::reject_unknown(j, keys, where);
  o.max_iters = io::get_or(j, "max_iters", o.max_iters, where);
  o.n_starts = io::get_or(j, "n_starts", o.n_starts, where);
  o.tol = io::get_or(j, "tol", o.tol, where);
  o.weights = io::get_or(j, "weights", o.weights, where);
  o.refine_iters = io::get_or(j, "refine_iters", o.refine_iters, where);
  o.refine_tol = io::get_or(j, "refine_tol", o.refine_tol, where);
}

template <typename Fn>
void prefixed(const std::string& where, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::InvalidConfig) throw;
    const std::string msg = e.what();
    const std::string tag = "InvalidConfig: ";
    throw Error(ErrorKind::InvalidConfig,
                where + "." + (msg.rfind(tag, 0) == 0 ? msg.substr(tag.size()) : msg));
  }
}

inline RunConfig parse(const json& j) {
  io::reject_unknown(j, {"version", "seed", "scenario", "dataset", "iterative", "net", "training", "eval"},
                     "config");
  if (!j.contains("version")) throw Error(ErrorKind::InvalidConfig, "config.version: missing");
  const int version = io::get_field<int>(j, "version", "config");
  if (version != kConfigVersion)
    throw Error(ErrorKind::InvalidConfig,
                "config.version: unsupported " + std::to_string(version) + " (expected " +
                    std::to_string(kConfigVersion) + ")");
  RunConfig c;
  if (j.contains("seed")) c.seed = io::get_field<std::uint64_t>(j, "seed", "config");
  if (j.contains("scenario")) {
    c.scenario = io::config_from_json(j.at("scenario"), "config.scenario");
    if (j.at("scenario").contains("seed"))
      throw Error(ErrorKind::InvalidConfig, "config.scenario.seed: use the top-level seed");
  }
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    const std::string w = "config.dataset";
    io::reject_unknown(d, {"snr_db", "beta", "sparsity", "refine_iters", "refine_tol", "audit_tol",
                           "max_reject_fraction", "max_attempts", "n_starts", "max_iters"},
                       w);
    c.ranges.snr_db = io::get_or(d, "snr_db", c.ranges.snr_db, w);
    c.ranges.beta = io::get_or(d, "beta", c.ranges.beta, w);
    c.ranges.sparsity = io::get_or(d, "sparsity", c.ranges.sparsity, w);
    auto& it = c.dataset.iterative;
    it.refine_iters = io::get_or(d, "refine_iters", it.refine_iters, w);
    it.refine_tol = io::get_or(d, "refine_tol", it.refine_tol, w);
    it.n_starts = io::get_or(d, "n_starts", it.n_starts, w);
    it.max_iters = io::get_or(d, "max_iters", it.max_iters, w);
    c.dataset.audit_tol = io::get_or(d, "audit_tol", c.dataset.audit_tol, w);
    c.dataset.max_reject_fraction = io::get_or(d, "max_reject_fraction", c.dataset.max_reject_fraction, w);
    c.dataset.max_attempts = io::get_or(d, "max_attempts", c.dataset.max_attempts, w);
    prefixed(w, [&] { c.ranges.validate(); });
    if (!(c.dataset.audit_tol > 0.0)) throw Error(ErrorKind::InvalidConfig, w + ".audit_tol: must be > 0");
    if (!(c.dataset.max_reject_fraction >= 0.0 && c.dataset.max_reject_fraction <= 1.0))
      throw Error(ErrorKind::InvalidConfig, w + ".max_reject_fraction: must lie in [0, 1]");
    if (c.dataset.max_attempts < 1)
      throw Error(ErrorKind::InvalidConfig, w + ".max_attempts: must be >= 1");
  }
  if (j.contains("iterative")) read_iterative(j.at("iterative"), c.iterative, "config.iterative", false);
  prefixed("config.iterative", [&] { c.iterative.validate(c.scenario.K); });
  prefixed("config.dataset", [&] { c.dataset.iterative.validate(c.scenario.K); });
  if (j.contains("net")) {
    c.net = io::get_field<std::string>(j, "net", "config");
    if (c.net != "desk") throw Error(ErrorKind::InvalidConfig, "config.net: unknown spec '" + c.net + "' (valid: desk)");
  }
  if (j.contains("training")) {
    const json& t = j.at("training");
    const std::string w = "config.training";
    io::reject_unknown(t, {"steps", "batch", "lr", "val_fraction", "test_fraction", "eval_every"}, w);
    auto& tc = c.training;
    tc.steps = io::get_or(t, "steps", tc.steps, w);
    tc.batch = io::get_or(t, "batch", tc.batch, w);
    tc.lr = io::get_or(t, "lr", tc.lr, w);
    tc.val_fraction = io::get_or(t, "val_fraction", tc.val_fraction, w);
    tc.test_fraction = io::get_or(t, "test_fraction", tc.test_fraction, w);
    tc.eval_every = io::get_or(t, "eval_every", tc.eval_every, w);
    if (tc.steps < 1) throw Error(ErrorKind::InvalidConfig, w + ".steps: must be >= 1");
    if (tc.batch < 0) throw Error(ErrorKind::InvalidConfig, w + ".batch: must be >= 0");
    if (!(tc.lr > 0.0)) throw Error(ErrorKind::InvalidConfig, w + ".lr: must be > 0");
    if (!(tc.val_fraction >= 0.0 && tc.test_fraction >= 0.0 && tc.val_fraction + tc.test_fraction < 1.0))
      throw Error(ErrorKind::InvalidConfig, w + ".val_fraction: fractions must be >= 0 and sum below 1");
    if (tc.eval_every < 1) throw Error(ErrorKind::InvalidConfig, w + ".eval_every: must be >= 1");
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    const std::string w = "config.eval";
    io::reject_unknown(e, {"methods", "mc_samples", "eps", "bench_repeats"}, w);
    c.eval.methods = io::get_or(e, "methods", c.eval.methods, w);
    c.eval.mc_samples = io::get_or(e, "mc_samples", c.eval.mc_samples, w);
    c.eval.eps = io::get_or(e, "eps", c.eval.eps, w);
    c.eval.bench_repeats = io::get_or(e, "bench_repeats", c.eval.bench_repeats, w);
    for (const auto& m : c.eval.methods) {
      try {
        evaluation::check_method(m);
      } catch (const Error& err) {
        throw Error(ErrorKind::InvalidConfig, w + ".methods: " + std::string(err.what()).substr(17));
      }
    }
    if (c.eval.mc_samples < 100) throw Error(ErrorKind::InvalidConfig, w + ".mc_samples: must be >= 100");
    if (c.eval.bench_repeats < 1) throw Error(ErrorKind::InvalidConfig, w + ".bench_repeats: must be >= 1");
  }
  return c;
}

inline RunConfig load(const std::string& path) { return parse(io::read_json_file(path)); }

inline neural::NetSpec net_spec(const RunConfig& c, dataset::NetKind kind) {
  return kind == dataset::NetKind::Lmnn
             ? neural::lmnn_spec_for(c.scenario.antennas(), c.scenario.beams(), c.scenario.K)
             : neural::slmnn_spec_for(c.scenario.beams(), c.scenario.K);
}

}  // namespace eigenprecode::config

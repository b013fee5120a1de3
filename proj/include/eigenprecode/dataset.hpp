#pragma once

// Labeled dataset generation: synthesize a scenario per record, solve it with
// the multi-start iterative oracle, extract the Lagrange multipliers and keep
// the record only if the multipliers reproduce the oracle rate.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "eigenprecode/channel.hpp"
#include "eigenprecode/error.hpp"
#include "eigenprecode/features.hpp"
#include "eigenprecode/io.hpp"
#include "eigenprecode/iterative.hpp"
#include "eigenprecode/neural.hpp"
#include "eigenprecode/rng.hpp"
#include "eigenprecode/structure.hpp"

namespace eigenprecode::dataset {

using io::json;

struct Ranges {
  std::vector<double> snr_db{-10.0, 0.0, 10.0, 20.0};
  std::vector<double> beta{0.0, 0.3, 0.6, 0.9, 1.0};
  double sparsity = 0.25;

  std::size_t cells() const { return snr_db.size() * beta.size(); }

  /// Stratified round-robin: record i lands in grid cell i mod cells().
  std::pair<double, double> cell(std::size_t index) const {
    const std::size_t c = index % cells();
    return {snr_db[c / beta.size()], beta[c % beta.size()]};
  }

  void validate() const {
    if (snr_db.empty()) throw Error(ErrorKind::InvalidConfig, "snr_db: must not be empty");
    if (beta.empty()) throw Error(ErrorKind::InvalidConfig, "beta: must not be empty");
    for (double s : snr_db)
      if (!std::isfinite(s)) throw Error(ErrorKind::InvalidConfig, "snr_db: must be finite");
    for (double b : beta)
      if (!(b >= 0.0 && b <= 1.0)) throw Error(ErrorKind::InvalidConfig, "beta: must lie in [0, 1]");
    if (!(sparsity > 0.0 && sparsity <= 1.0))
      throw Error(ErrorKind::InvalidConfig, "sparsity: must lie in (0, 1]");
  }
};

inline iterative::IterativeOptions default_label_options() {
  iterative::IterativeOptions o;
  o.refine_iters = 2000;
  o.refine_tol = 1e-9;
  return o;
}

struct DatasetOptions {
  iterative::IterativeOptions iterative = default_label_options();
  double audit_tol = 5e-3;  // relative sum-rate mismatch allowed in the round-trip audit
  int max_attempts = 20;    // per record
  double max_reject_fraction = 0.05;
  unsigned threads = 0;
};

struct DatasetRecord {
  std::uint64_t index = 0;
  io::Scenario scenario;
  double nu = 0.0;
  std::vector<double> mu;
  double oracle_rate = 0.0;
  std::uint64_t seed = 0;
  int n_starts = 0;
  int iters = 0;
  int rejections = 0;
};

inline double snr_to_sigma2(double P, double snr_db) { return P * std::pow(10.0, -snr_db / 10.0); }

/// Scenario for grid cell of `index`; `stream` names the sub-stream.
inline io::Scenario make_scenario(const ScenarioConfig& base, const Ranges& ranges,
                                  std::uint64_t seed, const std::string& stream,
                                  std::uint64_t index, int attempt = 0) {
  const auto [snr, beta] = ranges.cell(static_cast<std::size_t>(index));
  io::Scenario s;
  s.config = base;
  s.config.sigma2 = snr_to_sigma2(base.P, snr);
  s.config.seed = stream_seed(seed, stream + "/" + std::to_string(index), static_cast<std::uint64_t>(attempt));
  Rng rng = make_rng(s.config.seed, "scenario");
  s.state = channel::synth_scenario(s.config, ranges.sparsity, channel::FixedBeta{beta}, rng);
  return s;
}

inline double nu_of(const ScenarioConfig& cfg) { return cfg.snr_db(); }

struct LabelOutcome {
  std::optional<DatasetRecord> record;
  std::string reject_reason;
};

/// Solves one scenario and audits its multipliers.
inline LabelOutcome label(const io::Scenario& s, const DatasetOptions& opts) {
  LabelOutcome out;
  const CMatrix v = channel::sampling_matrix(s.config);
  const CovarianceSet covs = channel::covariance(s.state, v);
  iterative::IterativeOptions it = opts.iterative;
  it.seed = s.config.seed;
  const std::vector<double> w = it.resolved_weights(s.config.K);
  try {
    const Precoder best = iterative::solve(s.state, covs, s.config, it);
    const Multipliers mu = structure::mu_from_precoder(best, covs, s.config.sigma2);
    mu.validate(s.config.P);
    const double rate = iterative::objective(best, covs, s.config.sigma2, w);
    const Precoder rec = structure::recover_precoder(mu, covs, s.config, structure::default_eps(s.config));
    const double rec_rate = iterative::objective(rec, covs, s.config.sigma2, w);
    if (!(std::abs(rec_rate - rate) <= opts.audit_tol * std::abs(rate))) {
      out.reject_reason = "audit";
      return out;
    }
    DatasetRecord r;
    r.scenario = s;
    r.nu = nu_of(s.config);
    r.mu = mu.mu;
    r.oracle_rate = std::max(0.0, rate);
    r.seed = s.config.seed;
    r.n_starts = it.n_starts;
    r.iters = it.max_iters;
    out.record = std::move(r);
  } catch (const Error& e) {
    if (classify(e.kind()) != ErrorClass::Numerical) throw;
    out.reject_reason = to_string(e.kind());
  }
  return out;
}

struct RecordResult {
  DatasetRecord record;
  std::map<std::string, int> reasons;
};

inline RecordResult generate_record(std::uint64_t index, const ScenarioConfig& base,
                                    const Ranges& ranges, const DatasetOptions& opts,
                                    std::uint64_t seed) {
  RecordResult res;
  for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
    LabelOutcome o = label(make_scenario(base, ranges, seed, "dataset", index, attempt), opts);
    if (o.record) {
      res.record = std::move(*o.record);
      res.record.index = index;
      res.record.rejections = attempt;
      return res;
    }
    ++res.reasons[o.reject_reason];
  }
  std::string why;
  for (const auto& [k, n] : res.reasons) why += " " + k + "=" + std::to_string(n);
  throw Error(ErrorKind::TooManyRejections,
              "record " + std::to_string(index) + " rejected " + std::to_string(opts.max_attempts) +
                  " times:" + why);
}

struct GenerateStats {
  std::size_t records = 0;
  std::size_t rejections = 0;
  std::map<std::string, int> reasons;
  double rejection_rate() const {
    const std::size_t tries = records + rejections;
    return tries ? static_cast<double>(rejections) / static_cast<double>(tries) : 0.0;
  }
};

inline std::size_t rejection_cap(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
}

/// Generates records [begin, end) in index order, handing each to `sink`.
/// Work proceeds in chunks so records stream out while later ones compute.
inline GenerateStats generate_range(std::uint64_t begin, std::uint64_t end, std::size_t n_total,
                                    const ScenarioConfig& base, const Ranges& ranges,
                                    const DatasetOptions& opts, std::uint64_t seed,
                                    const std::function<void(const DatasetRecord&)>& sink,
                                    std::size_t prior_rejections = 0) {
  base.validate();
  ranges.validate();
  opts.iterative.validate(base.K);
  const unsigned threads = resolve_threads(opts.threads);
  const std::size_t chunk = std::max<std::size_t>(1, 8 * threads);
  const std::size_t cap = rejection_cap(n_total, opts.max_reject_fraction);
  GenerateStats stats;
  stats.rejections = prior_rejections;
  for (std::uint64_t lo = begin; lo < end; lo += chunk) {
    const std::uint64_t hi = std::min<std::uint64_t>(end, lo + chunk);
    std::vector<RecordResult> batch(hi - lo);
    parallel_for(batch.size(), threads,
                 [&](std::size_t i) { batch[i] = generate_record(lo + i, base, ranges, opts, seed); });
    for (auto& r : batch) {
      stats.rejections += static_cast<std::size_t>(r.record.rejections);
      for (const auto& [k, c] : r.reasons) stats.reasons[k] += c;
      if (stats.rejections > cap) {
        std::string why;
        for (const auto& [k, c] : stats.reasons) why += " " + k + "=" + std::to_string(c);
        throw Error(ErrorKind::TooManyRejections,
                    std::to_string(stats.rejections) + " rejections exceed the cap of " +
                        std::to_string(cap) + " for " + std::to_string(n_total) + " records:" + why);
      }
      ++stats.records;
      sink(r.record);
    }
  }
  return stats;
}

inline std::vector<DatasetRecord> generate(std::size_t n, const ScenarioConfig& base,
                                           const Ranges& ranges, const DatasetOptions& opts,
                                           std::uint64_t seed, GenerateStats* stats = nullptr) {
  std::vector<DatasetRecord> out;
  out.reserve(n);
  GenerateStats s = generate_range(0, n, n, base, ranges, opts, seed,
                                   [&](const DatasetRecord& r) { out.push_back(r); });
  if (stats) *stats = s;
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline json to_json(const DatasetRecord& r) {
  json j = io::to_json(r.scenario);
  j["index"] = r.index;
  j["nu"] = r.nu;
  j["mu"] = r.mu;
  j["oracle_rate"] = r.oracle_rate;
  j["meta"] = json{{"seed", r.seed}, {"n_starts", r.n_starts}, {"iters", r.iters},
                   {"rejections", r.rejections}};
  return j;
}

inline DatasetRecord record_from_json(const json& j) {
  DatasetRecord r;
  r.scenario = io::scenario_from_json(j, {"index", "nu", "mu", "oracle_rate", "meta"});
  r.index = io::get_field<std::uint64_t>(j, "index", "record");
  r.nu = io::get_field<double>(j, "nu", "record");
  r.mu = io::get_field<std::vector<double>>(j, "mu", "record");
  r.oracle_rate = io::get_field<double>(j, "oracle_rate", "record");
  const json& m = j.at("meta");
  io::reject_unknown(m, {"seed", "n_starts", "iters", "rejections"}, "record.meta");
  r.seed = io::get_field<std::uint64_t>(m, "seed", "record.meta");
  r.n_starts = io::get_field<int>(m, "n_starts", "record.meta");
  r.iters = io::get_field<int>(m, "iters", "record.meta");
  r.rejections = io::get_or<int>(m, "rejections", 0, "record.meta");
  if (r.mu.size() != static_cast<std::size_t>(r.scenario.config.K))
    throw Error(ErrorKind::InvalidConfig, "record.mu: length must equal K");
  return r;
}

inline std::vector<DatasetRecord> read_dataset(const std::string& path) {
  std::vector<DatasetRecord> out;
  const auto lines = io::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i)
    out.push_back(record_from_json(io::parse_json(lines[i], path + ":" + std::to_string(i + 1))));
  return out;
}

inline json ranges_to_json(const Ranges& r) {
  return json{{"snr_db", r.snr_db}, {"beta", r.beta}, {"sparsity", r.sparsity}};
}

inline json meta_json(const ScenarioConfig& base, const Ranges& ranges, const DatasetOptions& opts,
                      std::uint64_t seed, const GenerateStats& stats) {
  json reasons = json::object();
  for (const auto& [k, c] : stats.reasons) reasons[k] = c;
  return json{{"version", 1},
              {"seed", seed},
              {"config", io::to_json(base)},
              {"ranges", ranges_to_json(ranges)},
              {"iterative",
               {{"max_iters", opts.iterative.max_iters},
                {"n_starts", opts.iterative.n_starts},
                {"tol", opts.iterative.tol},
                {"refine_iters", opts.iterative.refine_iters},
                {"refine_tol", opts.iterative.refine_tol}}},
              {"records", stats.records},
              {"rejections", stats.rejections},
              {"rejection_rate", stats.rejection_rate()},
              {"reject_reasons", reasons}};
}

// ---------------------------------------------------------------------------
// Splits and training samples

struct Split {
  std::vector<std::size_t> train, val, test;
};

/// Seeded shuffle, then consecutive blocks of round(f * n) (test takes the rest).
inline Split split(std::size_t n, const std::array<double, 3>& fractions, std::uint64_t seed) {
  for (double f : fractions)
    if (!(f >= 0.0 && f <= 1.0)) throw Error(ErrorKind::BadFractions, "fractions must lie in [0, 1]");
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorKind::BadFractions, "fractions must sum to 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, "split");
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train,
                              static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n))));
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

enum class NetKind { Lmnn, Slmnn };

inline neural::TrainingSample to_sample(const DatasetRecord& r, NetKind kind) {
  neural::TrainingSample s;
  s.x = kind == NetKind::Lmnn ? features::lmnn_input(r.scenario.state)
                              : features::slmnn_input(r.scenario.state);
  s.nu = r.nu;
  s.mu = r.mu;
  return s;
}

inline std::vector<neural::TrainingSample> to_samples(const std::vector<DatasetRecord>& records,
                                                      const std::vector<std::size_t>& idx,
                                                      NetKind kind) {
  std::vector<neural::TrainingSample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(to_sample(records[i], kind));
  return out;
}

}  // namespace eigenprecode::dataset

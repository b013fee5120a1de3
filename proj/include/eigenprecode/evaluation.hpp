#pragma once

// Monte-Carlo ergodic rates, method dispatch and timing.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eigenprecode/baselines.hpp"
#include "eigenprecode/channel.hpp"
#include "eigenprecode/error.hpp"
#include "eigenprecode/features.hpp"
#include "eigenprecode/io.hpp"
#include "eigenprecode/iterative.hpp"
#include "eigenprecode/lowcx.hpp"
#include "eigenprecode/neural.hpp"
#include "eigenprecode/precoder.hpp"
#include "eigenprecode/rng.hpp"
#include "eigenprecode/structure.hpp"

namespace eigenprecode::evaluation {

struct McResult {
  std::vector<double> rates;
  std::vector<double> stderrs;
  double sum_rate = 0.0;
  double sum_stderr = 0.0;
  std::size_t samples = 0;
};

inline constexpr std::size_t kDrawsPerStream = 256;

/// Delete-one jackknife standard error of the sample mean.
inline double jackknife_stderr(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  double total = 0.0;
  for (double v : x) total += v;
  const double nd = static_cast<double>(n);
  double mean_loo = 0.0;
  std::vector<double> loo(n);
  for (std::size_t i = 0; i < n; ++i) {
    loo[i] = (total - x[i]) / (nd - 1.0);
    mean_loo += loo[i];
  }
  mean_loo /= nd;
  double ss = 0.0;
  for (double v : loo) ss += (v - mean_loo) * (v - mean_loo);
  return std::sqrt((nd - 1.0) / nd * ss);
}

/// Per-user ergodic rates E log2(sigma2 + sum_i |h_k^H p_i|^2) - E log2(sigma2 + sum_{i != k} ...).
/// Draw j comes from stream j / 256 of `seed`, so every precoder evaluated with
/// the same seed sees the same channels regardless of the thread count.
inline McResult ergodic_rates_mc(const Precoder& pre, const ChannelState& state,
                                 const ScenarioConfig& cfg, std::size_t n_samples, std::uint64_t seed,
                                 unsigned threads = 0, const CMatrix* v_cached = nullptr) {
  if (n_samples < 100) throw Error(ErrorKind::InvalidArgument, "ergodic_rates_mc: need >= 100 samples");
  const CMatrix v = v_cached ? *v_cached : channel::sampling_matrix(cfg);
  const std::size_t users = state.users.size();
  std::vector<CVector> p(users);
  for (std::size_t k = 0; k < users; ++k) p[k] = pre.vector(k);
  // per-draw per-user rate samples and per-draw sum-rate
  std::vector<std::vector<double>> per_user(users, std::vector<double>(n_samples));
  std::vector<double> sums(n_samples);
  const std::size_t streams = (n_samples + kDrawsPerStream - 1) / kDrawsPerStream;
  parallel_for(streams, resolve_threads(threads), [&](std::size_t s) {
    Rng rng = make_rng(seed, "eval/stream", s);
    const std::size_t end = std::min(n_samples, (s + 1) * kDrawsPerStream);
    std::vector<double> gains(users);
    for (std::size_t j = s * kDrawsPerStream; j < end; ++j) {
      const std::vector<CVector> h = channel::posterior_sample(state, v, rng);
      double sum = 0.0;
      for (std::size_t k = 0; k < users; ++k) {
        double total = cfg.sigma2;
        for (std::size_t i = 0; i < users; ++i) {
          gains[i] = std::norm(h[k].dot(p[i]));
          total += gains[i];
        }
        const double interference = total - gains[k];
        const double r = std::log2(total) - std::log2(interference);
        per_user[k][j] = r;
        sum += r;
      }
      sums[j] = sum;
    }
  });
  McResult out;
  out.samples = n_samples;
  for (std::size_t k = 0; k < users; ++k) {
    double m = 0.0;
    for (double r : per_user[k]) m += r;
    out.rates.push_back(m / static_cast<double>(n_samples));
    out.stderrs.push_back(jackknife_stderr(per_user[k]));
  }
  double m = 0.0;
  for (double s : sums) m += s;
  out.sum_rate = m / static_cast<double>(n_samples);
  out.sum_stderr = jackknife_stderr(sums);
  return out;
}

// ---------------------------------------------------------------------------
// Methods

inline const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"rzf", "slnr", "iterative", "lmnn-framework", "lowcx"};
  return names;
}

inline void check_method(const std::string& m) {
  const auto& names = method_names();
  if (std::find(names.begin(), names.end(), m) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw Error(ErrorKind::InvalidArgument, "unknown method '" + m + "' (valid: " + list + ")");
  }
}

struct Nets {
  std::optional<neural::LoadedNet> lmnn;
  std::optional<neural::LoadedNet> slmnn;
};

struct MethodOptions {
  iterative::IterativeOptions iterative;  // 20 iterations, 10 starts
  double eps = -1.0;                      // < 0: default 1e-3 P / K
  linalg::EigenStrategy lowcx_strategy = linalg::EigenStrategy::MatrixFree;
};

inline double resolved_eps(const MethodOptions& o, const ScenarioConfig& cfg) {
  return o.eps >= 0.0 ? o.eps : structure::default_eps(cfg);
}

/// Multipliers predicted by the LMNN.
inline Multipliers lmnn_multipliers(const ChannelState& state, const ScenarioConfig& cfg,
                                    const neural::LoadedNet& net) {
  if (net.spec.k_out != cfg.K || net.spec.input_h != 2 * cfg.antennas() + cfg.beams())
    throw Error(ErrorKind::ShapeMismatch, "LMNN spec does not match the scenario config");
  const RVector mu =
      neural::forward(net.spec, net.params, features::lmnn_input(state), cfg.snr_db(), cfg.P, false);
  return Multipliers{{mu.data(), mu.data() + mu.size()}};
}

/// Computes the precoder of one method. Everything inside is what gets timed.
inline Precoder compute_precoder(const std::string& method, const ChannelState& state,
                                 const ScenarioConfig& cfg, const Nets& nets,
                                 const MethodOptions& opts) {
  check_method(method);
  if (method == "rzf") return baselines::rzf(state, cfg);
  if (method == "slnr") return baselines::slnr(channel::covariance(state, cfg), cfg);
  if (method == "iterative") {
    iterative::IterativeOptions it = opts.iterative;
    it.seed = cfg.seed;
    return iterative::solve(state, channel::covariance(state, cfg), cfg, it);
  }
  if (method == "lmnn-framework") {
    if (!nets.lmnn) throw Error(ErrorKind::MissingWeights, "lmnn-framework needs LMNN weights");
    const Multipliers mu = lmnn_multipliers(state, cfg, *nets.lmnn);
    return structure::recover_precoder(mu, channel::covariance(state, cfg), cfg, resolved_eps(opts, cfg));
  }
  if (!nets.slmnn) throw Error(ErrorKind::MissingWeights, "lowcx needs SLMNN weights");
  const lowcx::Slmnn net{&nets.slmnn->spec, &nets.slmnn->params};
  return lowcx::run(state, cfg, net, resolved_eps(opts, cfg), opts.lowcx_strategy);
}

inline void require_nets(const std::vector<std::string>& methods, const Nets& nets) {
  for (const auto& m : methods) {
    check_method(m);
    if (m == "lmnn-framework" && !nets.lmnn)
      throw Error(ErrorKind::MissingWeights, "lmnn-framework needs --lmnn weights");
    if (m == "lowcx" && !nets.slmnn) throw Error(ErrorKind::MissingWeights, "lowcx needs --slmnn weights");
  }
}

inline double mean_beta(const ChannelState& state) {
  double s = 0.0;
  for (const auto& u : state.users) s += u.beta;
  return state.users.empty() ? 0.0 : s / static_cast<double>(state.users.size());
}

struct EvalReport {
  std::string method;
  double snr_db = 0.0;
  double beta = 0.0;
  double sum_rate_mc = 0.0;
  double stderr_mc = 0.0;
  double sum_rate_ub = 0.0;
  std::vector<double> per_user_rates;
  std::vector<double> per_user_stderr;
  std::vector<double> per_user_ub;
  double wall_clock_us = 0.0;
  std::size_t mc_samples = 0;
};

/// Evaluates each method on the same Monte-Carlo draws (seeded by `seed`).
inline std::vector<EvalReport> compare(const ChannelState& state, const ScenarioConfig& cfg,
                                       const std::vector<std::string>& methods, const Nets& nets,
                                       std::size_t n_samples, std::uint64_t seed,
                                       const MethodOptions& opts = {}, unsigned threads = 0) {
  require_nets(methods, nets);
  channel::validate_state(state, cfg);
  const CMatrix v = channel::sampling_matrix(cfg);
  const CovarianceSet covs = channel::covariance(state, v);
  std::vector<EvalReport> out;
  for (const auto& m : methods) {
    const auto t0 = std::chrono::steady_clock::now();
    const Precoder pre = compute_precoder(m, state, cfg, nets, opts);
    const auto t1 = std::chrono::steady_clock::now();
    EvalReport r;
    r.method = m;
    r.snr_db = cfg.snr_db();
    r.beta = mean_beta(state);
    r.wall_clock_us = std::chrono::duration<double, std::micro>(t1 - t0).count();
    const McResult mc = ergodic_rates_mc(pre, state, cfg, n_samples, seed, threads, &v);
    r.sum_rate_mc = mc.sum_rate;
    r.stderr_mc = mc.sum_stderr;
    r.per_user_rates = mc.rates;
    r.per_user_stderr = mc.stderrs;
    r.mc_samples = n_samples;
    r.per_user_ub = iterative::upper_bound_rates(pre, covs, cfg.sigma2);
    for (double u : r.per_user_ub) r.sum_rate_ub += u;
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output

/// Shortest decimal form that round-trips.
inline std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline const char* kCsvHeader = "method,snr_db,beta,sum_rate_mc,stderr,sum_rate_ub,wall_clock_us,mc_samples";

inline std::string csv_row(const std::string& method, double snr, double beta, double mc, double se,
                           double ub, double us, std::size_t samples) {
  return method + "," + fmt(snr) + "," + fmt(beta) + "," + fmt(mc) + "," + fmt(se) + "," + fmt(ub) +
         "," + fmt(us) + "," + std::to_string(samples);
}

inline std::string csv_row(const EvalReport& r) {
  return csv_row(r.method, r.snr_db, r.beta, r.sum_rate_mc, r.stderr_mc, r.sum_rate_ub,
                 r.wall_clock_us, r.mc_samples);
}

inline io::json to_json(const EvalReport& r) {
  return io::json{{"method", r.method},
                  {"snr_db", r.snr_db},
                  {"beta", r.beta},
                  {"sum_rate_mc", r.sum_rate_mc},
                  {"stderr", r.stderr_mc},
                  {"sum_rate_ub", r.sum_rate_ub},
                  {"per_user_rates", r.per_user_rates},
                  {"per_user_stderr", r.per_user_stderr},
                  {"per_user_ub", r.per_user_ub},
                  {"wall_clock_us", r.wall_clock_us},
                  {"mc_samples", r.mc_samples}};
}

struct Aggregate {
  std::string method;
  double snr_db = 0.0;
  double beta = 0.0;
  double sum_rate_mc = 0.0;
  double stderr_mc = 0.0;  // of the mean across scenarios, pooled from per-scenario stderrs
  double sum_rate_ub = 0.0;
  double wall_clock_us = 0.0;
  std::size_t mc_samples = 0;
  std::size_t count = 0;
};

/// Means per (method, snr, beta) in first-appearance order.
inline std::vector<Aggregate> aggregate(const std::vector<EvalReport>& reports) {
  std::vector<Aggregate> out;
  std::vector<double> var;
  for (const auto& r : reports) {
    std::size_t i = 0;
    for (; i < out.size(); ++i)
      if (out[i].method == r.method && out[i].snr_db == r.snr_db && out[i].beta == r.beta) break;
    if (i == out.size()) {
      Aggregate a;
      a.method = r.method;
      a.snr_db = r.snr_db;
      a.beta = r.beta;
      out.push_back(a);
      var.push_back(0.0);
    }
    Aggregate& a = out[i];
    a.sum_rate_mc += r.sum_rate_mc;
    a.sum_rate_ub += r.sum_rate_ub;
    a.wall_clock_us += r.wall_clock_us;
    a.mc_samples += r.mc_samples;
    var[i] += r.stderr_mc * r.stderr_mc;
    ++a.count;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double n = static_cast<double>(out[i].count);
    out[i].sum_rate_mc /= n;
    out[i].sum_rate_ub /= n;
    out[i].wall_clock_us /= n;
    out[i].stderr_mc = std::sqrt(var[i]) / n;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Timing

struct Timing {
  std::string method;
  std::size_t runs = 0;
  double median_us = 0.0;
  double p95_us = 0.0;
};

/// Nearest-rank quantile of an unsorted sample.
inline double quantile(std::vector<double> x, double q) {
  if (x.empty()) return 0.0;
  std::sort(x.begin(), x.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(x.size())));
  return x[std::min(x.size() - 1, rank == 0 ? 0 : rank - 1)];
}

inline double median(std::vector<double> x) {
  if (x.empty()) return 0.0;
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  return n % 2 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

/// Times `repeats` precoder computations per method and scenario.
inline std::vector<Timing> bench(const std::vector<io::Scenario>& scenarios,
                                 const std::vector<std::string>& methods, const Nets& nets,
                                 int repeats, const MethodOptions& opts = {}) {
  if (repeats < 1) throw Error(ErrorKind::InvalidArgument, "bench: repeats must be >= 1");
  require_nets(methods, nets);
  std::vector<Timing> out;
  for (const auto& m : methods) {
    std::vector<double> times;
    for (const auto& s : scenarios)
      for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const Precoder pre = compute_precoder(m, s.state, s.config, nets, opts);
        const auto t1 = std::chrono::steady_clock::now();
        if (pre.size() != s.state.size()) throw Error(ErrorKind::InvalidArgument, "bench: bad precoder");
        times.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
      }
    Timing t;
    t.method = m;
    t.runs = times.size();
    t.median_us = median(times);
    t.p95_us = quantile(times, 0.95);
    out.push_back(t);
  }
  return out;
}

}  // namespace eigenprecode::evaluation

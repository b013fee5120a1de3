#pragma once

// A small CNN + fully-connected regressor mapping CSI features and the SNR to
// Lagrange multipliers. Convolutions use zero "same" padding and stride 1,
// followed by ReLU and non-overlapping max pooling. The flattened feature is
// concatenated with the SNR (dB) and decoded by ReLU FC layers with dropout.
// The output head applies ReLU and rescales so the outputs sum to at most P.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "eigenprecode/error.hpp"
#include "eigenprecode/linalg.hpp"
#include "eigenprecode/rng.hpp"

namespace eigenprecode::neural {

struct ConvStage {
  int kernel_h = 3;
  int kernel_w = 3;
  int filters = 1;
  int pool_h = 1;
  int pool_w = 1;
  bool operator==(const ConvStage&) const = default;
};

struct NetSpec {
  int input_h = 1;
  int input_w = 1;
  std::vector<ConvStage> conv;
  std::vector<int> fc_widths;  // last entry is the output width
  int k_out = 1;
  double dropout = 0.5;

  bool operator==(const NetSpec&) const = default;

  struct Shape {
    int c, h, w;
  };

  /// Tensor shape after each conv stage (post pooling); [0] is the input.
  std::vector<Shape> stage_shapes() const {
    std::vector<Shape> shapes{{1, input_h, input_w}};
    for (const auto& s : conv) {
      const Shape& in = shapes.back();
      shapes.push_back({s.filters, in.h / s.pool_h, in.w / s.pool_w});
    }
    return shapes;
  }

  int feature_size() const {
    const Shape s = stage_shapes().back();
    return s.c * s.h * s.w;
  }

  void validate() const {
    auto fail = [](const std::string& why) { throw Error(ErrorKind::ShapeMismatch, "NetSpec: " + why); };
    if (input_h < 1 || input_w < 1) fail("input dims must be >= 1");
    int h = input_h, w = input_w;
    for (std::size_t i = 0; i < conv.size(); ++i) {
      const auto& s = conv[i];
      if (s.kernel_h < 1 || s.kernel_w < 1 || s.filters < 1 || s.pool_h < 1 || s.pool_w < 1)
        fail("stage " + std::to_string(i) + " has a non-positive size");
      if (h % s.pool_h != 0 || w % s.pool_w != 0)
        fail("stage " + std::to_string(i) + " pooling does not divide " + std::to_string(h) +
             "x" + std::to_string(w));
      h /= s.pool_h;
      w /= s.pool_w;
    }
    if (fc_widths.empty() || fc_widths.back() != k_out) fail("final FC width must equal k_out");
    for (int f : fc_widths)
      if (f < 1) fail("FC widths must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  }

  /// Offsets of every (weights, bias) block in the flat parameter vector.
  struct Layout {
    struct Block {
      std::size_t weights, weights_len, bias, bias_len;
    };
    std::vector<Block> conv, fc;
    std::size_t total = 0;
  };

  Layout layout() const {
    Layout l;
    std::size_t off = 0;
    auto add = [&](std::size_t wlen, std::size_t blen) {
      Layout::Block b{off, wlen, off + wlen, blen};
      off += wlen + blen;
      return b;
    };
    int channels = 1;
    for (const auto& s : conv) {
      l.conv.push_back(add(static_cast<std::size_t>(s.filters) * channels * s.kernel_h * s.kernel_w,
                           static_cast<std::size_t>(s.filters)));
      channels = s.filters;
    }
    int in = feature_size() + 1;
    for (int width : fc_widths) {
      l.fc.push_back(add(static_cast<std::size_t>(width) * in, static_cast<std::size_t>(width)));
      in = width;
    }
    l.total = off;
    return l;
  }
};

/// Flat parameter vector laid out per NetSpec::layout, plus the input scale
/// (features are divided by it before the first convolution).
struct NetParams {
  std::vector<double> values;
  double input_scale = 1.0;
};

struct TrainingSample {
  RMatrix x;  // input_h x input_w
  double nu = 0.0;
  std::vector<double> mu;
};

// ---------------------------------------------------------------------------
// Desk-scale architectures

/// LMNN for a 96 x K input (16 antennas, 4x oversampling).
inline NetSpec desk_lmnn_spec(int users) {
  NetSpec s;
  s.input_h = 96;
  s.input_w = users;
  s.conv = {{12, 3, 4, 4, 1}, {6, 3, 8, 4, 1}, {4, 3, 4, 3, 1}, {3, 3, 2, 2, 1}};
  s.fc_widths = {128, users};
  s.k_out = users;
  return s;
}

/// SLMNN for a 64 x K input.
inline NetSpec desk_slmnn_spec(int users) {
  NetSpec s;
  s.input_h = 64;
  s.input_w = users;
  s.conv = {{8, 3, 4, 4, 1}, {4, 3, 8, 4, 1}, {4, 3, 4, 2, 1}, {3, 3, 2, 2, 1}};
  s.fc_widths = {128, users};
  s.k_out = users;
  return s;
}

/// Four-stage spec pooling an arbitrary height down to 1; kernels are three
/// times the pooling factor (at least 3), filters (4, 8, 4, 2).
inline NetSpec generic_spec(int input_h, int users) {
  std::vector<int> primes;
  int h = input_h;
  for (int p = 2; p * p <= h; ++p)
    while (h % p == 0) {
      primes.push_back(p);
      h /= p;
    }
  if (h > 1) primes.push_back(h);
  std::array<int, 4> pools{1, 1, 1, 1};
  std::sort(primes.rbegin(), primes.rend());
  for (int p : primes) *std::min_element(pools.begin(), pools.end()) *= p;
  std::sort(pools.rbegin(), pools.rend());
  NetSpec s;
  s.input_h = input_h;
  s.input_w = users;
  const std::array<int, 4> filters{4, 8, 4, 2};
  for (int i = 0; i < 4; ++i)
    s.conv.push_back({std::max(3, 3 * pools[i]), 3, filters[i], pools[i], 1});
  s.fc_widths = {128, users};
  s.k_out = users;
  return s;
}

inline NetSpec lmnn_spec_for(int antennas, int beams, int users) {
  const int h = 2 * antennas + beams;
  return h == 96 ? desk_lmnn_spec(users) : generic_spec(h, users);
}

inline NetSpec slmnn_spec_for(int beams, int users) {
  return beams == 64 ? desk_slmnn_spec(users) : generic_spec(beams, users);
}

// ---------------------------------------------------------------------------
// Initialization

inline NetParams init_params(const NetSpec& spec, Rng& rng) {
  spec.validate();
  const auto lay = spec.layout();
  NetParams p;
  p.values.assign(lay.total, 0.0);
  auto fill = [&](const NetSpec::Layout::Block& b, std::size_t fan_in) {
    const double r = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-r, r);
    for (std::size_t i = 0; i < b.weights_len; ++i) p.values[b.weights + i] = u(rng);
  };
  int channels = 1;
  for (std::size_t s = 0; s < spec.conv.size(); ++s) {
    fill(lay.conv[s], static_cast<std::size_t>(channels) * spec.conv[s].kernel_h * spec.conv[s].kernel_w);
    channels = spec.conv[s].filters;
  }
  int in = spec.feature_size() + 1;
  for (std::size_t l = 0; l < spec.fc_widths.size(); ++l) {
    fill(lay.fc[l], static_cast<std::size_t>(in));
    in = spec.fc_widths[l];
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace detail {

using Mat = Eigen::MatrixXd;
using MapVec = Eigen::Map<const RVector>;

// Activations are (channels) x (h * w) matrices, spatial index y * w + x.
inline Mat im2col(const Mat& in, int h, int w, int kh, int kw) {
  const int c = static_cast<int>(in.rows());
  const int pt = (kh - 1) / 2, pl = (kw - 1) / 2;
  Mat cols = Mat::Zero(static_cast<Eigen::Index>(c) * kh * kw, static_cast<Eigen::Index>(h) * w);
  for (int ch = 0; ch < c; ++ch)
    for (int a = 0; a < kh; ++a)
      for (int b = 0; b < kw; ++b) {
        const Eigen::Index row = (static_cast<Eigen::Index>(ch) * kh + a) * kw + b;
        for (int y = 0; y < h; ++y) {
          const int sy = y + a - pt;
          if (sy < 0 || sy >= h) continue;
          for (int x = 0; x < w; ++x) {
            const int sx = x + b - pl;
            if (sx < 0 || sx >= w) continue;
            cols(row, y * w + x) = in(ch, sy * w + sx);
          }
        }
      }
  return cols;
}

inline void col2im_add(const Mat& cols, int c, int h, int w, int kh, int kw, Mat& out) {
  const int pt = (kh - 1) / 2, pl = (kw - 1) / 2;
  for (int ch = 0; ch < c; ++ch)
    for (int a = 0; a < kh; ++a)
      for (int b = 0; b < kw; ++b) {
        const Eigen::Index row = (static_cast<Eigen::Index>(ch) * kh + a) * kw + b;
        for (int y = 0; y < h; ++y) {
          const int sy = y + a - pt;
          if (sy < 0 || sy >= h) continue;
          for (int x = 0; x < w; ++x) {
            const int sx = x + b - pl;
            if (sx < 0 || sx >= w) continue;
            out(ch, sy * w + sx) += cols(row, y * w + x);
          }
        }
      }
}

struct StageTape {
  Mat cols;                     // im2col of the stage input
  Mat act;                      // post-ReLU conv output
  std::vector<int> argmax;      // pooled position -> index into act (flattened row-major c, hw)
};

struct FcTape {
  RVector input;
  RVector pre;
  RVector mask;  // dropout scale per unit (hidden layers)
};

}  // namespace detail

/// Intermediate values retained for backpropagation.
struct Tape {
  std::vector<detail::StageTape> stages;
  std::vector<detail::FcTape> fc;
  RVector out_pre;   // final linear output
  RVector relu_out;  // after output ReLU
  double out_scale = 1.0;
  RVector output;
};

inline void check_input(const NetSpec& spec, const NetParams& params, const RMatrix& x) {
  if (x.rows() != spec.input_h || x.cols() != spec.input_w)
    throw Error(ErrorKind::ShapeMismatch,
                "input " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                    " vs spec " + std::to_string(spec.input_h) + "x" + std::to_string(spec.input_w));
  if (params.values.size() != spec.layout().total)
    throw Error(ErrorKind::ShapeMismatch, "parameter count does not match spec");
}

/// Forward pass. `budget` is the power budget P used by the output projection.
/// With train_mode, dropout is applied to FC hidden activations using rng.
inline RVector forward(const NetSpec& spec, const NetParams& params, const RMatrix& x, double nu,
                       double budget, bool train_mode, Rng* rng = nullptr, Tape* tape = nullptr) {
  using namespace detail;
  check_input(spec, params, x);
  const auto lay = spec.layout();
  const double* v = params.values.data();
  Tape local;
  Tape& t = tape ? *tape : local;
  t.stages.assign(spec.conv.size(), {});
  t.fc.assign(spec.fc_widths.size(), {});

  int h = spec.input_h, w = spec.input_w, c = 1;
  Mat act(1, static_cast<Eigen::Index>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) act(0, y * w + xx) = x(y, xx) / params.input_scale;

  for (std::size_t s = 0; s < spec.conv.size(); ++s) {
    const ConvStage& st = spec.conv[s];
    StageTape& tp = t.stages[s];
    tp.cols = im2col(act, h, w, st.kernel_h, st.kernel_w);
    // weights are stored [filter][c][kh][kw]; the column-major map is their transpose
    const Eigen::Map<const Mat> wt(v + lay.conv[s].weights,
                                   static_cast<Eigen::Index>(c) * st.kernel_h * st.kernel_w, st.filters);
    const MapVec bias(v + lay.conv[s].bias, st.filters);
    Mat conv = wt.transpose() * tp.cols;
    conv.colwise() += bias;
    tp.act = conv.cwiseMax(0.0);

    const int oh = h / st.pool_h, ow = w / st.pool_w;
    Mat pooled(st.filters, static_cast<Eigen::Index>(oh) * ow);
    tp.argmax.assign(static_cast<std::size_t>(st.filters) * oh * ow, 0);
    for (int f = 0; f < st.filters; ++f)
      for (int py = 0; py < oh; ++py)
        for (int px = 0; px < ow; ++px) {
          int best = (py * st.pool_h) * w + px * st.pool_w;
          double bv = tp.act(f, best);
          for (int a = 0; a < st.pool_h; ++a)
            for (int b = 0; b < st.pool_w; ++b) {
              const int idx = (py * st.pool_h + a) * w + px * st.pool_w + b;
              if (tp.act(f, idx) > bv) {
                bv = tp.act(f, idx);
                best = idx;
              }
            }
          pooled(f, py * ow + px) = bv;
          tp.argmax[(static_cast<std::size_t>(f) * oh + py) * ow + px] = best;
        }
    act = std::move(pooled);
    h = oh;
    w = ow;
    c = st.filters;
  }

  // flatten channel-major, then append the SNR
  RVector z(act.size() + 1);
  for (Eigen::Index f = 0; f < act.rows(); ++f)
    for (Eigen::Index i = 0; i < act.cols(); ++i) z[f * act.cols() + i] = act(f, i);
  z[act.size()] = nu;

  const std::size_t layers = spec.fc_widths.size();
  for (std::size_t l = 0; l < layers; ++l) {
    const int out_w = spec.fc_widths[l];
    FcTape& tp = t.fc[l];
    tp.input = z;
    const Eigen::Map<const Mat> wt(v + lay.fc[l].weights, z.size(), out_w);
    const MapVec bias(v + lay.fc[l].bias, out_w);
    tp.pre = wt.transpose() * z + bias;
    if (l + 1 < layers) {
      z = tp.pre.cwiseMax(0.0);
      tp.mask = RVector::Ones(out_w);
      if (train_mode && spec.dropout > 0.0) {
        if (!rng) throw Error(ErrorKind::InvalidArgument, "forward: train_mode needs an rng");
        std::bernoulli_distribution keep(1.0 - spec.dropout);
        const double scale = 1.0 / (1.0 - spec.dropout);
        for (int i = 0; i < out_w; ++i) tp.mask[i] = keep(*rng) ? scale : 0.0;
        z = z.cwiseProduct(tp.mask);
      }
    } else {
      t.out_pre = tp.pre;
    }
  }
  t.relu_out = t.out_pre.cwiseMax(0.0);
  const double total = t.relu_out.sum();
  t.out_scale = total > budget ? budget / total : 1.0;
  t.output = t.relu_out * t.out_scale;
  return t.output;
}

/// Adds d(loss)/d(params) for one sample to grad given d(loss)/d(output).
inline void backward(const NetSpec& spec, const NetParams& params, const Tape& t,
                     const RVector& d_out, std::vector<double>& grad) {
  using namespace detail;
  const auto lay = spec.layout();
  const double* v = params.values.data();
  if (grad.size() != lay.total) grad.assign(lay.total, 0.0);

  // output projection: out = relu * s, s = min(1, P / sum(relu))
  RVector d_relu;
  if (t.out_scale < 1.0) {
    const double total = t.relu_out.sum();
    const double dot = d_out.dot(t.relu_out);
    d_relu = t.out_scale * (d_out.array() - dot / total).matrix();
  } else {
    d_relu = d_out;
  }
  RVector dz = d_relu.cwiseProduct((t.out_pre.array() > 0.0).cast<double>().matrix());

  for (std::size_t l = spec.fc_widths.size(); l-- > 0;) {
    const FcTape& tp = t.fc[l];
    const int out_w = spec.fc_widths[l];
    if (l + 1 < spec.fc_widths.size()) {
      dz = dz.cwiseProduct(tp.mask).cwiseProduct((tp.pre.array() > 0.0).cast<double>().matrix());
    }
    Eigen::Map<Mat> gw(grad.data() + lay.fc[l].weights, tp.input.size(), out_w);
    Eigen::Map<RVector> gb(grad.data() + lay.fc[l].bias, out_w);
    gw.noalias() += tp.input * dz.transpose();
    gb += dz;
    const Eigen::Map<const Mat> wt(v + lay.fc[l].weights, tp.input.size(), out_w);
    dz = wt * dz;
  }

  if (spec.conv.empty()) return;
  // drop the SNR slot and unflatten
  const auto shapes = spec.stage_shapes();
  const auto last = shapes.back();
  Mat d_act(last.c, static_cast<Eigen::Index>(last.h) * last.w);
  for (Eigen::Index f = 0; f < d_act.rows(); ++f)
    for (Eigen::Index i = 0; i < d_act.cols(); ++i) d_act(f, i) = dz[f * d_act.cols() + i];

  for (std::size_t s = spec.conv.size(); s-- > 0;) {
    const ConvStage& st = spec.conv[s];
    const StageTape& tp = t.stages[s];
    const auto in = shapes[s];
    // un-pool
    Mat d_conv = Mat::Zero(st.filters, static_cast<Eigen::Index>(in.h) * in.w);
    const int oh = in.h / st.pool_h, ow = in.w / st.pool_w;
    for (int f = 0; f < st.filters; ++f)
      for (int i = 0; i < oh * ow; ++i)
        d_conv(f, tp.argmax[static_cast<std::size_t>(f) * oh * ow + i]) += d_act(f, i);
    d_conv = d_conv.cwiseProduct((tp.act.array() > 0.0).cast<double>().matrix());

    const Eigen::Index ckk = static_cast<Eigen::Index>(in.c) * st.kernel_h * st.kernel_w;
    Eigen::Map<Mat> gw(grad.data() + lay.conv[s].weights, ckk, st.filters);
    Eigen::Map<RVector> gb(grad.data() + lay.conv[s].bias, st.filters);
    gw.noalias() += tp.cols * d_conv.transpose();
    gb += d_conv.rowwise().sum();
    if (s == 0) break;
    const Eigen::Map<const Mat> wt(v + lay.conv[s].weights, ckk, st.filters);
    const Mat d_cols = wt * d_conv;
    d_act = Mat::Zero(in.c, static_cast<Eigen::Index>(in.h) * in.w);
    col2im_add(d_cols, in.c, in.h, in.w, st.kernel_h, st.kernel_w, d_act);
  }
}

inline double mse_loss(const std::vector<RVector>& pred, const std::vector<RVector>& label) {
  if (pred.size() != label.size() || pred.empty())
    throw Error(ErrorKind::DimensionMismatch, "mse_loss: batch sizes differ or empty");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != label[i].size())
      throw Error(ErrorKind::DimensionMismatch, "mse_loss: sample lengths differ");
    s += (pred[i] - label[i]).squaredNorm();
  }
  return s / static_cast<double>(pred.size());
}

inline RVector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const RVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct BatchResult {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Batch MSE and its exact gradient. Samples are processed in index order.
inline BatchResult loss_and_gradient(const NetSpec& spec, const NetParams& params,
                                     const std::vector<const TrainingSample*>& batch,
                                     double budget, bool train_mode, Rng* rng) {
  BatchResult r;
  r.grad.assign(params.values.size(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  Tape tape;
  for (const TrainingSample* s : batch) {
    const RVector out = forward(spec, params, s->x, s->nu, budget, train_mode, rng, &tape);
    const RVector diff = out - to_vector(s->mu);
    r.loss += diff.squaredNorm() * inv_b;
    backward(spec, params, tape, 2.0 * inv_b * diff, r.grad);
  }
  return r;
}

// ---------------------------------------------------------------------------
// ADAM

struct AdamState {
  std::vector<double> m, v;
  long step = 0;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void adam_step(std::vector<double>& params, const std::vector<double>& grads,
                      AdamState& state, const AdamOptions& opt = {}) {
  if (grads.size() != params.size())
    throw Error(ErrorKind::ShapeMismatch, "adam_step: gradient size differs from params");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = opt.beta1 * state.m[i] + (1.0 - opt.beta1) * grads[i];
    state.v[i] = opt.beta2 * state.v[i] + (1.0 - opt.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
  }
}

// ---------------------------------------------------------------------------
// Training

struct TrainOptions {
  int steps = 10000;
  int batch = 0;  // 0: 1024 scaled by dataset size / 160000
  AdamOptions adam;
  std::uint64_t seed = 0;
  double budget = 1.0;
  int eval_every = 500;
};

struct CurvePoint {
  int step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  NetParams params;
  std::vector<CurvePoint> curve;
};

inline int scaled_batch(std::size_t dataset_size) {
  return std::max(1, static_cast<int>(std::lround(1024.0 * static_cast<double>(dataset_size) / 160000.0)));
}

/// Mean loss with dropout disabled.
inline double evaluate(const NetSpec& spec, const NetParams& params,
                       const std::vector<TrainingSample>& data, double budget) {
  if (data.empty()) return 0.0;
  double s = 0.0;
  for (const auto& d : data)
    s += (forward(spec, params, d.x, d.nu, budget, false) - to_vector(d.mu)).squaredNorm();
  return s / static_cast<double>(data.size());
}

inline double input_rms(const std::vector<TrainingSample>& data) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& d : data) {
    s += d.x.squaredNorm();
    n += static_cast<std::size_t>(d.x.size());
  }
  const double rms = n ? std::sqrt(s / static_cast<double>(n)) : 1.0;
  return rms > 0.0 ? rms : 1.0;
}

inline TrainResult train(const NetSpec& spec, const std::vector<TrainingSample>& train_set,
                         const std::vector<TrainingSample>& val_set, const TrainOptions& opts) {
  spec.validate();
  if (train_set.empty()) throw Error(ErrorKind::EmptyDataset, "train: no training samples");
  for (const auto& s : train_set) {
    if (s.x.rows() != spec.input_h || s.x.cols() != spec.input_w)
      throw Error(ErrorKind::ShapeMismatch, "train: sample shape does not match spec");
    if (static_cast<int>(s.mu.size()) != spec.k_out)
      throw Error(ErrorKind::ShapeMismatch, "train: label length does not match k_out");
  }
  Rng rng = make_rng(opts.seed, "train");
  TrainResult result;
  result.params = init_params(spec, rng);
  result.params.input_scale = input_rms(train_set);
  // start the output layer at the mean label so no output begins dead
  {
    const auto lay = spec.layout();
    const auto& last = lay.fc.back();
    for (int k = 0; k < spec.k_out; ++k) {
      double m = 0.0;
      for (const auto& s : train_set) m += s.mu[k];
      result.params.values[last.bias + k] = m / static_cast<double>(train_set.size());
    }
  }
  const std::size_t total = train_set.size() + val_set.size();
  const int batch = std::min<int>(opts.batch > 0 ? opts.batch : scaled_batch(total),
                                  static_cast<int>(train_set.size()));
  AdamState adam;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  double running = 0.0;
  int running_n = 0;
  std::vector<const TrainingSample*> mb(batch);
  for (int step = 1; step <= opts.steps; ++step) {
    for (int i = 0; i < batch; ++i) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      mb[i] = &train_set[order[cursor++]];
    }
    BatchResult br = loss_and_gradient(spec, result.params, mb, opts.budget, true, &rng);
    adam_step(result.params.values, br.grad, adam, opts.adam);
    running += br.loss;
    ++running_n;
    if (step % std::max(1, opts.eval_every) == 0 || step == opts.steps) {
      CurvePoint cp;
      cp.step = step;
      cp.train_loss = running / running_n;
      cp.val_loss = evaluate(spec, result.params, val_set, opts.budget);
      result.curve.push_back(cp);
      running = 0.0;
      running_n = 0;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Weights file: "LMNW", u32 version, spec block, input scale, then each layer's
// weights and bias as u64 length + little-endian f64 values.

inline constexpr std::uint32_t kWeightsVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}
inline void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}
inline std::uint64_t get_u(std::istream& is, int bytes) {
  unsigned char b[8] = {};
  if (!is.read(reinterpret_cast<char*>(b), bytes))
    throw Error(ErrorKind::Io, "weights file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}
inline double get_f64(std::istream& is) {
  const std::uint64_t v = get_u(is, 8);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace detail

inline void save_weights(const std::string& path, const NetSpec& spec, const NetParams& params) {
  using namespace detail;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path);
  os.write("LMNW", 4);
  put_u32(os, kWeightsVersion);
  put_u32(os, static_cast<std::uint32_t>(spec.input_h));
  put_u32(os, static_cast<std::uint32_t>(spec.input_w));
  put_u32(os, static_cast<std::uint32_t>(spec.conv.size()));
  for (const auto& s : spec.conv)
    for (int v : {s.kernel_h, s.kernel_w, s.filters, s.pool_h, s.pool_w})
      put_u32(os, static_cast<std::uint32_t>(v));
  put_u32(os, static_cast<std::uint32_t>(spec.fc_widths.size()));
  for (int f : spec.fc_widths) put_u32(os, static_cast<std::uint32_t>(f));
  put_u32(os, static_cast<std::uint32_t>(spec.k_out));
  put_f64(os, spec.dropout);
  put_f64(os, params.input_scale);
  const auto lay = spec.layout();
  auto put_block = [&](std::size_t off, std::size_t len) {
    put_u64(os, len);
    for (std::size_t i = 0; i < len; ++i) put_f64(os, params.values[off + i]);
  };
  for (const auto& b : lay.conv) {
    put_block(b.weights, b.weights_len);
    put_block(b.bias, b.bias_len);
  }
  for (const auto& b : lay.fc) {
    put_block(b.weights, b.weights_len);
    put_block(b.bias, b.bias_len);
  }
  if (!os) throw Error(ErrorKind::Io, "failed writing " + path);
}

struct LoadedNet {
  NetSpec spec;
  NetParams params;
};

/// Loads a weights file; when `expected` is given the stored spec must match it.
inline LoadedNet load_weights(const std::string& path, const NetSpec* expected = nullptr) {
  using namespace detail;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::MissingWeights, "cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "LMNW")
    throw Error(ErrorKind::ShapeMismatch, path + ": bad magic");
  const auto version = get_u(is, 4);
  if (version != kWeightsVersion)
    throw Error(ErrorKind::ShapeMismatch, path + ": unsupported version " + std::to_string(version));
  LoadedNet net;
  auto u32 = [&] { return static_cast<int>(get_u(is, 4)); };
  net.spec.input_h = u32();
  net.spec.input_w = u32();
  const int stages = u32();
  if (stages < 0 || stages > 64) throw Error(ErrorKind::ShapeMismatch, path + ": bad stage count");
  for (int i = 0; i < stages; ++i) {
    ConvStage s;
    s.kernel_h = u32();
    s.kernel_w = u32();
    s.filters = u32();
    s.pool_h = u32();
    s.pool_w = u32();
    net.spec.conv.push_back(s);
  }
  const int fcs = u32();
  if (fcs < 1 || fcs > 64) throw Error(ErrorKind::ShapeMismatch, path + ": bad FC count");
  for (int i = 0; i < fcs; ++i) net.spec.fc_widths.push_back(u32());
  net.spec.k_out = u32();
  net.spec.dropout = get_f64(is);
  net.params.input_scale = get_f64(is);
  net.spec.validate();
  if (expected && !(*expected == net.spec))
    throw Error(ErrorKind::ShapeMismatch, path + ": network spec differs from the expected one");
  const auto lay = net.spec.layout();
  net.params.values.assign(lay.total, 0.0);
  auto get_block = [&](std::size_t off, std::size_t len) {
    const std::uint64_t n = get_u(is, 8);
    if (n != len) throw Error(ErrorKind::ShapeMismatch, path + ": layer size mismatch");
    for (std::size_t i = 0; i < len; ++i) net.params.values[off + i] = get_f64(is);
  };
  for (const auto& b : lay.conv) {
    get_block(b.weights, b.weights_len);
    get_block(b.bias, b.bias_len);
  }
  for (const auto& b : lay.fc) {
    get_block(b.weights, b.weights_len);
    get_block(b.bias, b.bias_len);
  }
  return net;
}

}  // namespace eigenprecode::neural

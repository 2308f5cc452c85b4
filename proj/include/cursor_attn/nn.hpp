#pragma once

// Small neural-network engine with hand-derived gradients: SimpleRNN, LSTM,
// GRU and bidirectional LSTM sequence classifiers, a compact convolutional
// image classifier, inverted dropout, sigmoid head, binary cross-entropy
// and Adam.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cursor_attn/error.hpp"
#include "cursor_attn/parallel.hpp"
#include "cursor_attn/rng.hpp"

namespace cursor_attn {

enum class Arch { SimpleRNN, LSTM, BLSTM, GRU, SmallConv };

inline std::string_view arch_name(Arch a) {
  switch (a) {
    case Arch::SimpleRNN: return "simplernn";
    case Arch::LSTM: return "lstm";
    case Arch::BLSTM: return "blstm";
    case Arch::GRU: return "gru";
    case Arch::SmallConv: return "cnn";
  }
  return "gru";
}

inline std::optional<Arch> parse_arch(std::string_view s) {
  for (Arch a : {Arch::SimpleRNN, Arch::LSTM, Arch::BLSTM, Arch::GRU, Arch::SmallConv})
    if (arch_name(a) == s) return a;
  return std::nullopt;
}

inline bool is_recurrent(Arch a) { return a != Arch::SmallConv; }

// Sequence inputs are steps x features; image inputs are height x width x
// channels.
struct InputShape {
  int d0 = 50;
  int d1 = 2;
  int d2 = 1;

  static InputShape sequence(int steps, int features) { return {steps, features, 1}; }
  static InputShape image(int height, int width, int channels) { return {height, width, channels}; }
  std::size_t size() const { return static_cast<std::size_t>(d0) * d1 * d2; }
  bool operator==(const InputShape&) const = default;
};

inline constexpr int kConv1Channels = 8;
inline constexpr int kConv2Channels = 16;

inline const std::vector<int>& hidden_grid() {
  static const std::vector<int> grid = [] {
    std::vector<int> g;
    for (int n = 16; n <= 128; n += 8) g.push_back(n);
    return g;
  }();
  return grid;
}

inline const std::vector<double>& drop_rate_grid() {
  static const std::vector<double> grid{0.5, 0.4, 0.3, 0.2, 0.1};
  return grid;
}

struct ModelSpec {
  Arch arch = Arch::GRU;
  int hidden_n = 32;
  double drop_rate = 0.2;
  InputShape input = InputShape::sequence(50, 2);
  std::uint64_t seed = 0;

  bool operator==(const ModelSpec&) const = default;
};

inline void validate_spec(const ModelSpec& spec) {
  if (is_recurrent(spec.arch)) {
    const auto& g = hidden_grid();
    if (std::find(g.begin(), g.end(), spec.hidden_n) == g.end())
      fail(ErrorKind::InvalidValue, "hidden_n must be one of 16, 24, ..., 128");
    if (spec.input.d2 != 1 || spec.input.d0 < 1 || spec.input.d1 < 1)
      fail(ErrorKind::InvalidValue, "recurrent models take a steps x features input");
  } else if (spec.input.d0 < 4 || spec.input.d1 < 4 || spec.input.d2 < 1) {
    fail(ErrorKind::InvalidValue, "convolutional input must be at least 4x4");
  }
  const auto& q = drop_rate_grid();
  if (std::none_of(q.begin(), q.end(), [&](double v) { return std::abs(v - spec.drop_rate) < 1e-9; }))
    fail(ErrorKind::InvalidValue, "drop rate must be one of 0.5, 0.4, 0.3, 0.2, 0.1");
}

inline nlohmann::json to_json(const ModelSpec& s) {
  return {{"arch", std::string(arch_name(s.arch))},
          {"hidden_n", s.hidden_n},
          {"drop_rate", s.drop_rate},
          {"input_shape", {s.input.d0, s.input.d1, s.input.d2}},
          {"seed", s.seed}};
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  const auto arch = parse_arch(j.at("arch").get<std::string>());
  if (!arch) fail(ErrorKind::InvalidValue, "unknown arch");
  s.arch = *arch;
  s.hidden_n = j.at("hidden_n").get<int>();
  s.drop_rate = j.at("drop_rate").get<double>();
  const auto& shape = j.at("input_shape");
  s.input = {shape.at(0).get<int>(), shape.at(1).get<int>(), shape.at(2).get<int>()};
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};

using Gradients = std::vector<std::vector<double>>;

enum class Mode { Train, Infer };

class Model {
 public:
  ModelSpec spec;
  std::vector<Param> params;
  Mode mode = Mode::Infer;

  Param& param(std::string_view name) { return params[index_of(name)]; }
  const Param& param(std::string_view name) const { return params[index_of(name)]; }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i].name == name) return i;
    fail(ErrorKind::InvalidValue, "no parameter named " + std::string(name));
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.values.size();
    return n;
  }

  // Width of the feature vector fed to the sigmoid head.
  int readout_width() const {
    switch (spec.arch) {
      case Arch::BLSTM: return 2 * spec.hidden_n;
      case Arch::SmallConv: return kConv2Channels;
      default: return spec.hidden_n;
    }
  }

  Gradients zero_grads() const {
    Gradients g;
    g.reserve(params.size());
    for (const auto& p : params) g.emplace_back(p.values.size(), 0.0);
    return g;
  }

  Rng& dropout_rng() { return rng_; }
  void reseed_dropout(std::uint64_t seed) { rng_ = Rng(seed); }

 private:
  Rng rng_{0};
};

// ---------------------------------------------------------------------------
// Construction

namespace nn_detail {

inline void add_param(Model& m, std::string name, std::vector<int> shape, double fan_in, double fan_out, Rng* rng) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  Param p{std::move(name), std::move(shape), std::vector<double>(n, 0.0)};
  if (rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : p.values) v = rng->uniform(-limit, limit);
  }
  m.params.push_back(std::move(p));
}

// Recurrent cell with `gates` stacked blocks: W (gates*n x F), U (gates*n x n), b.
inline void add_cell(Model& m, const std::string& prefix, int gates, int n, int features, Rng& rng) {
  add_param(m, prefix + ".W", {gates * n, features}, features, gates * n, &rng);
  add_param(m, prefix + ".U", {gates * n, n}, n, gates * n, &rng);
  add_param(m, prefix + ".b", {gates * n}, 0, 0, nullptr);
}

}  // namespace nn_detail

// Glorot-uniform weights, zero biases; deterministic per spec.seed.
inline Model init_model(const ModelSpec& spec) {
  validate_spec(spec);
  Model m;
  m.spec = spec;
  Rng rng(derive_seed(spec.seed, "init"));
  const int n = spec.hidden_n;
  const int f = spec.input.d1;
  switch (spec.arch) {
    case Arch::SimpleRNN: nn_detail::add_cell(m, "rnn", 1, n, f, rng); break;
    case Arch::LSTM: nn_detail::add_cell(m, "lstm", 4, n, f, rng); break;
    case Arch::GRU: nn_detail::add_cell(m, "gru", 3, n, f, rng); break;
    case Arch::BLSTM:
      nn_detail::add_cell(m, "fwd", 4, n, f, rng);
      nn_detail::add_cell(m, "bwd", 4, n, f, rng);
      break;
    case Arch::SmallConv: {
      const int c = spec.input.d2;
      nn_detail::add_param(m, "conv1.k", {3, 3, c, kConv1Channels}, 9.0 * c, 9.0 * kConv1Channels, &rng);
      nn_detail::add_param(m, "conv1.b", {kConv1Channels}, 0, 0, nullptr);
      nn_detail::add_param(m, "conv2.k", {3, 3, kConv1Channels, kConv2Channels}, 9.0 * kConv1Channels,
                           9.0 * kConv2Channels, &rng);
      nn_detail::add_param(m, "conv2.b", {kConv2Channels}, 0, 0, nullptr);
      break;
    }
  }
  const int h = m.readout_width();
  nn_detail::add_param(m, "head.w", {h}, h, 1, &rng);
  nn_detail::add_param(m, "head.b", {1}, 0, 0, nullptr);
  m.reseed_dropout(derive_seed(spec.seed, "dropout"));
  return m;
}

// ---------------------------------------------------------------------------
// Primitive ops

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// out[rows] += M[rows x cols] * v[cols]
inline void matvec_add(const double* m, const double* v, double* out, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const double* row = m + static_cast<std::size_t>(r) * cols;
    double acc = 0.0;
    for (int c = 0; c < cols; ++c) acc += row[c] * v[c];
    out[r] += acc;
  }
}

// out[cols] += M^T * v[rows]
inline void matvec_t_add(const double* m, const double* v, double* out, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const double* row = m + static_cast<std::size_t>(r) * cols;
    const double s = v[r];
    if (s == 0.0) continue;
    for (int c = 0; c < cols; ++c) out[c] += row[c] * s;
  }
}

// G[rows x cols] += a[rows] b[cols]^T
inline void outer_add(double* g, const double* a, const double* b, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const double s = a[r];
    if (s == 0.0) continue;
    double* row = g + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) row[c] += s * b[c];
  }
}

struct ConvShape {
  int height = 0;
  int width = 0;
  int in_channels = 0;
  int out_channels = 0;
  int pad = 1;  // 1 = same, 0 = valid

  int out_height() const { return height + 2 * pad - 2; }
  int out_width() const { return width + 2 * pad - 2; }
};

// 3x3 stride-1 cross-correlation. Input HWC, kernel [ky][kx][in][out],
// output HWC.
inline std::vector<double> conv2d(std::span<const double> input, std::span<const double> kernel,
                                  std::span<const double> bias, const ConvShape& s) {
  const int oh = s.out_height(), ow = s.out_width(), oc = s.out_channels, ic = s.in_channels;
  std::vector<double> out(static_cast<std::size_t>(oh) * ow * oc);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double* o = &out[(static_cast<std::size_t>(y) * ow + x) * oc];
      for (int c = 0; c < oc; ++c) o[c] = bias[c];
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = y + ky - s.pad;
        if (iy < 0 || iy >= s.height) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = x + kx - s.pad;
          if (ix < 0 || ix >= s.width) continue;
          const double* in = &input[(static_cast<std::size_t>(iy) * s.width + ix) * ic];
          const double* k = &kernel[static_cast<std::size_t>((ky * 3 + kx) * ic) * oc];
          for (int i = 0; i < ic; ++i) {
            const double v = in[i];
            if (v == 0.0) continue;
            const double* krow = k + static_cast<std::size_t>(i) * oc;
            for (int c = 0; c < oc; ++c) o[c] += v * krow[c];
          }
        }
      }
    }
  return out;
}

// Accumulates kernel/bias gradients; writes the input gradient when
// d_input is non-empty.
inline void conv2d_backward(std::span<const double> input, std::span<const double> kernel,
                            std::span<const double> d_out, const ConvShape& s, std::span<double> d_kernel,
                            std::span<double> d_bias, std::span<double> d_input) {
  const int oh = s.out_height(), ow = s.out_width(), oc = s.out_channels, ic = s.in_channels;
  if (!d_input.empty()) std::fill(d_input.begin(), d_input.end(), 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const double* go = &d_out[(static_cast<std::size_t>(y) * ow + x) * oc];
      // ReLU and max pooling leave most output gradients at exactly zero.
      if (std::all_of(go, go + oc, [](double v) { return v == 0.0; })) continue;
      for (int c = 0; c < oc; ++c) d_bias[c] += go[c];
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = y + ky - s.pad;
        if (iy < 0 || iy >= s.height) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = x + kx - s.pad;
          if (ix < 0 || ix >= s.width) continue;
          const std::size_t in_at = (static_cast<std::size_t>(iy) * s.width + ix) * ic;
          const std::size_t k_at = static_cast<std::size_t>((ky * 3 + kx) * ic) * oc;
          for (int i = 0; i < ic; ++i) {
            const double v = input[in_at + i];
            double* dk = &d_kernel[k_at + static_cast<std::size_t>(i) * oc];
            const double* k = &kernel[k_at + static_cast<std::size_t>(i) * oc];
            double acc = 0.0;
            for (int c = 0; c < oc; ++c) {
              dk[c] += v * go[c];
              acc += k[c] * go[c];
            }
            if (!d_input.empty()) d_input[in_at + i] += acc;
          }
        }
      }
    }
}

// ---------------------------------------------------------------------------
// Recurrent cells. Each runs a full sequence (optionally reversed) and can
// backpropagate a gradient arriving at the final hidden state.

namespace nn_detail {

struct SeqInput {
  const double* data;
  int steps;
  int features;
  bool reversed;
  const double* at(int t) const {
    const int row = reversed ? steps - 1 - t : t;
    return data + static_cast<std::size_t>(row) * features;
  }
};

struct CellParams {
  const double* W;
  const double* U;
  const double* b;
  double* dW;
  double* dU;
  double* db;
};

// h_t = tanh(W x_t + U h_{t-1} + b)
struct SimpleRnnTrace {
  int n = 0;
  std::vector<double> h;  // (steps + 1) x n, row 0 = initial zero state

  const double* final_state() const { return h.data() + h.size() - n; }

  void forward(const CellParams& p, const SeqInput& x, int n_) {
    n = n_;
    h.assign(static_cast<std::size_t>(x.steps + 1) * n, 0.0);
    for (int t = 0; t < x.steps; ++t) {
      double* cur = &h[static_cast<std::size_t>(t + 1) * n];
      const double* prev = &h[static_cast<std::size_t>(t) * n];
      std::copy(p.b, p.b + n, cur);
      matvec_add(p.W, x.at(t), cur, n, x.features);
      matvec_add(p.U, prev, cur, n, n);
      for (int i = 0; i < n; ++i) cur[i] = std::tanh(cur[i]);
    }
  }

  void backward(const CellParams& p, const SeqInput& x, const double* d_final) const {
    std::vector<double> dh(d_final, d_final + n), da(n);
    for (int t = x.steps - 1; t >= 0; --t) {
      const double* cur = &h[static_cast<std::size_t>(t + 1) * n];
      const double* prev = &h[static_cast<std::size_t>(t) * n];
      for (int i = 0; i < n; ++i) da[i] = dh[i] * (1.0 - cur[i] * cur[i]);
      outer_add(p.dW, da.data(), x.at(t), n, x.features);
      outer_add(p.dU, da.data(), prev, n, n);
      for (int i = 0; i < n; ++i) p.db[i] += da[i];
      std::fill(dh.begin(), dh.end(), 0.0);
      matvec_t_add(p.U, da.data(), dh.data(), n, n);
    }
  }
};

// Gate blocks ordered input, forget, candidate, output.
//   c_t = f*c_{t-1} + i*g,  h_t = o*tanh(c_t)
struct LstmTrace {
  int n = 0;
  std::vector<double> h, c;      // (steps + 1) x n
  std::vector<double> gates;     // steps x 4n, activated
  std::vector<double> tanh_c;    // steps x n

  const double* final_state() const { return h.data() + h.size() - n; }

  void forward(const CellParams& p, const SeqInput& x, int n_) {
    n = n_;
    const int g4 = 4 * n;
    h.assign(static_cast<std::size_t>(x.steps + 1) * n, 0.0);
    c.assign(static_cast<std::size_t>(x.steps + 1) * n, 0.0);
    gates.assign(static_cast<std::size_t>(x.steps) * g4, 0.0);
    tanh_c.assign(static_cast<std::size_t>(x.steps) * n, 0.0);
    for (int t = 0; t < x.steps; ++t) {
      double* z = &gates[static_cast<std::size_t>(t) * g4];
      std::copy(p.b, p.b + g4, z);
      matvec_add(p.W, x.at(t), z, g4, x.features);
      matvec_add(p.U, &h[static_cast<std::size_t>(t) * n], z, g4, n);
      const double* c_prev = &c[static_cast<std::size_t>(t) * n];
      double* c_cur = &c[static_cast<std::size_t>(t + 1) * n];
      double* h_cur = &h[static_cast<std::size_t>(t + 1) * n];
      double* tc = &tanh_c[static_cast<std::size_t>(t) * n];
      for (int k = 0; k < n; ++k) {
        const double ig = sigmoid(z[k]);
        const double fg = sigmoid(z[n + k]);
        const double gg = std::tanh(z[2 * n + k]);
        const double og = sigmoid(z[3 * n + k]);
        z[k] = ig;
        z[n + k] = fg;
        z[2 * n + k] = gg;
        z[3 * n + k] = og;
        c_cur[k] = fg * c_prev[k] + ig * gg;
        tc[k] = std::tanh(c_cur[k]);
        h_cur[k] = og * tc[k];
      }
    }
  }

  void backward(const CellParams& p, const SeqInput& x, const double* d_final) const {
    const int g4 = 4 * n;
    std::vector<double> dh(d_final, d_final + n), dc(n, 0.0), dz(g4);
    for (int t = x.steps - 1; t >= 0; --t) {
      const double* z = &gates[static_cast<std::size_t>(t) * g4];
      const double* c_prev = &c[static_cast<std::size_t>(t) * n];
      const double* tc = &tanh_c[static_cast<std::size_t>(t) * n];
      for (int k = 0; k < n; ++k) {
        const double ig = z[k], fg = z[n + k], gg = z[2 * n + k], og = z[3 * n + k];
        const double d_o = dh[k] * tc[k];
        const double dct = dc[k] + dh[k] * og * (1.0 - tc[k] * tc[k]);
        dz[k] = dct * gg * ig * (1.0 - ig);
        dz[n + k] = dct * c_prev[k] * fg * (1.0 - fg);
        dz[2 * n + k] = dct * ig * (1.0 - gg * gg);
        dz[3 * n + k] = d_o * og * (1.0 - og);
        dc[k] = dct * fg;
      }
      outer_add(p.dW, dz.data(), x.at(t), g4, x.features);
      outer_add(p.dU, dz.data(), &h[static_cast<std::size_t>(t) * n], g4, n);
      for (int k = 0; k < g4; ++k) p.db[k] += dz[k];
      std::fill(dh.begin(), dh.end(), 0.0);
      matvec_t_add(p.U, dz.data(), dh.data(), g4, n);
    }
  }
};

// Gate blocks ordered update, reset, candidate.
//   z = s(Wz x + Uz h + bz), r = s(Wr x + Ur h + br)
//   hh = tanh(Wh x + Uh (r*h) + bh), h' = z*h + (1-z)*hh
struct GruTrace {
  int n = 0;
  std::vector<double> h;      // (steps + 1) x n
  std::vector<double> zr;     // steps x 2n, activated update/reset
  std::vector<double> cand;   // steps x n, activated candidate
  std::vector<double> rh;     // steps x n, r*h_{t-1}

  const double* final_state() const { return h.data() + h.size() - n; }

  void forward(const CellParams& p, const SeqInput& x, int n_) {
    n = n_;
    const int f = x.features;
    h.assign(static_cast<std::size_t>(x.steps + 1) * n, 0.0);
    zr.assign(static_cast<std::size_t>(x.steps) * 2 * n, 0.0);
    cand.assign(static_cast<std::size_t>(x.steps) * n, 0.0);
    rh.assign(static_cast<std::size_t>(x.steps) * n, 0.0);
    const double* Wh = p.W + static_cast<std::size_t>(2 * n) * f;
    const double* Uh = p.U + static_cast<std::size_t>(2 * n) * n;
    for (int t = 0; t < x.steps; ++t) {
      const double* prev = &h[static_cast<std::size_t>(t) * n];
      double* gzr = &zr[static_cast<std::size_t>(t) * 2 * n];
      std::copy(p.b, p.b + 2 * n, gzr);
      matvec_add(p.W, x.at(t), gzr, 2 * n, f);
      matvec_add(p.U, prev, gzr, 2 * n, n);
      for (int k = 0; k < 2 * n; ++k) gzr[k] = sigmoid(gzr[k]);
      double* r_h = &rh[static_cast<std::size_t>(t) * n];
      for (int k = 0; k < n; ++k) r_h[k] = gzr[n + k] * prev[k];
      double* hh = &cand[static_cast<std::size_t>(t) * n];
      std::copy(p.b + 2 * n, p.b + 3 * n, hh);
      matvec_add(Wh, x.at(t), hh, n, f);
      matvec_add(Uh, r_h, hh, n, n);
      double* cur = &h[static_cast<std::size_t>(t + 1) * n];
      for (int k = 0; k < n; ++k) {
        hh[k] = std::tanh(hh[k]);
        cur[k] = gzr[k] * prev[k] + (1.0 - gzr[k]) * hh[k];
      }
    }
  }

  void backward(const CellParams& p, const SeqInput& x, const double* d_final) const {
    const int f = x.features;
    const double* Uh = p.U + static_cast<std::size_t>(2 * n) * n;
    double* dWh = p.dW + static_cast<std::size_t>(2 * n) * f;
    double* dUh = p.dU + static_cast<std::size_t>(2 * n) * n;
    std::vector<double> dh(d_final, d_final + n), dprev(n), dzr(2 * n), dah(n), drh(n);
    for (int t = x.steps - 1; t >= 0; --t) {
      const double* prev = &h[static_cast<std::size_t>(t) * n];
      const double* g = &zr[static_cast<std::size_t>(t) * 2 * n];
      const double* hh = &cand[static_cast<std::size_t>(t) * n];
      const double* r_h = &rh[static_cast<std::size_t>(t) * n];
      for (int k = 0; k < n; ++k) {
        const double z = g[k];
        dprev[k] = dh[k] * z;
        dzr[k] = dh[k] * (prev[k] - hh[k]) * z * (1.0 - z);
        dah[k] = dh[k] * (1.0 - z) * (1.0 - hh[k] * hh[k]);
      }
      outer_add(dWh, dah.data(), x.at(t), n, f);
      outer_add(dUh, dah.data(), r_h, n, n);
      for (int k = 0; k < n; ++k) p.db[2 * n + k] += dah[k];
      std::fill(drh.begin(), drh.end(), 0.0);
      matvec_t_add(Uh, dah.data(), drh.data(), n, n);
      for (int k = 0; k < n; ++k) {
        const double r = g[n + k];
        dzr[n + k] = drh[k] * prev[k] * r * (1.0 - r);
        dprev[k] += drh[k] * r;
      }
      outer_add(p.dW, dzr.data(), x.at(t), 2 * n, f);
      outer_add(p.dU, dzr.data(), prev, 2 * n, n);
      for (int k = 0; k < 2 * n; ++k) p.db[k] += dzr[k];
      matvec_t_add(p.U, dzr.data(), dprev.data(), 2 * n, n);
      dh.swap(dprev);
    }
  }
};

// conv(3x3) -> ReLU -> maxpool 2 -> conv(3x3) -> ReLU -> maxpool 2 -> global
// average pool.
struct ConvTrace {
  ConvShape s1, s2;
  std::vector<double> a1;               // relu(conv1), h x w x 8
  std::vector<double> p1;               // pooled, h/2 x w/2 x 8
  std::vector<std::uint32_t> arg1;      // argmax index into a1 per p1 cell
  std::vector<double> a2;               // relu(conv2)
  std::vector<std::uint32_t> arg2;
  int p2h = 0, p2w = 0;
  std::vector<double> features;         // 16

  static void maxpool(const std::vector<double>& in, int h, int w, int c, std::vector<double>& out,
                      std::vector<std::uint32_t>& arg) {
    const int oh = h / 2, ow = w / 2;
    out.assign(static_cast<std::size_t>(oh) * ow * c, 0.0);
    arg.assign(out.size(), 0);
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x)
        for (int ch = 0; ch < c; ++ch) {
          std::uint32_t best = static_cast<std::uint32_t>(((2 * y) * w + 2 * x) * c + ch);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const auto i = static_cast<std::uint32_t>(((2 * y + dy) * w + 2 * x + dx) * c + ch);
              if (in[i] > in[best]) best = i;
            }
          const std::size_t o = (static_cast<std::size_t>(y) * ow + x) * c + ch;
          out[o] = in[best];
          arg[o] = best;
        }
  }

  void forward(const Model& m, std::span<const double> input) {
    const auto& in = m.spec.input;
    s1 = {in.d0, in.d1, in.d2, kConv1Channels, 1};
    a1 = conv2d(input, m.param("conv1.k").values, m.param("conv1.b").values, s1);
    for (auto& v : a1) v = std::max(v, 0.0);
    maxpool(a1, s1.height, s1.width, kConv1Channels, p1, arg1);
    s2 = {s1.height / 2, s1.width / 2, kConv1Channels, kConv2Channels, 1};
    a2 = conv2d(p1, m.param("conv2.k").values, m.param("conv2.b").values, s2);
    for (auto& v : a2) v = std::max(v, 0.0);
    std::vector<double> p2;
    maxpool(a2, s2.height, s2.width, kConv2Channels, p2, arg2);
    p2h = s2.height / 2;
    p2w = s2.width / 2;
    features.assign(kConv2Channels, 0.0);
    const std::size_t cells = static_cast<std::size_t>(p2h) * p2w;
    for (std::size_t i = 0; i < cells; ++i)
      for (int c = 0; c < kConv2Channels; ++c) features[c] += p2[i * kConv2Channels + c];
    for (auto& v : features) v /= static_cast<double>(cells);
  }

  void backward(const Model& m, std::span<const double> input, const double* d_features, Gradients& g) const {
    const std::size_t cells = static_cast<std::size_t>(p2h) * p2w;
    std::vector<double> d_a2(a2.size(), 0.0);
    for (std::size_t i = 0; i < cells; ++i)
      for (int c = 0; c < kConv2Channels; ++c) {
        const std::size_t o = i * kConv2Channels + c;
        const std::uint32_t src = arg2[o];
        if (a2[src] > 0.0) d_a2[src] += d_features[c] / static_cast<double>(cells);
      }
    std::vector<double> d_p1(p1.size());
    conv2d_backward(p1, m.param("conv2.k").values, d_a2, s2, g[m.index_of("conv2.k")], g[m.index_of("conv2.b")],
                    d_p1);
    std::vector<double> d_a1(a1.size(), 0.0);
    for (std::size_t o = 0; o < p1.size(); ++o) {
      const std::uint32_t src = arg1[o];
      if (a1[src] > 0.0) d_a1[src] += d_p1[o];
    }
    conv2d_backward(input, m.param("conv1.k").values, d_a1, s1, g[m.index_of("conv1.k")], g[m.index_of("conv1.b")],
                    {});
  }
};

inline CellParams cell_params(const Model& m, const std::string& prefix, Gradients* g) {
  const std::size_t iw = m.index_of(prefix + ".W"), iu = m.index_of(prefix + ".U"), ib = m.index_of(prefix + ".b");
  return {m.params[iw].values.data(), m.params[iu].values.data(), m.params[ib].values.data(),
          g ? (*g)[iw].data() : nullptr, g ? (*g)[iu].data() : nullptr, g ? (*g)[ib].data() : nullptr};
}

// Everything needed to backpropagate one sample.
struct SampleTrace {
  SimpleRnnTrace rnn;
  LstmTrace lstm, lstm_bwd;
  GruTrace gru;
  ConvTrace conv;
  std::vector<double> features;   // pre-dropout readout
  std::vector<double> dropped;    // post-dropout
  double logit = 0.0;
  double p = 0.5;
};

inline void check_sample(const Model& m, std::span<const double> sample) {
  if (sample.size() != m.spec.input.size())
    fail(ErrorKind::ShapeMismatch, "sample has " + std::to_string(sample.size()) + " values, model expects " +
                                       std::to_string(m.spec.input.size()));
}

inline void run_features(const Model& m, std::span<const double> sample, SampleTrace& tr) {
  check_sample(m, sample);
  const int n = m.spec.hidden_n;
  const SeqInput seq{sample.data(), m.spec.input.d0, m.spec.input.d1, false};
  switch (m.spec.arch) {
    case Arch::SimpleRNN:
      tr.rnn.forward(cell_params(m, "rnn", nullptr), seq, n);
      tr.features.assign(tr.rnn.final_state(), tr.rnn.final_state() + n);
      break;
    case Arch::LSTM:
      tr.lstm.forward(cell_params(m, "lstm", nullptr), seq, n);
      tr.features.assign(tr.lstm.final_state(), tr.lstm.final_state() + n);
      break;
    case Arch::GRU:
      tr.gru.forward(cell_params(m, "gru", nullptr), seq, n);
      tr.features.assign(tr.gru.final_state(), tr.gru.final_state() + n);
      break;
    case Arch::BLSTM: {
      SeqInput rev = seq;
      rev.reversed = true;
      tr.lstm.forward(cell_params(m, "fwd", nullptr), seq, n);
      tr.lstm_bwd.forward(cell_params(m, "bwd", nullptr), rev, n);
      tr.features.assign(tr.lstm.final_state(), tr.lstm.final_state() + n);
      tr.features.insert(tr.features.end(), tr.lstm_bwd.final_state(), tr.lstm_bwd.final_state() + n);
      break;
    }
    case Arch::SmallConv:
      tr.conv.forward(m, sample);
      tr.features = tr.conv.features;
      break;
  }
}

// mask empty = no dropout; otherwise elementwise multipliers.
inline void run_head(const Model& m, std::span<const double> mask, SampleTrace& tr) {
  tr.dropped = tr.features;
  if (!mask.empty())
    for (std::size_t i = 0; i < tr.dropped.size(); ++i) tr.dropped[i] *= mask[i];
  const auto& w = m.param("head.w").values;
  double z = m.param("head.b").values[0];
  for (std::size_t i = 0; i < w.size(); ++i) z += w[i] * tr.dropped[i];
  tr.logit = z;
  tr.p = sigmoid(z);
}

inline void backprop(const Model& m, std::span<const double> sample, std::span<const double> mask,
                     const SampleTrace& tr, double d_logit, Gradients& g) {
  const std::size_t iw = m.index_of("head.w");
  const auto& w = m.params[iw].values;
  auto& dw = g[iw];
  g[m.index_of("head.b")][0] += d_logit;
  std::vector<double> d_feat(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    dw[i] += d_logit * tr.dropped[i];
    d_feat[i] = d_logit * w[i] * (mask.empty() ? 1.0 : mask[i]);
  }
  const int n = m.spec.hidden_n;
  const SeqInput seq{sample.data(), m.spec.input.d0, m.spec.input.d1, false};
  switch (m.spec.arch) {
    case Arch::SimpleRNN: tr.rnn.backward(cell_params(m, "rnn", &g), seq, d_feat.data()); break;
    case Arch::LSTM: tr.lstm.backward(cell_params(m, "lstm", &g), seq, d_feat.data()); break;
    case Arch::GRU: tr.gru.backward(cell_params(m, "gru", &g), seq, d_feat.data()); break;
    case Arch::BLSTM: {
      SeqInput rev = seq;
      rev.reversed = true;
      tr.lstm.backward(cell_params(m, "fwd", &g), seq, d_feat.data());
      tr.lstm_bwd.backward(cell_params(m, "bwd", &g), rev, d_feat.data() + n);
      break;
    }
    case Arch::SmallConv: tr.conv.backward(m, sample, d_feat.data(), g); break;
  }
}

}  // namespace nn_detail

// ---------------------------------------------------------------------------
// Public forward / loss API

using Sample = std::span<const double>;

inline constexpr double kProbClamp = 1e-7;

// Pre-dropout feature vector fed to the head.
inline std::vector<double> readout(const Model& m, Sample sample) {
  nn_detail::SampleTrace tr;
  nn_detail::run_features(m, sample, tr);
  return tr.features;
}

// Inverted-dropout multipliers for one sample: 0 with probability q,
// otherwise 1/(1-q).
inline std::vector<double> draw_dropout_mask(Model& m) {
  const double q = m.spec.drop_rate;
  std::vector<double> mask(static_cast<std::size_t>(m.readout_width()));
  for (auto& v : mask) v = m.dropout_rng().uniform() < q ? 0.0 : 1.0 / (1.0 - q);
  return mask;
}

// Deterministic probability, dropout disabled.
inline double predict_proba(const Model& m, Sample sample) {
  nn_detail::SampleTrace tr;
  nn_detail::run_features(m, sample, tr);
  nn_detail::run_head(m, {}, tr);
  return tr.p;
}

// Probabilities for a batch; Train mode applies dropout with the model's
// stream RNG.
inline std::vector<double> forward(Model& m, std::span<const Sample> batch) {
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto& s : batch) {
    nn_detail::SampleTrace tr;
    nn_detail::run_features(m, s, tr);
    if (m.mode == Mode::Train) {
      const auto mask = draw_dropout_mask(m);
      nn_detail::run_head(m, mask, tr);
    } else {
      nn_detail::run_head(m, {}, tr);
    }
    out.push_back(tr.p);
  }
  return out;
}

struct Prediction {
  int label = 0;
  double p = 0.5;
};

inline Prediction predict(const Model& m, Sample sample) {
  const double p = predict_proba(m, sample);
  return {p > 0.5 ? 1 : 0, p};
}

inline double bce(double p, int y) {
  const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return -(y ? std::log(pc) : std::log(1.0 - pc));
}

struct LossAndGrads {
  double loss = 0.0;
  Gradients grads;
};

// Mean BCE over the batch and its exact gradient for explicit dropout
// masks (one per sample, or none). Per-sample gradients are reduced in
// sample order, so results do not depend on `jobs`.
inline LossAndGrads loss_and_grads_with_masks(const Model& m, std::span<const Sample> batch,
                                              std::span<const int> labels,
                                              std::span<const std::vector<double>> masks, int jobs = 1) {
  if (batch.size() != labels.size() || batch.empty())
    fail(ErrorKind::ShapeMismatch, "batch and labels must be nonempty and equally long");
  if (!masks.empty() && masks.size() != batch.size()) fail(ErrorKind::ShapeMismatch, "one mask per sample");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<Gradients> per_sample(batch.size());
  std::vector<double> losses(batch.size());
  parallel_for(batch.size(), jobs, [&](std::size_t i) {
    nn_detail::SampleTrace tr;
    const std::span<const double> mask = masks.empty() ? std::span<const double>{} : std::span<const double>(masks[i]);
    nn_detail::run_features(m, batch[i], tr);
    nn_detail::run_head(m, mask, tr);
    const int y = labels[i];
    losses[i] = bce(tr.p, y);
    const bool clamped = tr.p < kProbClamp || tr.p > 1.0 - kProbClamp;
    const double d_logit = clamped ? 0.0 : (tr.p - y) * inv_b;
    per_sample[i] = m.zero_grads();
    nn_detail::backprop(m, batch[i], mask, tr, d_logit, per_sample[i]);
  });
  LossAndGrads out;
  out.grads = m.zero_grads();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.loss += losses[i];
    for (std::size_t p = 0; p < out.grads.size(); ++p) {
      auto& dst = out.grads[p];
      const auto& src = per_sample[i][p];
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
  out.loss *= inv_b;
  return out;
}

inline LossAndGrads loss_and_grads(Model& m, std::span<const Sample> batch, std::span<const int> labels,
                                   int jobs = 1) {
  for (int y : labels)
    if (y != 0 && y != 1) fail(ErrorKind::InvalidValue, "labels must be 0 or 1");
  std::vector<std::vector<double>> masks;
  if (m.mode == Mode::Train) {
    masks.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) masks.push_back(draw_dropout_mask(m));
  }
  return loss_and_grads_with_masks(m, batch, labels, masks, jobs);
}

// Infer-mode mean BCE.
inline double mean_loss(const Model& m, std::span<const Sample> batch, std::span<const int> labels, int jobs = 1) {
  std::vector<double> losses(batch.size());
  parallel_for(batch.size(), jobs, [&](std::size_t i) { losses[i] = bce(predict_proba(m, batch[i]), labels[i]); });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return batch.empty() ? 0.0 : sum / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  Gradients m;
  Gradients v;
  std::int64_t t = 0;
  double eta = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_model(const Model& model, double eta) {
    AdamState s;
    s.m = model.zero_grads();
    s.v = model.zero_grads();
    s.eta = eta;
    return s;
  }
};

inline void adam_step(AdamState& state, Model& model, const Gradients& grads) {
  if (state.m.size() != model.params.size() || grads.size() != model.params.size())
    fail(ErrorKind::ShapeMismatch, "optimizer state does not match model parameters");
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < model.params.size(); ++p) {
    auto& w = model.params[p].values;
    auto& m = state.m[p];
    auto& v = state.v[p];
    const auto& g = grads[p];
    if (m.size() != w.size() || v.size() != w.size() || g.size() != w.size())
      fail(ErrorKind::ShapeMismatch, "shape mismatch for " + model.params[p].name);
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      w[k] -= state.eta * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Serialization: one JSON header line, then little-endian float64 values of
// every parameter in header order.

inline constexpr int kModelFormatVersion = 1;

inline void save_model(std::ostream& out, const Model& m) {
  nlohmann::json header;
  header["format"] = "cursor-attn-model";
  header["version"] = kModelFormatVersion;
  header["spec"] = to_json(m.spec);
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : m.params) params.push_back({{"name", p.name}, {"shape", p.shape}});
  header["params"] = params;
  out << header.dump() << '\n';
  for (const auto& p : m.params)
    for (double v : p.values) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      char bytes[8];
      for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
      out.write(bytes, 8);
    }
}

inline Model load_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::MalformedInput, "model file is empty");
  const auto header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "cursor-attn-model")
    fail(ErrorKind::MalformedInput, "not a model file");
  if (header.value("version", 0) != kModelFormatVersion) fail(ErrorKind::MalformedInput, "unsupported model version");
  Model m = init_model(spec_from_json(header.at("spec")));
  const auto& names = header.at("params");
  if (names.size() != m.params.size()) fail(ErrorKind::MalformedInput, "parameter list mismatch");
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    if (names[i].at("name").get<std::string>() != m.params[i].name ||
        names[i].at("shape").get<std::vector<int>>() != m.params[i].shape)
      fail(ErrorKind::MalformedInput, "parameter layout mismatch at " + m.params[i].name);
    for (double& v : m.params[i].values) {
      unsigned char bytes[8];
      if (!in.read(reinterpret_cast<char*>(bytes), 8)) fail(ErrorKind::MalformedInput, "truncated parameter blob");
      std::uint64_t bits = 0;
      for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
      std::memcpy(&v, &bits, sizeof v);
    }
  }
  return m;
}

}  // namespace cursor_attn

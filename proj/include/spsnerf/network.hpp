#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "spsnerf/autodiff.hpp"
#include "spsnerf/params.hpp"

namespace spsnerf {

// Radiance field architecture: a ReLU trunk on the encoded position with one
// skip re-injection, a softplus density head fed by position only, and a
// sigmoid color head that sees the encoded view direction.
struct FieldConfig {
  int l_pos = 10;
  int l_dir = 4;
  int width = 128;
  int depth = 4;   // trunk layers
  int skip = 2;    // trunk layer whose input re-appends the encoded position
  enum class Act { relu, sine } act = Act::relu;

  int in_pos() const { return 6 * l_pos; }
  int in_dir() const { return 6 * l_dir; }
  int color_hidden() const { return width / 2 < 8 ? 8 : width / 2; }

  void validate() const {
    if (l_pos < 1) throw std::invalid_argument("FieldConfig: l_pos must be >= 1");
    if (l_dir < 0) throw std::invalid_argument("FieldConfig: l_dir must be >= 0");
    if (width < 8) throw std::invalid_argument("FieldConfig: width must be >= 8");
    if (depth < 2) throw std::invalid_argument("FieldConfig: depth must be >= 2");
    if (skip <= 0 || skip >= depth)
      throw std::invalid_argument("FieldConfig: skip must lie strictly inside the trunk");
  }
};

// sin/cos ladder over frequencies 2^j * pi, j < L, per component. Layout is
// component-major: [sin(2^0 pi v_c), cos(2^0 pi v_c), sin(2^1 pi v_c), ...]
// for c = x, y, z. Inputs are expected in [-1, 1].
template <class Real>
inline void positional_encode(const double* v, int comps, int L, Real* out) {
  constexpr double pi = 3.14159265358979323846;
  for (int c = 0; c < comps; ++c) {
    double s = std::sin(pi * v[c]);
    double co = std::cos(pi * v[c]);
    for (int j = 0; j < L; ++j) {
      *out++ = Real(s);
      *out++ = Real(co);
      // angle doubling to the next frequency
      double s2 = 2.0 * s * co;
      double c2 = 1.0 - 2.0 * s * s;
      s = s2;
      co = c2;
    }
  }
}

template <class Real>
inline Real softplus(Real x) {
  return x > Real(20) ? x : Real(std::log1p(std::exp(double(x))));
}
template <class Real>
inline Real sigmoid(Real x) {
  return Real(1) / (Real(1) + Real(std::exp(-double(x))));
}

// y[s,o] = b[o] + sum_i W[o,i] * x[s,i]; W is row-major out x in.
template <class Real>
inline void linear_forward(const Real* W, const Real* b, int out, int in, const Real* x, int n,
                           Real* y) {
  for (int s = 0; s < n; ++s) {
    const Real* xs = x + std::size_t(s) * in;
    Real* ys = y + std::size_t(s) * out;
    for (int o = 0; o < out; ++o) {
      const Real* w = W + std::size_t(o) * in;
      Real acc = b[o];
      for (int i = 0; i < in; ++i) acc += w[i] * xs[i];
      ys[o] = acc;
    }
  }
}

// Accumulates dW, db and (optionally) dx for the layer above.
template <class Real>
inline void linear_backward(const Real* W, int out, int in, const Real* x, const Real* dy, int n,
                            Real* dW, Real* db, Real* dx) {
  for (int s = 0; s < n; ++s) {
    const Real* xs = x + std::size_t(s) * in;
    const Real* dys = dy + std::size_t(s) * out;
    for (int o = 0; o < out; ++o) {
      const Real g = dys[o];
      if (g == Real(0)) continue;
      Real* dw = dW + std::size_t(o) * in;
      for (int i = 0; i < in; ++i) dw[i] += g * xs[i];
      db[o] += g;
    }
    if (dx) {
      Real* dxs = dx + std::size_t(s) * in;
      for (int o = 0; o < out; ++o) {
        const Real g = dys[o];
        if (g == Real(0)) continue;
        const Real* w = W + std::size_t(o) * in;
        for (int i = 0; i < in; ++i) dxs[i] += g * w[i];
      }
    }
  }
}

// Activations kept from the forward pass of one ray's sample set.
template <class Real>
struct FieldTrace {
  int n = 0;
  std::vector<Real> pe_x;                  // n x in_pos
  std::vector<Real> pe_d;                  // in_dir (one direction per ray)
  std::vector<std::vector<Real>> pre;      // trunk pre-activations, n x width each
  std::vector<std::vector<Real>> act;      // trunk activations, n x width each
  std::vector<Real> skip_in;               // n x (width + in_pos) input of the skip layer
  std::vector<Real> sigma_pre, feat, color_in, hid_pre, hid_act, rgb_pre;
  std::vector<Real> sigma;                 // n
  std::vector<Real> rgb;                   // n x 3

  // scratch for backward
  std::vector<Real> d_a, d_b, d_feat, d_color_in, d_hid;
};

inline std::vector<std::pair<std::string, std::pair<int, int>>> field_layer_shapes(
    const FieldConfig& cfg) {
  std::vector<std::pair<std::string, std::pair<int, int>>> out;
  for (int l = 0; l < cfg.depth; ++l) {
    int in = l == 0 ? cfg.in_pos() : (l == cfg.skip ? cfg.width + cfg.in_pos() : cfg.width);
    out.push_back({"trunk" + std::to_string(l), {cfg.width, in}});
  }
  out.push_back({"sigma", {1, cfg.width}});
  out.push_back({"feat", {cfg.width, cfg.width}});
  out.push_back({"rgb_hidden", {cfg.color_hidden(), cfg.width + cfg.in_dir()}});
  out.push_back({"rgb_out", {3, cfg.color_hidden()}});
  return out;
}

template <class Real>
void init_field_params(ParamStoreT<Real>& store, const FieldConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 eng(seed);
  for (auto& [name, sh] : field_layer_shapes(cfg)) {
    auto& w = store.add(name + ".w", {std::uint32_t(sh.first), std::uint32_t(sh.second)});
    double a = std::sqrt(6.0 / sh.second);
    std::uniform_real_distribution<double> dist(-a, a);
    for (auto& v : w.value) v = Real(dist(eng));
    store.add(name + ".b", {std::uint32_t(sh.first)});
  }
  // start close to transparent so early training does not terminate rays at t_near
  store.at("sigma.b").value[0] = Real(-4.0);
}

template <class Real>
inline Real apply_act(FieldConfig::Act act, Real x) {
  return act == FieldConfig::Act::relu ? (x > Real(0) ? x : Real(0)) : Real(std::sin(double(x)));
}
template <class Real>
inline Real act_deriv(FieldConfig::Act act, Real pre) {
  return act == FieldConfig::Act::relu ? (pre > Real(0) ? Real(1) : Real(0))
                                       : Real(std::cos(double(pre)));
}

// Evaluates sigma and rgb for n samples sharing one view direction.
// Positions are already normalized to [-1,1]^3; dir is a unit vector.
template <class Real>
void field_forward(const ParamStoreT<Real>& store, const FieldConfig& cfg,
                   const double* positions, const double* dir, int n, FieldTrace<Real>& tr) {
  const int W = cfg.width, P = cfg.in_pos(), Dc = cfg.in_dir(), H = cfg.color_hidden();
  tr.n = n;
  tr.pe_x.resize(std::size_t(n) * P);
  for (int s = 0; s < n; ++s) positional_encode(positions + 3 * s, 3, cfg.l_pos, tr.pe_x.data() + std::size_t(s) * P);
  tr.pe_d.resize(Dc);
  if (Dc > 0) positional_encode(dir, 3, cfg.l_dir, tr.pe_d.data());

  tr.pre.resize(cfg.depth);
  tr.act.resize(cfg.depth);
  const Real* layer_in = tr.pe_x.data();
  for (int l = 0; l < cfg.depth; ++l) {
    int in = l == 0 ? P : (l == cfg.skip ? W + P : W);
    if (l == cfg.skip) {
      tr.skip_in.resize(std::size_t(n) * in);
      for (int s = 0; s < n; ++s) {
        Real* dst = tr.skip_in.data() + std::size_t(s) * in;
        const Real* prev = tr.act[l - 1].data() + std::size_t(s) * W;
        for (int i = 0; i < W; ++i) dst[i] = prev[i];
        const Real* pe = tr.pe_x.data() + std::size_t(s) * P;
        for (int i = 0; i < P; ++i) dst[W + i] = pe[i];
      }
      layer_in = tr.skip_in.data();
    }
    tr.pre[l].resize(std::size_t(n) * W);
    tr.act[l].resize(std::size_t(n) * W);
    const auto& w = store.at("trunk" + std::to_string(l) + ".w");
    const auto& b = store.at("trunk" + std::to_string(l) + ".b");
    linear_forward(w.value.data(), b.value.data(), W, in, layer_in, n, tr.pre[l].data());
    for (std::size_t i = 0; i < tr.pre[l].size(); ++i) tr.act[l][i] = apply_act(cfg.act, tr.pre[l][i]);
    layer_in = tr.act[l].data();
  }

  const Real* trunk_out = tr.act[cfg.depth - 1].data();
  tr.sigma_pre.resize(n);
  tr.sigma.resize(n);
  linear_forward(store.at("sigma.w").value.data(), store.at("sigma.b").value.data(), 1, W,
                 trunk_out, n, tr.sigma_pre.data());
  for (int s = 0; s < n; ++s) tr.sigma[s] = softplus(tr.sigma_pre[s]);

  tr.feat.resize(std::size_t(n) * W);
  linear_forward(store.at("feat.w").value.data(), store.at("feat.b").value.data(), W, W,
                 trunk_out, n, tr.feat.data());

  tr.color_in.resize(std::size_t(n) * (W + Dc));
  for (int s = 0; s < n; ++s) {
    Real* dst = tr.color_in.data() + std::size_t(s) * (W + Dc);
    const Real* f = tr.feat.data() + std::size_t(s) * W;
    for (int i = 0; i < W; ++i) dst[i] = f[i];
    for (int i = 0; i < Dc; ++i) dst[W + i] = tr.pe_d[i];
  }
  tr.hid_pre.resize(std::size_t(n) * H);
  tr.hid_act.resize(std::size_t(n) * H);
  linear_forward(store.at("rgb_hidden.w").value.data(), store.at("rgb_hidden.b").value.data(), H,
                 W + Dc, tr.color_in.data(), n, tr.hid_pre.data());
  for (std::size_t i = 0; i < tr.hid_pre.size(); ++i) tr.hid_act[i] = apply_act(cfg.act, tr.hid_pre[i]);

  tr.rgb_pre.resize(std::size_t(n) * 3);
  tr.rgb.resize(std::size_t(n) * 3);
  linear_forward(store.at("rgb_out.w").value.data(), store.at("rgb_out.b").value.data(), 3, H,
                 tr.hid_act.data(), n, tr.rgb_pre.data());
  for (std::size_t i = 0; i < tr.rgb_pre.size(); ++i) tr.rgb[i] = sigmoid(tr.rgb_pre[i]);
}

// Backprop from per-sample (d_sigma, d_rgb) into the gradient buffers.
// Input gradients (positions/direction) are not needed and not computed.
template <class Real>
void field_backward(const ParamStoreT<Real>& store, const FieldConfig& cfg, FieldTrace<Real>& tr,
                    const Real* d_sigma, const Real* d_rgb, GradBuffers<Real>& gb) {
  const int W = cfg.width, P = cfg.in_pos(), Dc = cfg.in_dir(), H = cfg.color_hidden();
  const int n = tr.n;
  auto gidx = [&](const std::string& name) { return store.index.at(name); };
  auto gw = [&](const std::string& name) { return gb.g[gidx(name + ".w")].data(); };
  auto gbias = [&](const std::string& name) { return gb.g[gidx(name + ".b")].data(); };
  auto wv = [&](const std::string& name) { return store.at(name + ".w").value.data(); };

  auto& d_rgb_pre = tr.d_a;
  d_rgb_pre.assign(std::size_t(n) * 3, Real(0));
  for (int i = 0; i < n * 3; ++i) {
    const Real y = tr.rgb[i];
    d_rgb_pre[i] = d_rgb[i] * y * (Real(1) - y);
  }
  auto& d_hid = tr.d_hid;
  d_hid.assign(std::size_t(n) * H, Real(0));
  linear_backward(wv("rgb_out"), 3, H, tr.hid_act.data(), d_rgb_pre.data(), n, gw("rgb_out"),
                  gbias("rgb_out"), d_hid.data());
  for (std::size_t i = 0; i < d_hid.size(); ++i) d_hid[i] *= act_deriv(cfg.act, tr.hid_pre[i]);

  auto& d_color_in = tr.d_color_in;
  d_color_in.assign(std::size_t(n) * (W + Dc), Real(0));
  linear_backward(wv("rgb_hidden"), H, W + Dc, tr.color_in.data(), d_hid.data(), n,
                  gw("rgb_hidden"), gbias("rgb_hidden"), d_color_in.data());

  auto& d_feat = tr.d_feat;
  d_feat.assign(std::size_t(n) * W, Real(0));
  for (int s = 0; s < n; ++s)
    for (int i = 0; i < W; ++i)
      d_feat[std::size_t(s) * W + i] = d_color_in[std::size_t(s) * (W + Dc) + i];

  // the trunk output feeds two heads: feat and sigma
  auto& d_trunk = tr.d_a;
  d_trunk.assign(std::size_t(n) * W, Real(0));
  linear_backward(wv("feat"), W, W, tr.act[cfg.depth - 1].data(), d_feat.data(), n, gw("feat"),
                  gbias("feat"), d_trunk.data());

  auto& d_sigma_pre = tr.d_b;
  d_sigma_pre.assign(n, Real(0));
  for (int s = 0; s < n; ++s) d_sigma_pre[s] = d_sigma[s] * sigmoid(tr.sigma_pre[s]);
  linear_backward(wv("sigma"), 1, W, tr.act[cfg.depth - 1].data(), d_sigma_pre.data(), n,
                  gw("sigma"), gbias("sigma"), d_trunk.data());

  std::vector<Real> d_lower;
  for (int l = cfg.depth - 1; l >= 0; --l) {
    for (std::size_t i = 0; i < d_trunk.size(); ++i) d_trunk[i] *= act_deriv(cfg.act, tr.pre[l][i]);
    int in = l == 0 ? P : (l == cfg.skip ? W + P : W);
    const Real* xin = l == 0 ? tr.pe_x.data()
                             : (l == cfg.skip ? tr.skip_in.data() : tr.act[l - 1].data());
    if (l == 0) {
      linear_backward(wv("trunk0"), W, in, xin, d_trunk.data(), n, gw("trunk0"), gbias("trunk0"),
                      static_cast<Real*>(nullptr));
      break;
    }
    d_lower.assign(std::size_t(n) * in, Real(0));
    std::string name = "trunk" + std::to_string(l);
    linear_backward(wv(name), W, in, xin, d_trunk.data(), n, gw(name), gbias(name),
                    d_lower.data());
    if (l == cfg.skip) {
      // drop the encoded-position part of the skip input
      d_trunk.assign(std::size_t(n) * W, Real(0));
      for (int s = 0; s < n; ++s)
        for (int i = 0; i < W; ++i)
          d_trunk[std::size_t(s) * W + i] = d_lower[std::size_t(s) * in + i];
    } else {
      d_trunk = d_lower;
    }
  }
}

// Re-runs the forward pass checking each stage, to attribute a non-finite
// value to a layer by name. Returns empty string when everything is finite.
template <class Real>
std::string find_nonfinite_layer(const ParamStoreT<Real>& store, const FieldConfig& cfg,
                                 const FieldTrace<Real>& tr) {
  auto bad = [](const std::vector<Real>& v) {
    for (Real x : v)
      if (!std::isfinite(double(x))) return true;
    return false;
  };
  for (auto& a : store.arrays) {
    for (Real x : a.value)
      if (!std::isfinite(double(x))) return a.name;
  }
  for (int l = 0; l < cfg.depth; ++l)
    if (bad(tr.pre[l])) return "trunk" + std::to_string(l);
  if (bad(tr.sigma_pre)) return "sigma";
  if (bad(tr.feat)) return "feat";
  if (bad(tr.hid_pre)) return "rgb_hidden";
  if (bad(tr.rgb_pre)) return "rgb_out";
  return "";
}

}  // namespace spsnerf

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "spsnerf/geometry.hpp"

namespace spsnerf {

enum class SampleTag : std::uint8_t { stratified = 0, guided = 1 };

// Sorted sample distances along one ray. delta[i] = t[i+1] - t[i]; the last
// delta is a far sentinel so the final sample can absorb remaining density.
struct RaySampleSet {
  std::vector<double> t;
  std::vector<double> delta;
  std::vector<SampleTag> tag;
  int size() const { return int(t.size()); }
};

inline constexpr double kFarDelta = 1e10;
inline constexpr double kMinSampleStep = 1e-6;

// One uniform draw inside each of n equal bins of [t0, t1]; already sorted.
template <class Rng>
std::vector<double> stratified_samples(double t0, double t1, int n, Rng& rng) {
  if (!(n >= 1) || !(t1 > t0)) throw std::invalid_argument("stratified_samples: bad range");
  std::vector<double> out(n);
  const double w = (t1 - t0) / n;
  for (int i = 0; i < n; ++i) out[i] = t0 + (i + rng.uniform()) * w;
  return out;
}

// Gaussian draws around a depth estimate, clamped (not redrawn) to [t0, t1].
template <class Rng>
std::vector<double> guided_samples(double mean, double stddev, double t0, double t1, int n,
                                   Rng& rng) {
  if (!(n >= 1) || !(t1 > t0)) throw std::invalid_argument("guided_samples: bad range");
  if (stddev < 0) throw std::invalid_argument("guided_samples: negative stddev");
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    double x = mean + stddev * rng.normal();
    out[i] = std::clamp(x, t0, t1);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Inverse-CDF resampling proportional to the previous pass's weights, over
// the bins [t[i], t[i+1]] (the last bin is capped at t1). Degenerate weight
// mass falls back to uniform draws.
template <class Rng>
std::vector<double> importance_samples(const std::vector<double>& t, const std::vector<double>& w,
                                       double t0, double t1, int n, Rng& rng) {
  if (t.size() != w.size() || t.empty()) throw std::invalid_argument("importance_samples: shape");
  std::vector<double> out(n);
  const int m = int(t.size());
  std::vector<double> cdf(m + 1, 0.0);
  for (int i = 0; i < m; ++i) cdf[i + 1] = cdf[i] + (w[i] > 0 ? w[i] : 0.0);
  const double total = cdf[m];
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    if (total <= 0) {
      out[i] = t0 + u * (t1 - t0);
      continue;
    }
    double target = u * total;
    int k = int(std::upper_bound(cdf.begin(), cdf.end(), target) - cdf.begin()) - 1;
    if (k >= m) k = m - 1;
    double lo = t[k];
    double hi = k + 1 < m ? t[k + 1] : t1;
    double span = cdf[k + 1] - cdf[k];
    double frac = span > 0 ? (target - cdf[k]) / span : 0.5;
    out[i] = lo + frac * (hi - lo);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Merge two sorted groups, keep per-sample group tags, enforce a strictly
// increasing sequence (duplicates, e.g. from clamping, get nudged apart by
// kMinSampleStep), and fill deltas with the far sentinel at the end.
inline RaySampleSet finalize_samples(const std::vector<double>& strat,
                                     const std::vector<double>& guided, double t0, double t1) {
  RaySampleSet set;
  const int n = int(strat.size() + guided.size());
  if (n == 0) throw std::invalid_argument("finalize_samples: empty sample set");
  set.t.reserve(n);
  set.tag.reserve(n);
  std::size_t i = 0, j = 0;
  while (i < strat.size() || j < guided.size()) {
    bool take_strat = j >= guided.size() || (i < strat.size() && strat[i] <= guided[j]);
    if (take_strat) {
      set.t.push_back(strat[i++]);
      set.tag.push_back(SampleTag::stratified);
    } else {
      set.t.push_back(guided[j++]);
      set.tag.push_back(SampleTag::guided);
    }
  }
  // nudge duplicates upward, then pull back anything pushed past t1
  for (int k = 1; k < n; ++k)
    if (set.t[k] <= set.t[k - 1]) set.t[k] = set.t[k - 1] + kMinSampleStep;
  if (set.t.back() > t1) {
    set.t.back() = std::max(t1, t0 + kMinSampleStep);
    for (int k = n - 2; k >= 0; --k)
      if (set.t[k] >= set.t[k + 1]) set.t[k] = set.t[k + 1] - kMinSampleStep;
  }
  set.delta.resize(n);
  for (int k = 0; k + 1 < n; ++k) set.delta[k] = set.t[k + 1] - set.t[k];
  set.delta[n - 1] = kFarDelta;
  return set;
}

struct GaussParam {
  double mean = 0, stddev = 0;
};
enum class SampleMode { train, test };

// Stratified group plus a Gaussian-guided group. In train mode the guided
// center is the depth prior when one is attached, otherwise the predicted
// depth from the stratified pass; in test mode it is always the prediction.
template <class Rng>
RaySampleSet two_group_samples(const Ray& ray, int n1, int n2, std::optional<GaussParam> prior,
                               std::optional<GaussParam> predicted, SampleMode mode, Rng& rng) {
  std::vector<double> strat =
      n1 > 0 ? stratified_samples(ray.t_near, ray.t_far, n1, rng) : std::vector<double>{};
  std::vector<double> guided;
  if (n2 > 0) {
    std::optional<GaussParam> center = mode == SampleMode::train && prior ? prior : predicted;
    if (!center) throw std::invalid_argument("two_group_samples: no center for the guided group");
    guided = guided_samples(center->mean, center->stddev, ray.t_near, ray.t_far, n2, rng);
  }
  return finalize_samples(strat, guided, ray.t_near, ray.t_far);
}

}  // namespace spsnerf

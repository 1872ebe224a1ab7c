#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "scene/error.hpp"
#include "scene/random.hpp"
#include "scene/types.hpp"

namespace scene {

namespace detail {

inline void check_probability(double p) {
  if (!std::isfinite(p) || p < 0.0 || p > 1.0)
    throw ValidationError("probability " + std::to_string(p) + " outside [0,1]");
}

inline void check_soft_inputs(std::span<const double> orig,
                              std::span<const std::vector<double>> cf) {
  if (orig.empty()) throw MetricError("no instances");
  if (orig.size() != cf.size()) throw ValidationError("original and counterfactual instance counts differ");
  for (std::size_t n = 0; n < orig.size(); ++n) {
    check_probability(orig[n]);
    if (cf[n].empty()) throw ValidationError("instance without counterfactual probabilities");
    for (double p : cf[n]) check_probability(p);
  }
}

inline double sum_drops(double orig, std::span<const double> cf) {
  double s = 0.0;
  for (double p : cf) s += orig - p;
  return s;
}

}  // namespace detail

// Mean over instances of the mean drop in the originally predicted class's
// probability across that instance's counterfactuals. cf[n][k] is
// p(original class | counterfactual k of instance n).
inline double validity_soft(std::span<const double> orig, std::span<const std::vector<double>> cf) {
  detail::check_soft_inputs(orig, cf);
  double total = 0.0;
  for (std::size_t n = 0; n < orig.size(); ++n)
    total += detail::sum_drops(orig[n], cf[n]) / static_cast<double>(cf[n].size());
  return total / static_cast<double>(orig.size());
}

inline constexpr double kDistanceEpsilon = 1e-9;

struct CSoftResult {
  double value = 0.0;
  std::size_t used = 0;
  // Instances whose summed distance fell below kDistanceEpsilon.
  std::size_t excluded = 0;
};

// Per instance: summed probability drops over summed distances; averaged over
// the instances whose distance sum is at least kDistanceEpsilon.
inline CSoftResult c_soft(std::span<const double> orig, std::span<const std::vector<double>> cf,
                          std::span<const std::vector<double>> dists) {
  detail::check_soft_inputs(orig, cf);
  if (dists.size() != orig.size()) throw ValidationError("distance instance count differs");
  CSoftResult r;
  double total = 0.0;
  for (std::size_t n = 0; n < orig.size(); ++n) {
    if (dists[n].size() != cf[n].size())
      throw ValidationError("distance count differs from counterfactual count");
    double dsum = 0.0;
    for (double d : dists[n]) {
      if (!std::isfinite(d) || d < 0.0) throw ValidationError("distance must be finite and non-negative");
      dsum += d;
    }
    if (dsum < kDistanceEpsilon) {
      ++r.excluded;
      continue;
    }
    total += detail::sum_drops(orig[n], cf[n]) / dsum;
    ++r.used;
  }
  if (r.used == 0) throw MetricError("every instance has zero counterfactual distance");
  r.value = total / static_cast<double>(r.used);
  return r;
}

// 1 - cosine similarity, clamped to [0, 2]. Equal vectors give exactly 0.
inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw ValidationError("embedding dimensionality mismatch");
  if (std::equal(a.begin(), a.end(), b.begin())) {
    bool nonzero = std::any_of(a.begin(), a.end(), [](double v) { return v != 0.0; });
    if (nonzero) return 0.0;
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ValidationError("zero-norm sentence embedding");
  const double cos = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(1.0 - cos, 0.0, 2.0);
}

// Encoder is anything with sentence_embed(std::vector<std::string>) -> std::vector<std::vector<double>>.
template <typename Encoder>
double sentence_distance(Encoder& encoder, const std::string& a, const std::string& b) {
  if (a == b) return 0.0;
  const auto v = encoder.sentence_embed({a, b});
  if (v.size() != 2) throw ProtocolError("sentence_embed returned the wrong number of vectors");
  return cosine_distance(v[0], v[1]);
}

struct NoiseConfig {
  double sigma = 0.01;
  std::size_t samples = 50;
  std::uint64_t seed = 0;
};

inline void validate(const NoiseConfig& n) {
  if (!(n.sigma > 0.0) || !std::isfinite(n.sigma)) throw ValidationError("noise sigma must be positive");
  if (n.samples < 1) throw ValidationError("noise sample count must be at least 1");
}

struct InfidelityEstimate {
  double value = 0.0;
  // Standard error of the Monte Carlo mean (0 for a single draw).
  double std_error = 0.0;
  std::size_t samples = 0;
};

// Monte Carlo mean of (<I, attribution> - (f(x) - f(x - I)))^2 over the given
// perturbations I. f maps an embedding matrix to a scalar model output.
template <typename Model>
InfidelityEstimate infidelity_from_draws(const Matrix& attribution, const Matrix& embeddings,
                                         Model&& f, std::span<const Matrix> draws) {
  if (!attribution.same_shape(embeddings))
    throw ValidationError("attribution shape " + std::to_string(attribution.rows) + "x" +
                          std::to_string(attribution.cols) + " differs from embeddings " +
                          std::to_string(embeddings.rows) + "x" + std::to_string(embeddings.cols));
  if (draws.empty()) throw ValidationError("no perturbation draws");
  const double fx = f(embeddings);
  std::vector<double> terms;
  terms.reserve(draws.size());
  Matrix perturbed = embeddings;
  for (const auto& noise : draws) {
    if (!noise.same_shape(embeddings)) throw ValidationError("perturbation shape mismatch");
    double explained = 0.0;
    for (std::size_t i = 0; i < noise.values.size(); ++i) {
      explained += noise.values[i] * attribution.values[i];
      perturbed.values[i] = embeddings.values[i] - noise.values[i];
    }
    const double gap = explained - (fx - f(perturbed));
    terms.push_back(gap * gap);
  }
  InfidelityEstimate est;
  est.samples = terms.size();
  est.value = std::accumulate(terms.begin(), terms.end(), 0.0) / static_cast<double>(terms.size());
  if (terms.size() > 1) {
    double ss = 0.0;
    for (double t : terms) ss += (t - est.value) * (t - est.value);
    est.std_error = std::sqrt(ss / static_cast<double>(terms.size() - 1) / static_cast<double>(terms.size()));
  }
  return est;
}

// Gaussian perturbation number `index` of a seeded family; draws are
// independent of how many others are taken.
inline Matrix gaussian_draw(std::size_t rows, std::size_t cols, double sigma, std::uint64_t seed,
                            std::uint64_t index) {
  Matrix m(rows, cols);
  Rng rng(derive_seed_index(seed, index));
  for (auto& v : m.values) v = sigma * rng.normal();
  return m;
}

template <typename Model>
InfidelityEstimate infidelity(const Matrix& attribution, const Matrix& embeddings, Model&& f,
                              const NoiseConfig& noise) {
  validate(noise);
  std::vector<Matrix> draws;
  draws.reserve(noise.samples);
  for (std::size_t s = 0; s < noise.samples; ++s)
    draws.push_back(gaussian_draw(embeddings.rows, embeddings.cols, noise.sigma, noise.seed, s));
  return infidelity_from_draws(attribution, embeddings, std::forward<Model>(f), draws);
}

// Average precision of a score ranking against a binary relevance mask.
// Ranks by score descending, ties by position ascending.
inline double average_precision(std::span<const double> scores, std::span<const std::uint8_t> relevant) {
  if (scores.size() != relevant.size()) throw ValidationError("scores and rationale lengths differ");
  const auto positives = static_cast<std::size_t>(std::count_if(
      relevant.begin(), relevant.end(), [](std::uint8_t r) { return r != 0; }));
  if (positives == 0) throw MetricError("rationale has no positive token");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (relevant[order[r]] == 0) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(positives);
}

// 1-based ranks; tied values share the mean of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = rank;
    i = j;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("pearson: length mismatch");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw MetricError("correlation undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Spearman's rho: Pearson correlation of average ranks.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw ValidationError("spearman: lengths " + std::to_string(x.size()) + " and " +
                          std::to_string(y.size()) + " differ");
  if (x.size() < 2) throw MetricError("spearman needs at least two observations");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw ValidationError("spearman: non-finite input");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

}  // namespace scene

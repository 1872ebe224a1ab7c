#pragma once

// Generated-case property suites, shared by the acceptance binary.
// Each returns how many cases ran and the first counterexample, if any.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "scene/extraction.hpp"
#include "scene/metrics.hpp"
#include "scene/random.hpp"

namespace scene::testing {

struct PropertyResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t failures = 0;
  std::string first_failure;

  void fail(const std::string& what) {
    if (failures++ == 0) first_failure = "case " + std::to_string(cases) + ": " + what;
  }
  bool ok() const { return failures == 0 && cases >= 1000; }
};

inline const std::vector<std::function<double(double)>>& monotone_maps() {
  static const std::vector<std::function<double(double)>> t{
      [](double x) { return 3.0 * x - 1.0; },
      [](double x) { return std::exp(x); },
      [](double x) { return x * x * x; },
      [](double x) { return std::atan(x); },
  };
  return t;
}

// Values with frequent ties.
inline std::vector<double> tied_values(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> val(-2.0, 2.0);
  std::vector<double> v(n);
  for (auto& x : v) x = (rng() % 4 == 0) ? std::round(val(rng)) : val(rng);
  return v;
}

inline std::vector<double> mapped(const std::vector<double>& v, const std::function<double(double)>& f) {
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), f);
  return out;
}

inline PropertyResult property_select_top_v_monotone(std::size_t cases = 1000) {
  PropertyResult r{"selectTopV monotone-transform invariance", 0, 0, {}};
  std::mt19937_64 rng(101);
  for (; r.cases < cases; ++r.cases) {
    const std::size_t n = 3 + rng() % 13;
    const auto w = tied_values(rng, n);
    std::vector<std::size_t> eligible;
    for (std::size_t i = 1; i + 1 < n; ++i)
      if (rng() % 3 != 0) eligible.push_back(i);
    const std::size_t v = 1 + rng() % 6;
    const auto a = select_top_v(w, eligible, v);
    const auto b = select_top_v(mapped(w, monotone_maps()[r.cases % 4]), eligible, v);
    bool same = a.selected.size() == b.selected.size() && a.degenerate == b.degenerate;
    for (std::size_t i = 0; same && i < a.selected.size(); ++i)
      same = a.selected[i].position == b.selected[i].position;
    if (!same) r.fail("selection changed under transform " + std::to_string(r.cases % 4));
  }
  return r;
}

inline PropertyResult property_average_precision_monotone(std::size_t cases = 1000) {
  PropertyResult r{"averagePrecision monotone-transform invariance", 0, 0, {}};
  std::mt19937_64 rng(102);
  for (; r.cases < cases; ++r.cases) {
    const std::size_t n = 1 + rng() % 20;
    const auto s = tied_values(rng, n);
    std::vector<std::uint8_t> rel(n);
    for (auto& x : rel) x = rng() % 2;
    rel[rng() % n] = 1;
    const double a = average_precision(s, rel);
    const double b = average_precision(mapped(s, monotone_maps()[r.cases % 4]), rel);
    if (a != b || a < 0.0 || a > 1.0) r.fail("AP " + std::to_string(a) + " vs " + std::to_string(b));
  }
  return r;
}

inline PropertyResult property_spearman_monotone(std::size_t cases = 1000) {
  PropertyResult r{"spearman monotone-transform invariance", 0, 0, {}};
  std::mt19937_64 rng(103);
  while (r.cases < cases) {
    const std::size_t n = 2 + rng() % 24;
    const auto x = tied_values(rng, n);
    const auto y = tied_values(rng, n);
    double rho;
    try {
      rho = spearman(x, y);
    } catch (const MetricError&) {
      continue;  // constant input; draw again
    }
    const auto& f = monotone_maps()[r.cases % 4];
    const double a = spearman(mapped(x, f), y);
    const double b = spearman(x, mapped(y, f));
    if (std::abs(a - rho) > 1e-12 || std::abs(b - rho) > 1e-12 || spearman(y, x) != rho)
      r.fail("rho " + std::to_string(rho) + " became " + std::to_string(a) + "/" + std::to_string(b));
    ++r.cases;
  }
  return r;
}

namespace detail {

struct SoftCase {
  std::vector<double> orig;
  std::vector<std::vector<double>> cf, dist;
};

inline SoftCase soft_case(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> p(0.0, 1.0), d(0.0, 1.5);
  SoftCase c;
  const std::size_t n = 1 + rng() % 8;
  for (std::size_t i = 0; i < n; ++i) {
    c.orig.push_back(p(rng));
    c.cf.emplace_back();
    c.dist.emplace_back();
    for (std::size_t j = 0, k = 1 + rng() % 10; j < k; ++j) {
      c.cf.back().push_back(p(rng));
      c.dist.back().push_back(d(rng));
    }
  }
  return c;
}

// Shuffles instances and the counterfactuals within each instance.
inline SoftCase permuted(const SoftCase& c, std::mt19937_64& rng) {
  std::vector<std::size_t> outer(c.orig.size());
  std::iota(outer.begin(), outer.end(), 0);
  std::shuffle(outer.begin(), outer.end(), rng);
  SoftCase out;
  for (std::size_t i : outer) {
    std::vector<std::size_t> inner(c.cf[i].size());
    std::iota(inner.begin(), inner.end(), 0);
    std::shuffle(inner.begin(), inner.end(), rng);
    out.orig.push_back(c.orig[i]);
    out.cf.emplace_back();
    out.dist.emplace_back();
    for (std::size_t j : inner) {
      out.cf.back().push_back(c.cf[i][j]);
      out.dist.back().push_back(c.dist[i][j]);
    }
  }
  return out;
}

struct HashedEncoder {
  std::size_t calls = 0;
  std::vector<std::vector<double>> sentence_embed(const std::vector<std::string>& texts) {
    ++calls;
    std::vector<std::vector<double>> out;
    for (const auto& t : texts) {
      Rng rng(fnv1a64(t));
      std::vector<double> v(6);
      for (auto& x : v) x = rng.unit_open() - 0.5;
      out.push_back(std::move(v));
    }
    return out;
  }
};

}  // namespace detail

inline PropertyResult property_validity_permutation(std::size_t cases = 1000) {
  PropertyResult r{"validitySoft permutation invariance", 0, 0, {}};
  std::mt19937_64 rng(104);
  for (; r.cases < cases; ++r.cases) {
    const auto c = detail::soft_case(rng);
    const auto p = detail::permuted(c, rng);
    const double a = validity_soft(c.orig, c.cf), b = validity_soft(p.orig, p.cf);
    if (std::abs(a - b) > 1e-12) r.fail(std::to_string(a) + " vs " + std::to_string(b));
  }
  return r;
}

inline PropertyResult property_c_soft_permutation(std::size_t cases = 1000) {
  PropertyResult r{"cSoft permutation invariance", 0, 0, {}};
  std::mt19937_64 rng(105);
  for (; r.cases < cases; ++r.cases) {
    const auto c = detail::soft_case(rng);
    const auto p = detail::permuted(c, rng);
    const double a = c_soft(c.orig, c.cf, c.dist).value, b = c_soft(p.orig, p.cf, p.dist).value;
    if (std::abs(a - b) > 1e-9 * (1.0 + std::abs(a))) r.fail(std::to_string(a) + " vs " + std::to_string(b));
  }
  return r;
}

inline PropertyResult property_sentence_distance(std::size_t cases = 1000) {
  PropertyResult r{"sentenceDistance symmetry and zero-self", 0, 0, {}};
  std::mt19937_64 rng(106);
  detail::HashedEncoder enc;
  for (; r.cases < cases; ++r.cases) {
    const std::string a = "s" + std::to_string(rng() % 500), b = "s" + std::to_string(rng() % 500);
    const double self = sentence_distance(enc, a, a);
    const double ab = sentence_distance(enc, a, b), ba = sentence_distance(enc, b, a);
    if (self != 0.0 || ab != ba || ab < 0.0 || ab > 2.0)
      r.fail("d(a,a)=" + std::to_string(self) + " d(a,b)=" + std::to_string(ab) + " d(b,a)=" + std::to_string(ba));
  }
  return r;
}

inline std::vector<PropertyResult> run_property_suites() {
  return {property_select_top_v_monotone(), property_average_precision_monotone(), property_spearman_monotone(),
          property_validity_permutation(), property_c_soft_permutation(), property_sentence_distance()};
}

}  // namespace scene::testing

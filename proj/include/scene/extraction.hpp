#pragma once

// Significant-token extraction: reduce per-dimension attributions to one
// weight per token, drop tokens that cannot be masked as whole words, and
// keep the V heaviest.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "scene/error.hpp"
#include "scene/text.hpp"
#include "scene/types.hpp"

namespace scene {

inline std::vector<double> aggregate(const Matrix& per_token, Aggregation mode) {
  if (mode == Aggregation::direct)
    throw ValidationError("direct weighting needs scalar attributions, got vectors");
  if (per_token.cols == 0) throw ValidationError("attribution vectors have zero dimensions");
  std::vector<double> out(per_token.rows);
  for (std::size_t r = 0; r < per_token.rows; ++r) {
    const auto row = per_token.row(r);
    if (mode == Aggregation::mean) {
      out[r] = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size());
    } else {
      double ss = 0.0;
      for (double v : row) ss += v * v;
      out[r] = std::sqrt(ss);
    }
  }
  return out;
}

inline std::vector<double> aggregate(const ScalarScores& per_token, Aggregation mode) {
  if (mode != Aggregation::direct)
    throw ValidationError(std::string(to_string(mode)) + " weighting needs vector attributions, got scalars");
  return per_token;
}

inline std::vector<double> aggregate(const AttributionRecord& rec, Aggregation mode) {
  return std::visit([mode](const auto& v) { return aggregate(v, mode); }, rec.per_token);
}

// Positions that may be masked. Excluded:
//  - the first and last positions (boundary markers);
//  - "##" pieces and the piece before each of them, so multi-piece words drop out entirely;
//  - tokens with any non-letter character.
inline std::vector<std::size_t> filter_candidates(std::span<const std::string> tokens) {
  std::vector<std::size_t> out;
  if (tokens.size() < 3) return out;
  for (std::size_t i = 1; i + 1 < tokens.size(); ++i) {
    if (is_subword(tokens[i])) continue;
    if (is_subword(tokens[i + 1])) continue;
    if (!is_alphabetic(tokens[i])) continue;
    out.push_back(i);
  }
  return out;
}

struct SelectOptions {
  bool rank_by_abs = false;
};

// Top-V eligible positions by weight, descending; equal weights resolve to the
// lower position. Returns fewer than V (and sets degenerate) when eligibility runs out.
inline SignificantTokenSet select_top_v(std::span<const double> weights,
                                        std::span<const std::size_t> eligible, std::size_t top_v,
                                        SelectOptions opts = {}) {
  if (top_v == 0) throw ValidationError("V must be positive");
  SignificantTokenSet out;
  out.requested = top_v;
  out.selected.reserve(eligible.size());
  for (std::size_t pos : eligible) {
    if (pos >= weights.size()) throw ValidationError("eligible position outside the weight list");
    out.selected.push_back({pos, weights[pos]});
  }
  std::sort(out.selected.begin(), out.selected.end(),
            [](const auto& a, const auto& b) { return a.position < b.position; });
  out.selected.erase(std::unique(out.selected.begin(), out.selected.end(),
                                 [](const auto& a, const auto& b) { return a.position == b.position; }),
                     out.selected.end());

  auto key = [&](const ScoredPosition& s) { return opts.rank_by_abs ? std::abs(s.weight) : s.weight; };
  std::stable_sort(out.selected.begin(), out.selected.end(),
                   [&](const ScoredPosition& a, const ScoredPosition& b) {
                     const double ka = key(a), kb = key(b);
                     if (ka != kb) return ka > kb;
                     return a.position < b.position;
                   });
  if (out.selected.size() < top_v) {
    out.degenerate = true;
  } else {
    out.selected.resize(top_v);
  }
  return out;
}

}  // namespace scene

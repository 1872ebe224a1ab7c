#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "scene/error.hpp"

namespace scene {

// Dense row-major matrix: token embeddings, per-dimension attributions.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  static Matrix from_rows(const std::vector<std::vector<double>>& rows_in) {
    Matrix m;
    m.rows = rows_in.size();
    m.cols = rows_in.empty() ? 0 : rows_in.front().size();
    m.values.reserve(m.rows * m.cols);
    for (const auto& r : rows_in) {
      if (r.size() != m.cols) throw ValidationError("ragged matrix rows");
      m.values.insert(m.values.end(), r.begin(), r.end());
    }
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

  bool same_shape(const Matrix& o) const noexcept { return rows == o.rows && cols == o.cols; }

  std::vector<std::vector<double>> to_rows() const {
    std::vector<std::vector<double>> out(rows);
    for (std::size_t r = 0; r < rows; ++r) out[r].assign(row(r).begin(), row(r).end());
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct Instance {
  std::string id;
  std::string text;
  // Classifier tokenization; first and last entries are boundary markers.
  std::vector<std::string> tokens;
  int label = 0;
  std::optional<std::vector<std::uint8_t>> rationale;

  friend bool operator==(const Instance&, const Instance&) = default;
};

using ScalarScores = std::vector<double>;

struct AttributionRecord {
  std::string instance_id;
  std::string method;
  // One scalar per token, or one row per token (tokens x embedding dims).
  std::variant<ScalarScores, Matrix> per_token;
  std::optional<double> seconds;

  bool is_vector() const noexcept { return std::holds_alternative<Matrix>(per_token); }
  std::size_t size() const noexcept {
    return is_vector() ? std::get<Matrix>(per_token).rows : std::get<ScalarScores>(per_token).size();
  }
};

enum class Aggregation { mean, l2, direct };

constexpr std::string_view to_string(Aggregation a) noexcept {
  switch (a) {
    case Aggregation::mean: return "mean";
    case Aggregation::l2: return "l2";
    case Aggregation::direct: return "direct";
  }
  return "?";
}

inline Aggregation parse_aggregation(std::string_view s) {
  if (s == "mean") return Aggregation::mean;
  if (s == "l2" || s == "L2") return Aggregation::l2;
  if (s == "direct") return Aggregation::direct;
  throw ValidationError("unknown aggregation '" + std::string(s) + "'");
}

struct ScoredPosition {
  std::size_t position = 0;
  double weight = 0.0;

  friend bool operator==(const ScoredPosition&, const ScoredPosition&) = default;
};

struct SignificantTokenSet {
  std::string instance_id;
  std::string method;
  Aggregation aggregation = Aggregation::direct;
  // Descending by weight, ties by position.
  std::vector<ScoredPosition> selected;
  std::size_t requested = 0;
  // Fewer eligible positions than requested.
  bool degenerate = false;
};

// One fill-mask prediction; score is a log-probability used only for ranking.
struct ScoredToken {
  std::string token;
  double score = 0.0;

  friend bool operator==(const ScoredToken&, const ScoredToken&) = default;
};

struct Substitution {
  std::size_t position = 0;
  std::string original;
  std::string replacement;

  friend bool operator==(const Substitution&, const Substitution&) = default;
};

struct Counterfactual {
  std::string text;
  std::vector<Substitution> substitutions;
  // At least one mask had no usable candidate and kept its original token.
  bool fallback = false;

  friend bool operator==(const Counterfactual&, const Counterfactual&) = default;
};

struct SoftCounterfactualSet {
  std::string instance_id;
  std::string method;
  Aggregation aggregation = Aggregation::direct;
  std::uint64_t seed = 0;
  std::vector<Counterfactual> counterfactuals;
  // Duplicate texts survived the re-draw budget.
  bool degenerate = false;

  friend bool operator==(const SoftCounterfactualSet&, const SoftCounterfactualSet&) = default;
};

struct PredictionResult {
  std::vector<double> probabilities;
  std::size_t predicted_class = 0;
  // Pre-softmax scores when the backend reports them.
  std::optional<std::vector<double>> logits;
};

inline constexpr double kProbabilitySumTolerance = 1e-6;

inline void validate(const PredictionResult& p) {
  if (p.probabilities.empty()) throw ValidationError("empty probability vector");
  double sum = 0.0;
  for (double v : p.probabilities) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw ValidationError("probability outside [0,1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kProbabilitySumTolerance)
    throw ValidationError("probabilities sum to " + std::to_string(sum));
  if (p.predicted_class >= p.probabilities.size())
    throw ValidationError("predicted class out of range");
  for (double v : p.probabilities)
    if (v > p.probabilities[p.predicted_class])
      throw ValidationError("predicted class does not attain the maximum probability");
  if (p.logits && p.logits->size() != p.probabilities.size())
    throw ValidationError("logits and probabilities differ in length");
}

// Argmax with lowest index on ties.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// Per-metric accounting for one report row: in = used + skipped.
struct MetricCount {
  std::size_t in = 0;
  std::size_t used = 0;
  std::size_t skipped = 0;

  friend bool operator==(const MetricCount&, const MetricCount&) = default;
};

struct ReportRow {
  std::string method;
  Aggregation aggregation = Aggregation::direct;
  std::optional<double> validity_soft;
  std::optional<double> c_soft;
  std::optional<double> infidelity;
  std::optional<double> map;
  std::optional<double> average_time;

  MetricCount validity_count;
  MetricCount c_soft_count;
  MetricCount infidelity_count;
  MetricCount map_count;

  // "Lime - mean", "Lime - L2", or the bare method name for direct weighting.
  std::string label() const {
    if (aggregation == Aggregation::direct) return method;
    return method + (aggregation == Aggregation::l2 ? " - L2" : " - mean");
  }
};

struct Correlation {
  std::string metric;
  std::optional<double> rho;
  std::size_t rows = 0;
  std::string note;
};

struct Diagnostic {
  std::string instance_id;
  std::string method;
  std::string aggregation;
  std::string stage;
  std::string message;
  // Failures exclude the instance from a metric; notes are informational.
  bool failure = true;
};

struct RunEcho {
  std::size_t top_v = 5;
  std::size_t k = 10;
  std::size_t candidate_pool = 20;
  std::uint64_t seed = 0;
  double noise_sigma = 0.01;
  std::size_t noise_samples = 50;
  bool rank_by_abs = false;
  bool infidelity_on_logit = false;
  std::string backend;
};

struct EvaluationReport {
  std::vector<ReportRow> rows;
  std::vector<Correlation> correlations;
  RunEcho run;
  std::vector<Diagnostic> diagnostics;

  bool has_failures() const {
    for (const auto& d : diagnostics)
      if (d.failure) return true;
    return false;
  }
};

}  // namespace scene

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "scene/error.hpp"
#include "scene/text.hpp"
#include "scene/types.hpp"

namespace scene {

struct BackendDescriptor {
  std::string base_url = "http://127.0.0.1:8080";
  double timeout_seconds = 30.0;
  std::size_t max_batch = 32;
  std::size_t retries = 2;
  // Concurrent sub-batch requests per call.
  std::size_t max_in_flight = 4;
};

inline void validate(const BackendDescriptor& d) {
  if (d.base_url.empty()) throw ConfigError("backend base_url is empty");
  if (!(d.timeout_seconds > 0.0)) throw ConfigError("backend timeout_seconds must be positive");
  if (d.max_batch < 1) throw ConfigError("backend max_batch must be at least 1");
  if (d.max_in_flight < 1) throw ConfigError("backend max_in_flight must be at least 1");
}

struct BackendInfo {
  std::string name;
  std::size_t classes = 0;
  std::size_t embed_dim = 0;
};

// Classifier, fill-mask model and sentence encoder behind one protocol.
// Implementations must be safe to call concurrently.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual BackendInfo info() = 0;
  // One result per text, in input order.
  virtual std::vector<PredictionResult> predict(const std::vector<std::string>& texts) = 0;
  // Classifier input embeddings, tokens x dims.
  virtual Matrix embed(const std::string& text) = 0;
  virtual PredictionResult predict_embeddings(const Matrix& embeddings) = 0;
  // One ranked list per "[MASK]" in textual order, each at most top_k long.
  virtual std::vector<std::vector<ScoredToken>> fill_mask(const std::string& masked_text,
                                                          std::size_t top_k) = 0;
  virtual std::vector<std::vector<double>> sentence_embed(const std::vector<std::string>& texts) = 0;
  // Stable identity echoed into reports.
  virtual std::string identity() = 0;
};

inline std::size_t count_masks(std::string_view text) {
  std::size_t n = 0;
  for (auto pos = text.find(kMaskMarker); pos != std::string_view::npos;
       pos = text.find(kMaskMarker, pos + kMaskMarker.size()))
    ++n;
  return n;
}

// Response invariants shared by every backend; failures are protocol errors.
inline void check_predictions(const std::vector<PredictionResult>& results, std::size_t expected) {
  if (results.size() != expected)
    throw ProtocolError("expected " + std::to_string(expected) + " predictions, got " +
                        std::to_string(results.size()));
  for (const auto& r : results) {
    try {
      validate(r);
    } catch (const ValidationError& e) {
      throw ProtocolError(std::string("invalid prediction: ") + e.what());
    }
  }
}

inline void check_fill_mask(const std::vector<std::vector<ScoredToken>>& lists, std::size_t masks,
                            std::size_t top_k) {
  if (lists.size() != masks)
    throw ProtocolError("expected " + std::to_string(masks) + " mask lists, got " +
                        std::to_string(lists.size()));
  for (const auto& l : lists) {
    if (l.size() > top_k) throw ProtocolError("mask list longer than top_k");
    for (std::size_t i = 0; i < l.size(); ++i) {
      if (!std::isfinite(l[i].score)) throw ProtocolError("non-finite fill-mask score");
      if (i > 0 && l[i].score > l[i - 1].score) throw ProtocolError("fill-mask scores not descending");
    }
  }
}

inline void check_vectors(const std::vector<std::vector<double>>& vectors, std::size_t expected) {
  if (vectors.size() != expected)
    throw ProtocolError("expected " + std::to_string(expected) + " vectors, got " +
                        std::to_string(vectors.size()));
  for (const auto& v : vectors) {
    if (v.empty() || v.size() != vectors.front().size())
      throw ProtocolError("sentence vectors have mixed dimensionality");
    for (double x : v)
      if (!std::isfinite(x)) throw ProtocolError("non-finite sentence vector entry");
  }
}

}  // namespace scene

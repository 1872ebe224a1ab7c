#pragma once

#include <algorithm>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scene/backend.hpp"

namespace scene {

// Memoizes the text-keyed endpoints of a deterministic backend for one run.
// predict_embeddings is passed through: perturbed inputs never repeat.
class CachingBackend final : public Backend {
 public:
  explicit CachingBackend(Backend& inner) : inner_(inner) {}

  BackendInfo info() override {
    std::lock_guard lock(mu_);
    if (!info_) info_ = inner_.info();
    return *info_;
  }

  std::vector<PredictionResult> predict(const std::vector<std::string>& texts) override {
    return batched(texts, predictions_, [this](const std::vector<std::string>& misses) {
      auto r = inner_.predict(misses);
      check_predictions(r, misses.size());
      return r;
    });
  }

  Matrix embed(const std::string& text) override {
    {
      std::lock_guard lock(mu_);
      if (auto it = embeddings_.find(text); it != embeddings_.end()) return it->second;
    }
    auto m = inner_.embed(text);
    std::lock_guard lock(mu_);
    return embeddings_.emplace(text, std::move(m)).first->second;
  }

  PredictionResult predict_embeddings(const Matrix& e) override { return inner_.predict_embeddings(e); }

  std::vector<std::vector<ScoredToken>> fill_mask(const std::string& text, std::size_t top_k) override {
    auto key = std::make_pair(text, top_k);
    {
      std::lock_guard lock(mu_);
      if (auto it = masks_.find(key); it != masks_.end()) return it->second;
    }
    auto lists = inner_.fill_mask(text, top_k);
    std::lock_guard lock(mu_);
    return masks_.emplace(std::move(key), std::move(lists)).first->second;
  }

  std::vector<std::vector<double>> sentence_embed(const std::vector<std::string>& texts) override {
    auto out = batched(texts, vectors_, [this](const std::vector<std::string>& misses) {
      auto r = inner_.sentence_embed(misses);
      check_vectors(r, misses.size());
      return r;
    });
    std::lock_guard lock(mu_);
    for (const auto& v : out) {
      if (!vector_dim_) vector_dim_ = v.size();
      if (v.size() != *vector_dim_) throw ProtocolError("sentence vector dimensionality changed during the run");
    }
    return out;
  }

  std::string identity() override { return inner_.identity(); }

  std::size_t cached_predictions() const {
    std::lock_guard lock(mu_);
    return predictions_.size();
  }

 private:
  template <typename T, typename Fetch>
  std::vector<T> batched(const std::vector<std::string>& texts, std::map<std::string, T>& cache, Fetch fetch) {
    std::vector<std::string> misses;
    {
      std::lock_guard lock(mu_);
      for (const auto& t : texts)
        if (!cache.contains(t) && std::find(misses.begin(), misses.end(), t) == misses.end()) misses.push_back(t);
    }
    if (!misses.empty()) {
      auto fetched = fetch(misses);
      std::lock_guard lock(mu_);
      for (std::size_t i = 0; i < misses.size(); ++i) cache.emplace(misses[i], std::move(fetched[i]));
    }
    std::lock_guard lock(mu_);
    std::vector<T> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(cache.at(t));
    return out;
  }

  Backend& inner_;
  mutable std::mutex mu_;
  std::optional<BackendInfo> info_;
  std::optional<std::size_t> vector_dim_;
  std::map<std::string, PredictionResult> predictions_;
  std::map<std::string, Matrix> embeddings_;
  std::map<std::pair<std::string, std::size_t>, std::vector<std::vector<ScoredToken>>> masks_;
  std::map<std::string, std::vector<double>> vectors_;
};

}  // namespace scene

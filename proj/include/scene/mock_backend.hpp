#pragma once

// Deterministic in-process backend for tests and sidecar-free demos.
//
// Lookup tables take precedence; anything not tabled falls back to a closed
// form:
//   tokenize(t)   "[CLS]" + lowercased words and single punctuation marks + "[SEP]"
//   embed(t)      one row per token: token_vectors[token], else a vector hashed
//                 from the token with entries uniform in [-1, 1]
//   head(E)       logits = W * mean_rows(E) + b, probs = softmax(logits)
//   predict(t)    head(embed(t))
//   sentence(t)   mean of embed(t) rows without the boundary rows
//   fill_mask     fill_mask[text] lists, else fill_mask_default for every mask
//
// Fixture file (JSON):
//   {"name": str, "classes": int, "embed_dim": int,
//    "head": {"weights": [[num]] (classes x embed_dim), "bias": [num]},
//    "token_vectors": {token: [num]}, "predict": {text: [num]},
//    "embed": {text: [[num]]}, "fill_mask": {text: [[{"token","score"}]]},
//    "fill_mask_default": [{"token","score"}], "sentence_embed": {text: [num]}}

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "scene/backend.hpp"
#include "scene/error.hpp"
#include "scene/random.hpp"
#include "scene/text.hpp"
#include "scene/types.hpp"

namespace scene {

struct MockFixtures {
  std::string name = "mock";
  std::size_t classes = 2;
  std::size_t embed_dim = 2;
  Matrix weights;  // classes x embed_dim
  std::vector<double> bias;
  std::map<std::string, std::vector<double>> token_vectors;
  std::map<std::string, std::vector<double>> predict;
  std::map<std::string, Matrix> embed;
  std::map<std::string, std::vector<std::vector<ScoredToken>>> fill_mask;
  std::vector<ScoredToken> fill_mask_default;
  std::map<std::string, std::vector<double>> sentence_embed;
};

namespace detail {

inline std::vector<ScoredToken> scored_list(const nlohmann::json& j) {
  std::vector<ScoredToken> out;
  for (const auto& c : j) out.push_back({c.at("token").get<std::string>(), c.at("score").get<double>()});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  return out;
}

}  // namespace detail

inline MockFixtures parse_mock_fixtures(const nlohmann::json& j) {
  MockFixtures f;
  try {
    f.name = j.value("name", std::string("mock"));
    f.classes = j.value("classes", std::size_t{2});
    f.embed_dim = j.value("embed_dim", std::size_t{2});
    if (f.classes < 1 || f.embed_dim < 1) throw ConfigError("classes and embed_dim must be positive");
    if (auto h = j.find("head"); h != j.end()) {
      f.weights = Matrix::from_rows(h->at("weights").get<std::vector<std::vector<double>>>());
      f.bias = h->value("bias", std::vector<double>(f.classes, 0.0));
    } else {
      f.weights = Matrix(f.classes, f.embed_dim);
      f.bias.assign(f.classes, 0.0);
    }
    if (f.weights.rows != f.classes || f.weights.cols != f.embed_dim || f.bias.size() != f.classes)
      throw ConfigError("head must be classes x embed_dim with one bias per class");

    const auto section = [&](const char* key) { return j.value(key, nlohmann::json::object()); };
    const auto token_vectors = section("token_vectors");
    const auto predict = section("predict");
    const auto embed = section("embed");
    const auto fill_mask = section("fill_mask");
    const auto sentence_embed = section("sentence_embed");
    for (auto& [tok, v] : token_vectors.items()) {
      f.token_vectors[tok] = v.get<std::vector<double>>();
      if (f.token_vectors[tok].size() != f.embed_dim) throw ConfigError("token vector '" + tok + "' has wrong dims");
    }
    for (auto& [text, v] : predict.items())
      f.predict[text] = v.get<std::vector<double>>();
    for (auto& [text, v] : embed.items())
      f.embed[text] = Matrix::from_rows(v.get<std::vector<std::vector<double>>>());
    for (auto& [text, v] : fill_mask.items()) {
      auto& lists = f.fill_mask[text];
      for (const auto& l : v) lists.push_back(detail::scored_list(l));
    }
    if (auto d = j.find("fill_mask_default"); d != j.end()) f.fill_mask_default = detail::scored_list(*d);
    for (auto& [text, v] : sentence_embed.items())
      f.sentence_embed[text] = v.get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("mock fixtures: ") + e.what());
  }
  return f;
}

inline MockFixtures load_mock_fixtures(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mock fixtures " + path.string());
  try {
    return parse_mock_fixtures(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("mock fixtures " + path.string() + ": " + e.what());
  }
}

class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockFixtures fixtures) : f_(std::move(fixtures)) {
    if (f_.weights.rows == 0) {
      f_.weights = Matrix(f_.classes, f_.embed_dim);
      f_.bias.assign(f_.classes, 0.0);
    }
  }

  const MockFixtures& fixtures() const noexcept { return f_; }

  static std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out{"[CLS]"};
    std::string word;
    auto flush = [&] {
      if (!word.empty()) out.push_back(std::exchange(word, {}));
    };
    for (char c : text) {
      const auto u = static_cast<unsigned char>(c);
      if (detail::is_space(c)) {
        flush();
      } else if (u < 0x80 && !std::isalnum(u)) {
        flush();
        out.emplace_back(1, c);
      } else {
        word += detail::ascii_lower(c);
      }
    }
    flush();
    out.push_back("[SEP]");
    return out;
  }

  std::vector<double> token_vector(const std::string& token) const {
    if (auto it = f_.token_vectors.find(token); it != f_.token_vectors.end()) return it->second;
    Rng rng(fnv1a64(token));
    std::vector<double> v(f_.embed_dim);
    for (auto& x : v) x = 2.0 * rng.unit_open() - 1.0;
    return v;
  }

  // d logit_c / dE for a T-row input: every row equals W[c] / T.
  Matrix coefficient_matrix(std::size_t cls, std::size_t rows) const {
    if (cls >= f_.classes) throw ValidationError("class index out of range");
    Matrix m(rows, f_.embed_dim);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t d = 0; d < f_.embed_dim; ++d) m(r, d) = f_.weights(cls, d) / static_cast<double>(rows);
    return m;
  }

  BackendInfo info() override { return {f_.name, f_.classes, f_.embed_dim}; }

  std::vector<PredictionResult> predict(const std::vector<std::string>& texts) override {
    if (texts.empty()) throw ValidationError("empty predict batch");
    std::vector<PredictionResult> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
      if (auto it = f_.predict.find(t); it != f_.predict.end()) {
        PredictionResult r{it->second, argmax(it->second), std::nullopt};
        validate(r);
        out.push_back(std::move(r));
      } else {
        out.push_back(predict_embeddings(embed(t)));
      }
    }
    return out;
  }

  Matrix embed(const std::string& text) override {
    if (text.empty()) throw ValidationError("cannot embed an empty string");
    if (auto it = f_.embed.find(text); it != f_.embed.end()) return it->second;
    const auto tokens = tokenize(text);
    Matrix m(tokens.size(), f_.embed_dim);
    for (std::size_t r = 0; r < tokens.size(); ++r) {
      const auto v = token_vector(tokens[r]);
      std::copy(v.begin(), v.end(), m.row(r).begin());
    }
    return m;
  }

  PredictionResult predict_embeddings(const Matrix& e) override {
    if (e.rows == 0 || e.cols != f_.embed_dim)
      throw ValidationError("embedding matrix must have " + std::to_string(f_.embed_dim) + " columns");
    std::vector<double> pooled(e.cols, 0.0);
    for (std::size_t r = 0; r < e.rows; ++r)
      for (std::size_t d = 0; d < e.cols; ++d) pooled[d] += e(r, d);
    for (auto& v : pooled) v /= static_cast<double>(e.rows);

    std::vector<double> logits(f_.classes);
    for (std::size_t c = 0; c < f_.classes; ++c) {
      double z = f_.bias[c];
      for (std::size_t d = 0; d < e.cols; ++d) z += f_.weights(c, d) * pooled[d];
      logits[c] = z;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> probs(f_.classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < f_.classes; ++c) sum += probs[c] = std::exp(logits[c] - mx);
    for (auto& p : probs) p /= sum;
    PredictionResult r{std::move(probs), 0, std::move(logits)};
    r.predicted_class = argmax(r.probabilities);
    return r;
  }

  std::vector<std::vector<ScoredToken>> fill_mask(const std::string& text, std::size_t top_k) override {
    const std::size_t masks = count_masks(text);
    if (masks == 0) throw ValidationError("text contains no [MASK]");
    if (top_k == 0) throw ValidationError("top_k must be positive");
    std::vector<std::vector<ScoredToken>> out;
    if (auto it = f_.fill_mask.find(text); it != f_.fill_mask.end()) {
      out = it->second;
      if (out.size() != masks) throw ValidationError("fixture mask count differs from text");
    } else if (!f_.fill_mask_default.empty()) {
      out.assign(masks, f_.fill_mask_default);
    } else {
      throw ValidationError("no fill-mask fixture for text");
    }
    for (auto& l : out)
      if (l.size() > top_k) l.resize(top_k);
    return out;
  }

  std::vector<std::vector<double>> sentence_embed(const std::vector<std::string>& texts) override {
    if (texts.empty()) throw ValidationError("empty sentence_embed batch");
    std::vector<std::vector<double>> out;
    for (const auto& t : texts) {
      if (auto it = f_.sentence_embed.find(t); it != f_.sentence_embed.end()) {
        out.push_back(it->second);
        continue;
      }
      const auto m = embed(t);
      std::vector<double> mean(m.cols, 0.0);
      const std::size_t first = m.rows > 2 ? 1 : 0;
      const std::size_t last = m.rows > 2 ? m.rows - 1 : m.rows;
      for (std::size_t r = first; r < last; ++r)
        for (std::size_t d = 0; d < m.cols; ++d) mean[d] += m(r, d);
      for (auto& v : mean) v /= static_cast<double>(last - first);
      out.push_back(std::move(mean));
    }
    check_vectors(out, texts.size());
    return out;
  }

  std::string identity() override { return "mock:" + f_.name; }

 private:
  MockFixtures f_;
};

}  // namespace scene

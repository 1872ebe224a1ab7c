#pragma once

// JSON wire format. All endpoints are POST:
//
//   /v1/predict            {"texts":[str]}              -> {"probs":[[num]],"predicted":[int]}
//   /v1/embed              {"text":str}                 -> {"embeddings":[[num]]}
//   /v1/predict_embeddings {"embeddings":[[num]]}       -> {"probs":[num],"predicted":int,"logits":[num]?}
//   /v1/fill_mask          {"text":str,"top_k":int}     -> {"masks":[[{"token":str,"score":num}]]}
//   /v1/sentence_embed     {"texts":[str]}              -> {"vectors":[[num]]}
//   /v1/info               {}                           -> {"name":str,"classes":int,"embed_dim":int}
//
// Failures carry an HTTP status and {"error": str}.

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "scene/backend.hpp"
#include "scene/error.hpp"
#include "scene/types.hpp"

namespace scene::protocol {

using json = nlohmann::ordered_json;

inline constexpr const char* kPredict = "/v1/predict";
inline constexpr const char* kEmbed = "/v1/embed";
inline constexpr const char* kPredictEmbeddings = "/v1/predict_embeddings";
inline constexpr const char* kFillMask = "/v1/fill_mask";
inline constexpr const char* kSentenceEmbed = "/v1/sentence_embed";
inline constexpr const char* kInfo = "/v1/info";

inline const std::vector<std::string>& endpoints() {
  static const std::vector<std::string> all{kPredict, kEmbed, kPredictEmbeddings,
                                            kFillMask, kSentenceEmbed, kInfo};
  return all;
}

namespace detail {

template <typename E>
const json& field(const json& j, const char* key) {
  if (!j.is_object()) throw E("body is not an object");
  auto it = j.find(key);
  if (it == j.end()) throw E(std::string("missing field '") + key + "'");
  return *it;
}

template <typename E>
std::vector<double> numbers(const json& j, const char* what) {
  if (!j.is_array()) throw E(std::string(what) + " is not an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw E(std::string(what) + " holds a non-number");
    out.push_back(v.get<double>());
  }
  return out;
}

template <typename E>
Matrix matrix(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw E(std::string(what) + " must be a non-empty array of rows");
  std::vector<std::vector<double>> rows;
  for (const auto& r : j) rows.push_back(numbers<E>(r, what));
  for (const auto& r : rows)
    if (r.size() != rows.front().size() || r.empty()) throw E(std::string(what) + " rows are ragged");
  return Matrix::from_rows(rows);
}

template <typename E>
std::vector<std::string> strings(const json& j, const char* what) {
  if (!j.is_array()) throw E(std::string(what) + " is not an array");
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw E(std::string(what) + " holds a non-string");
    out.push_back(v.get<std::string>());
  }
  return out;
}

inline json rows_json(const Matrix& m) {
  json out = json::array();
  for (std::size_t r = 0; r < m.rows; ++r) out.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return out;
}

}  // namespace detail

// ---- requests (client encodes, server decodes) ----

inline json predict_request(const std::vector<std::string>& texts) { return json{{"texts", texts}}; }
inline json embed_request(const std::string& text) { return json{{"text", text}}; }
inline json predict_embeddings_request(const Matrix& m) { return json{{"embeddings", detail::rows_json(m)}}; }
inline json fill_mask_request(const std::string& text, std::size_t top_k) {
  return json{{"text", text}, {"top_k", top_k}};
}
inline json sentence_embed_request(const std::vector<std::string>& texts) { return json{{"texts", texts}}; }

// ---- responses (server encodes, client decodes) ----

inline json encode_prediction_list(const std::vector<PredictionResult>& results) {
  json probs = json::array(), predicted = json::array();
  for (const auto& r : results) {
    probs.push_back(r.probabilities);
    predicted.push_back(r.predicted_class);
  }
  return json{{"probs", std::move(probs)}, {"predicted", std::move(predicted)}};
}

inline json encode_prediction(const PredictionResult& r) {
  json j{{"probs", r.probabilities}, {"predicted", r.predicted_class}};
  if (r.logits) j["logits"] = *r.logits;
  return j;
}

inline json encode_embeddings(const Matrix& m) { return json{{"embeddings", detail::rows_json(m)}}; }

inline json encode_masks(const std::vector<std::vector<ScoredToken>>& lists) {
  json masks = json::array();
  for (const auto& l : lists) {
    json entries = json::array();
    for (const auto& c : l) entries.push_back(json{{"token", c.token}, {"score", c.score}});
    masks.push_back(std::move(entries));
  }
  return json{{"masks", std::move(masks)}};
}

inline json encode_vectors(const std::vector<std::vector<double>>& v) { return json{{"vectors", v}}; }

inline json encode_info(const BackendInfo& info) {
  return json{{"name", info.name}, {"classes", info.classes}, {"embed_dim", info.embed_dim}};
}

inline json encode_error(const std::string& message) { return json{{"error", message}}; }

inline PredictionResult decode_prediction(const json& j) {
  PredictionResult r;
  r.probabilities = detail::numbers<ProtocolError>(detail::field<ProtocolError>(j, "probs"), "probs");
  const auto& p = detail::field<ProtocolError>(j, "predicted");
  if (!p.is_number_integer() || p.get<long long>() < 0) throw ProtocolError("'predicted' must be a class index");
  r.predicted_class = p.get<std::size_t>();
  if (auto it = j.find("logits"); it != j.end() && !it->is_null())
    r.logits = detail::numbers<ProtocolError>(*it, "logits");
  check_predictions({r}, 1);
  return r;
}

inline std::vector<PredictionResult> decode_prediction_list(const json& j) {
  const auto& probs = detail::field<ProtocolError>(j, "probs");
  const auto& predicted = detail::field<ProtocolError>(j, "predicted");
  if (!probs.is_array() || !predicted.is_array() || probs.size() != predicted.size())
    throw ProtocolError("'probs' and 'predicted' must be arrays of equal length");
  std::vector<PredictionResult> out;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    PredictionResult r;
    r.probabilities = detail::numbers<ProtocolError>(probs[i], "probs");
    if (!predicted[i].is_number_integer() || predicted[i].get<long long>() < 0)
      throw ProtocolError("'predicted' must hold class indices");
    r.predicted_class = predicted[i].get<std::size_t>();
    out.push_back(std::move(r));
  }
  check_predictions(out, out.size());
  return out;
}

inline Matrix decode_embeddings(const json& j) {
  return detail::matrix<ProtocolError>(detail::field<ProtocolError>(j, "embeddings"), "embeddings");
}

inline std::vector<std::vector<ScoredToken>> decode_masks(const json& j) {
  const auto& masks = detail::field<ProtocolError>(j, "masks");
  if (!masks.is_array()) throw ProtocolError("'masks' is not an array");
  std::vector<std::vector<ScoredToken>> out;
  for (const auto& l : masks) {
    if (!l.is_array()) throw ProtocolError("mask entry is not an array");
    std::vector<ScoredToken> entries;
    for (const auto& c : l) {
      const auto& tok = detail::field<ProtocolError>(c, "token");
      const auto& score = detail::field<ProtocolError>(c, "score");
      if (!tok.is_string() || !score.is_number()) throw ProtocolError("malformed fill-mask candidate");
      entries.push_back({tok.get<std::string>(), score.get<double>()});
    }
    out.push_back(std::move(entries));
  }
  return out;
}

inline std::vector<std::vector<double>> decode_vectors(const json& j) {
  const auto& v = detail::field<ProtocolError>(j, "vectors");
  if (!v.is_array()) throw ProtocolError("'vectors' is not an array");
  std::vector<std::vector<double>> out;
  for (const auto& row : v) out.push_back(detail::numbers<ProtocolError>(row, "vectors"));
  return out;
}

inline BackendInfo decode_info(const json& j) {
  BackendInfo info;
  const auto& name = detail::field<ProtocolError>(j, "name");
  const auto& classes = detail::field<ProtocolError>(j, "classes");
  const auto& dim = detail::field<ProtocolError>(j, "embed_dim");
  if (!name.is_string() || !classes.is_number_unsigned() || !dim.is_number_unsigned())
    throw ProtocolError("malformed info response");
  info.name = name.get<std::string>();
  info.classes = classes.get<std::size_t>();
  info.embed_dim = dim.get<std::size_t>();
  return info;
}

// ---- server-side dispatch ----

struct Reply {
  int status = 200;
  json body;
};

// Runs one request against a backend. Malformed requests and precondition
// failures map to 400, backend failures to 502, anything else to 500.
inline Reply dispatch(Backend& backend, const std::string& endpoint, const json& request) {
  using detail::field;
  try {
    if (endpoint == kPredict) {
      auto texts = detail::strings<ValidationError>(field<ValidationError>(request, "texts"), "texts");
      if (texts.empty()) throw ValidationError("'texts' is empty");
      return {200, encode_prediction_list(backend.predict(texts))};
    }
    if (endpoint == kEmbed) {
      const auto& t = field<ValidationError>(request, "text");
      if (!t.is_string()) throw ValidationError("'text' must be a string");
      return {200, encode_embeddings(backend.embed(t.get<std::string>()))};
    }
    if (endpoint == kPredictEmbeddings) {
      auto m = detail::matrix<ValidationError>(field<ValidationError>(request, "embeddings"), "embeddings");
      return {200, encode_prediction(backend.predict_embeddings(m))};
    }
    if (endpoint == kFillMask) {
      const auto& t = field<ValidationError>(request, "text");
      const auto& k = field<ValidationError>(request, "top_k");
      if (!t.is_string()) throw ValidationError("'text' must be a string");
      if (!k.is_number_integer() || k.get<long long>() < 1) throw ValidationError("'top_k' must be a positive integer");
      return {200, encode_masks(backend.fill_mask(t.get<std::string>(), k.get<std::size_t>()))};
    }
    if (endpoint == kSentenceEmbed) {
      auto texts = detail::strings<ValidationError>(field<ValidationError>(request, "texts"), "texts");
      if (texts.empty()) throw ValidationError("'texts' is empty");
      return {200, encode_vectors(backend.sentence_embed(texts))};
    }
    if (endpoint == kInfo) return {200, encode_info(backend.info())};
    return {404, encode_error("unknown endpoint " + endpoint)};
  } catch (const ValidationError& e) {
    return {400, encode_error(e.what())};
  } catch (const BackendError& e) {
    return {502, encode_error(e.what())};
  } catch (const std::exception& e) {
    return {500, encode_error(e.what())};
  }
}

}  // namespace scene::protocol

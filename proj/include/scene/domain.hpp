#pragma once

// Line-delimited JSON input files.
//
// corpus:       {"id": str, "text": str, "tokens": [str], "label": int, "rationale": [0|1]}
// attributions: {"instance_id": str, "method": str, "scores": [num] | [[num]], "seconds": num}

#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "scene/error.hpp"
#include "scene/types.hpp"

namespace scene {

namespace detail {

inline bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

inline nlohmann::json parse_line(const std::string& line, std::size_t lineno) {
  try {
    auto j = nlohmann::json::parse(line);
    if (!j.is_object()) throw ParseError(lineno, "record is not an object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
  }
}

inline const nlohmann::json& require(const nlohmann::json& j, const char* key, std::size_t lineno) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(lineno, std::string("missing field '") + key + "'");
  return *it;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(0, "cannot open " + path.string());
  return in;
}

inline double finite_number(const nlohmann::json& v, std::size_t lineno) {
  if (!v.is_number()) throw ParseError(lineno, "score is not a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ParseError(lineno, "non-finite score");
  return d;
}

}  // namespace detail

inline Instance parse_instance(const nlohmann::json& j, std::size_t lineno = 0) {
  Instance inst;
  const auto& id = detail::require(j, "id", lineno);
  const auto& text = detail::require(j, "text", lineno);
  const auto& tokens = detail::require(j, "tokens", lineno);
  const auto& label = detail::require(j, "label", lineno);
  if (!id.is_string()) throw ParseError(lineno, "'id' must be a string");
  if (!text.is_string()) throw ParseError(lineno, "'text' must be a string");
  if (!tokens.is_array()) throw ParseError(lineno, "'tokens' must be an array");
  if (!label.is_number_integer()) throw ParseError(lineno, "'label' must be an integer");
  inst.id = id.get<std::string>();
  inst.text = text.get<std::string>();
  inst.label = label.get<int>();
  for (const auto& t : tokens) {
    if (!t.is_string()) throw ParseError(lineno, "token is not a string");
    inst.tokens.push_back(t.get<std::string>());
  }
  if (inst.tokens.empty()) throw ParseError(lineno, "'tokens' is empty");

  if (auto it = j.find("rationale"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ParseError(lineno, "'rationale' must be an array");
    std::vector<std::uint8_t> mask;
    for (const auto& v : *it) {
      if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1))
        throw ParseError(lineno, "rationale entries must be 0 or 1");
      mask.push_back(static_cast<std::uint8_t>(v.get<int>()));
    }
    if (mask.size() != inst.tokens.size())
      throw ParseError(lineno, "rationale length " + std::to_string(mask.size()) +
                                   " does not match " + std::to_string(inst.tokens.size()) +
                                   " tokens");
    inst.rationale = std::move(mask);
  }
  return inst;
}

inline std::vector<Instance> parse_corpus(std::istream& in) {
  std::vector<Instance> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank(line)) continue;
    auto inst = parse_instance(detail::parse_line(line, lineno), lineno);
    if (!ids.insert(inst.id).second) throw ParseError(lineno, "duplicate id '" + inst.id + "'");
    out.push_back(std::move(inst));
  }
  return out;
}

inline std::vector<Instance> parse_corpus(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_corpus(in);
}

inline nlohmann::ordered_json to_json(const Instance& inst) {
  nlohmann::ordered_json j;
  j["id"] = inst.id;
  j["text"] = inst.text;
  j["tokens"] = inst.tokens;
  j["label"] = inst.label;
  if (inst.rationale) {
    auto& r = j["rationale"] = nlohmann::ordered_json::array();
    for (auto v : *inst.rationale) r.push_back(static_cast<int>(v));
  }
  return j;
}

inline std::string serialize_corpus(const std::vector<Instance>& corpus) {
  std::string out;
  for (const auto& inst : corpus) {
    out += to_json(inst).dump();
    out += '\n';
  }
  return out;
}

inline AttributionRecord parse_attribution(const nlohmann::json& j, std::size_t lineno = 0) {
  AttributionRecord rec;
  const auto& id = detail::require(j, "instance_id", lineno);
  const auto& method = detail::require(j, "method", lineno);
  const auto& scores = detail::require(j, "scores", lineno);
  if (!id.is_string()) throw ParseError(lineno, "'instance_id' must be a string");
  if (!method.is_string() || method.get<std::string>().empty())
    throw ParseError(lineno, "'method' must be a non-empty string");
  if (!scores.is_array()) throw ParseError(lineno, "'scores' must be an array");
  rec.instance_id = id.get<std::string>();
  rec.method = method.get<std::string>();

  bool any_vector = false, any_scalar = false;
  for (const auto& s : scores) (s.is_array() ? any_vector : any_scalar) = true;
  if (any_vector && any_scalar)
    throw ParseError(lineno, "mixed scalar and vector scores in one record");

  if (any_vector) {
    Matrix m;
    m.rows = scores.size();
    m.cols = scores.front().size();
    if (m.cols == 0) throw ParseError(lineno, "empty attribution vector");
    m.values.reserve(m.rows * m.cols);
    for (const auto& row : scores) {
      if (row.size() != m.cols)
        throw ParseError(lineno, "attribution vectors have dimensionality " +
                                     std::to_string(m.cols) + " and " + std::to_string(row.size()));
      for (const auto& v : row) m.values.push_back(detail::finite_number(v, lineno));
    }
    rec.per_token = std::move(m);
  } else {
    ScalarScores v;
    v.reserve(scores.size());
    for (const auto& s : scores) v.push_back(detail::finite_number(s, lineno));
    rec.per_token = std::move(v);
  }

  if (auto it = j.find("seconds"); it != j.end() && !it->is_null()) {
    const double secs = detail::finite_number(*it, lineno);
    if (secs < 0.0) throw ParseError(lineno, "'seconds' must be non-negative");
    rec.seconds = secs;
  }
  return rec;
}

inline std::vector<AttributionRecord> parse_attributions(std::istream& in,
                                                         const std::vector<Instance>& corpus) {
  std::unordered_map<std::string, std::size_t> token_counts;
  for (const auto& inst : corpus) token_counts.emplace(inst.id, inst.tokens.size());

  std::vector<AttributionRecord> out;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank(line)) continue;
    auto rec = parse_attribution(detail::parse_line(line, lineno), lineno);
    auto it = token_counts.find(rec.instance_id);
    if (it == token_counts.end())
      throw ParseError(lineno, "unknown instance_id '" + rec.instance_id + "'");
    if (rec.size() != it->second)
      throw ParseError(lineno, "scores length " + std::to_string(rec.size()) + " does not match " +
                                   std::to_string(it->second) + " tokens of '" + rec.instance_id +
                                   "'");
    if (!seen.emplace(rec.method, rec.instance_id).second)
      throw ParseError(lineno, "duplicate record for method '" + rec.method + "' and instance '" +
                                   rec.instance_id + "'");
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<AttributionRecord> parse_attributions(const std::filesystem::path& path,
                                                         const std::vector<Instance>& corpus) {
  auto in = detail::open_input(path);
  return parse_attributions(in, corpus);
}

}  // namespace scene

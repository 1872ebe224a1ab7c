#pragma once

// Run configuration: one JSON file, every default spelled out below.
//
// {
//   "corpus": "corpus.jsonl",            paths resolve against the config file
//   "attributions": "attributions.jsonl",
//   "top_v": 5, "k": 10, "candidate_pool": 20, "max_redraws": 10,
//   "seed": 0, "rank_by_abs": false,
//   "methods": [],                       empty means every method in the file
//   "aggregations": ["mean", "l2"],      used for per-dimension attributions
//   "noise": {"sigma": 0.01, "samples": 50, "seed": <run seed>},
//   "infidelity_on_logit": false,
//   "workers": 4,
//   "backend": {"url": "http://127.0.0.1:8080", "timeout_seconds": 30,
//               "max_batch": 32, "retries": 2, "max_in_flight": 4}
//              or {"mock": "fixtures.json"},
//   "roles": {"classifier": <backend>, "fill_mask": <backend>, "encoder": <backend>}
// }

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "scene/backend.hpp"
#include "scene/cfgen.hpp"
#include "scene/error.hpp"
#include "scene/metrics.hpp"
#include "scene/types.hpp"

namespace scene {

inline constexpr const char* kBackendUrlEnv = "SCENE_BACKEND_URL";

struct BackendSpec {
  // Set for the in-process mock; otherwise the HTTP descriptor is used.
  std::optional<std::filesystem::path> mock_fixtures;
  BackendDescriptor http;

  friend bool operator==(const BackendSpec& a, const BackendSpec& b) {
    return a.mock_fixtures == b.mock_fixtures && a.http.base_url == b.http.base_url &&
           a.http.timeout_seconds == b.http.timeout_seconds && a.http.max_batch == b.http.max_batch &&
           a.http.retries == b.http.retries && a.http.max_in_flight == b.http.max_in_flight;
  }
};

struct SceneConfig {
  std::filesystem::path corpus;
  std::filesystem::path attributions;
  std::size_t top_v = kDefaultV;
  std::size_t k = kDefaultK;
  std::size_t candidate_pool = kDefaultCandidatePool;
  std::size_t max_redraws = kDefaultMaxRedraws;
  std::uint64_t seed = 0;
  bool rank_by_abs = false;
  std::vector<std::string> methods;
  std::vector<Aggregation> aggregations{Aggregation::mean, Aggregation::l2};
  NoiseConfig noise;
  bool noise_seed_set = false;
  bool infidelity_on_logit = false;
  std::size_t workers = 4;
  BackendSpec classifier;
  BackendSpec fill_mask;
  BackendSpec encoder;
};

namespace detail {

template <typename T>
T config_value(const nlohmann::json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key())) throw ConfigError("unknown field '" + it.key() + "' in " + where);
}

inline std::size_t positive(const nlohmann::json& j, const char* key, std::size_t fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  if (!it->is_number_integer() || it->get<long long>() < 1)
    throw ConfigError(std::string("config field '") + key + "' must be a positive integer");
  return it->get<std::size_t>();
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline BackendSpec parse_backend_spec(const nlohmann::json& j, const std::filesystem::path& base,
                                      const std::string& where) {
  reject_unknown(j, {"url", "timeout_seconds", "max_batch", "retries", "max_in_flight", "mock"}, where);
  BackendSpec spec;
  if (j.contains("mock")) {
    if (j.contains("url")) throw ConfigError(where + " sets both 'mock' and 'url'");
    spec.mock_fixtures = resolve(base, config_value<std::string>(j, "mock", ""));
    return spec;
  }
  auto& d = spec.http;
  d.base_url = config_value<std::string>(j, "url", d.base_url);
  d.timeout_seconds = config_value<double>(j, "timeout_seconds", d.timeout_seconds);
  d.max_batch = positive(j, "max_batch", d.max_batch);
  d.max_in_flight = positive(j, "max_in_flight", d.max_in_flight);
  auto r = j.find("retries");
  if (r != j.end()) {
    if (!r->is_number_integer() || r->get<long long>() < 0) throw ConfigError(where + ": 'retries' must be >= 0");
    d.retries = r->get<std::size_t>();
  }
  validate(d);
  return spec;
}

}  // namespace detail

// base_dir anchors relative paths. backend_url_override replaces the URL of
// the default backend, turning a mock default into an HTTP one.
inline SceneConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir,
                                const std::optional<std::string>& backend_url_override = std::nullopt) {
  using namespace detail;
  reject_unknown(j,
                 {"corpus", "attributions", "top_v", "k", "candidate_pool", "max_redraws", "seed", "rank_by_abs",
                  "methods", "aggregations", "noise", "infidelity_on_logit", "workers", "backend", "roles"},
                 "config");
  SceneConfig c;
  if (!j.contains("corpus") || !j.contains("attributions"))
    throw ConfigError("config needs 'corpus' and 'attributions'");
  c.corpus = resolve(base_dir, config_value<std::string>(j, "corpus", ""));
  c.attributions = resolve(base_dir, config_value<std::string>(j, "attributions", ""));
  c.top_v = positive(j, "top_v", c.top_v);
  c.k = positive(j, "k", c.k);
  c.candidate_pool = positive(j, "candidate_pool", c.candidate_pool);
  c.max_redraws = config_value<std::size_t>(j, "max_redraws", c.max_redraws);
  c.seed = config_value<std::uint64_t>(j, "seed", c.seed);
  c.rank_by_abs = config_value<bool>(j, "rank_by_abs", c.rank_by_abs);
  c.methods = config_value<std::vector<std::string>>(j, "methods", {});
  c.infidelity_on_logit = config_value<bool>(j, "infidelity_on_logit", c.infidelity_on_logit);
  c.workers = positive(j, "workers", c.workers);

  if (auto a = j.find("aggregations"); a != j.end()) {
    c.aggregations.clear();
    for (const auto& name : config_value<std::vector<std::string>>(j, "aggregations", {})) {
      Aggregation mode;
      try {
        mode = parse_aggregation(name);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
      if (mode == Aggregation::direct) throw ConfigError("'direct' is implied for scalar attributions");
      if (std::find(c.aggregations.begin(), c.aggregations.end(), mode) == c.aggregations.end())
        c.aggregations.push_back(mode);
    }
    if (c.aggregations.empty()) throw ConfigError("'aggregations' is empty");
  }

  if (auto n = j.find("noise"); n != j.end()) {
    reject_unknown(*n, {"sigma", "samples", "seed"}, "noise");
    c.noise.sigma = config_value<double>(*n, "sigma", c.noise.sigma);
    c.noise.samples = positive(*n, "samples", c.noise.samples);
    if (n->contains("seed") && !(*n)["seed"].is_null()) {
      c.noise.seed = config_value<std::uint64_t>(*n, "seed", 0);
      c.noise_seed_set = true;
    }
  }
  try {
    validate(c.noise);
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  if (!c.noise_seed_set) c.noise.seed = c.seed;

  BackendSpec def;
  if (auto b = j.find("backend"); b != j.end()) def = parse_backend_spec(*b, base_dir, "backend");
  if (backend_url_override && !backend_url_override->empty()) {
    def.mock_fixtures.reset();
    def.http.base_url = *backend_url_override;
  }
  c.classifier = c.fill_mask = c.encoder = def;
  if (auto r = j.find("roles"); r != j.end()) {
    reject_unknown(*r, {"classifier", "fill_mask", "encoder"}, "roles");
    if (r->contains("classifier")) c.classifier = parse_backend_spec((*r)["classifier"], base_dir, "roles.classifier");
    if (r->contains("fill_mask")) c.fill_mask = parse_backend_spec((*r)["fill_mask"], base_dir, "roles.fill_mask");
    if (r->contains("encoder")) c.encoder = parse_backend_spec((*r)["encoder"], base_dir, "roles.encoder");
  }
  return c;
}

inline std::optional<std::string> backend_url_from_env() {
  if (const char* v = std::getenv(kBackendUrlEnv); v && *v) return std::string(v);
  return std::nullopt;
}

inline SceneConfig load_config(const std::filesystem::path& path,
                               const std::optional<std::string>& backend_url_override = backend_url_from_env()) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path(), backend_url_override);
}

}  // namespace scene

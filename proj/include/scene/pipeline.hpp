#pragma once

// End-to-end evaluation: originals are predicted once, then every
// (method, aggregation) row selects tokens, generates counterfactuals,
// re-predicts, measures distances and reduces to the report metrics.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "scene/backend.hpp"
#include "scene/caching_backend.hpp"
#include "scene/cfgen.hpp"
#include "scene/config.hpp"
#include "scene/domain.hpp"
#include "scene/error.hpp"
#include "scene/extraction.hpp"
#include "scene/http_backend.hpp"
#include "scene/metrics.hpp"
#include "scene/mock_backend.hpp"
#include "scene/random.hpp"
#include "scene/types.hpp"

namespace scene {

struct Backends {
  Backend& classifier;
  Backend& fill_mask;
  Backend& encoder;
};

struct RunResult {
  EvaluationReport report;
  // Row order, then corpus order.
  std::vector<SoftCounterfactualSet> counterfactuals;
};

namespace detail {

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
// written by index; the first exception (lowest index) is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(workers, n);
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline Diagnostic failure(const std::string& id, const std::string& method, const std::string& agg,
                          const std::string& stage, const std::string& msg) {
  return {id, method, agg, stage, msg, true};
}

inline Diagnostic note(const std::string& id, const std::string& method, const std::string& agg,
                       const std::string& stage, const std::string& msg) {
  return {id, method, agg, stage, msg, false};
}

struct InstanceOutcome {
  // Probability drops need the original prediction and K counterfactual predictions.
  bool scored = false;
  double orig = 0.0;
  std::vector<double> cf;
  std::vector<double> dists;
  std::optional<double> ap;
  std::optional<SoftCounterfactualSet> set;
  std::vector<Diagnostic> diags;
};

struct InfidelityOutcome {
  std::optional<double> value;
  std::vector<Diagnostic> diags;
};

struct MethodData {
  std::string name;
  bool vector = false;
  // Corpus index -> record, corpus order.
  std::vector<std::pair<std::size_t, const AttributionRecord*>> records;
};

inline std::vector<MethodData> collect_methods(const SceneConfig& cfg, const std::vector<Instance>& corpus,
                                               const std::vector<AttributionRecord>& attributions) {
  std::map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < corpus.size(); ++i) index_of.emplace(corpus[i].id, i);

  std::vector<MethodData> all;
  std::map<std::string, std::size_t> slot;
  for (const auto& rec : attributions) {
    auto [it, fresh] = slot.emplace(rec.method, all.size());
    if (fresh) all.push_back({rec.method, rec.is_vector(), {}});
    auto inst = index_of.find(rec.instance_id);
    if (inst == index_of.end()) throw ConfigError("attribution for unknown instance '" + rec.instance_id + "'");
    all[it->second].records.emplace_back(inst->second, &rec);
  }
  for (auto& m : all)
    std::sort(m.records.begin(), m.records.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  if (cfg.methods.empty()) return all;
  std::vector<MethodData> chosen;
  for (const auto& name : cfg.methods) {
    auto it = slot.find(name);
    if (it == slot.end()) throw ConfigError("method '" + name + "' has no attributions");
    if (std::none_of(chosen.begin(), chosen.end(), [&](const auto& m) { return m.name == name; }))
      chosen.push_back(all[it->second]);
  }
  return chosen;
}

inline std::vector<double> map_scores(const std::vector<double>& weights, bool by_abs) {
  std::vector<double> out;
  for (std::size_t i = 1; i + 1 < weights.size(); ++i) out.push_back(by_abs ? std::abs(weights[i]) : weights[i]);
  return out;
}

inline std::string backend_identity(Backends b) {
  if (&b.classifier == &b.fill_mask && &b.classifier == &b.encoder) return b.classifier.identity();
  return "classifier=" + b.classifier.identity() + " fill_mask=" + b.fill_mask.identity() +
         " encoder=" + b.encoder.identity();
}

}  // namespace detail

inline RunResult run_scene(const SceneConfig& cfg, const std::vector<Instance>& corpus,
                           const std::vector<AttributionRecord>& attributions, Backends raw) {
  const auto methods = detail::collect_methods(cfg, corpus, attributions);
  if (methods.empty()) throw ConfigError("no methods to evaluate: the report would be empty");

  // One cache per distinct backend object.
  std::vector<std::unique_ptr<CachingBackend>> caches;
  std::map<Backend*, CachingBackend*> cache_of;
  auto cached = [&](Backend& b) -> Backend& {
    auto [it, fresh] = cache_of.emplace(&b, nullptr);
    if (fresh) it->second = caches.emplace_back(std::make_unique<CachingBackend>(b)).get();
    return *it->second;
  };
  Backends be{cached(raw.classifier), cached(raw.fill_mask), cached(raw.encoder)};

  RunResult result;
  auto& report = result.report;
  report.run = {cfg.top_v, cfg.k, cfg.candidate_pool, cfg.seed, cfg.noise.sigma, cfg.noise.samples,
                cfg.rank_by_abs, cfg.infidelity_on_logit, detail::backend_identity(raw)};

  // Step 1: originals, once for all methods.
  std::vector<std::optional<PredictionResult>> originals(corpus.size());
  if (!corpus.empty()) {
    std::vector<std::string> texts;
    for (const auto& inst : corpus) texts.push_back(inst.text);
    try {
      auto preds = be.classifier.predict(texts);
      check_predictions(preds, texts.size());
      for (std::size_t i = 0; i < preds.size(); ++i) originals[i] = std::move(preds[i]);
    } catch (const TransportError&) {
      throw;
    } catch (const Error&) {
      // Isolate the failing instances.
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        try {
          auto one = be.classifier.predict({corpus[i].text});
          check_predictions(one, 1);
          originals[i] = std::move(one[0]);
        } catch (const TransportError&) {
          throw;
        } catch (const Error& e) {
          report.diagnostics.push_back(detail::failure(corpus[i].id, "", "", "predict", e.what()));
        }
      }
    }
  }

  const SelectOptions select{cfg.rank_by_abs};
  const SamplingOptions sampling{cfg.max_redraws};

  for (const auto& method : methods) {
    const std::size_t n = method.records.size();

    // Infidelity is a property of the raw attribution, shared by every aggregation row.
    std::vector<detail::InfidelityOutcome> infid(n);
    if (method.vector) {
      detail::parallel_for(n, cfg.workers, [&](std::size_t r) {
        const auto [ci, rec] = method.records[r];
        const auto& inst = corpus[ci];
        auto& out = infid[r];
        if (!rec->is_vector()) {
          out.diags.push_back(detail::failure(inst.id, method.name, "", "infidelity", "scalar record in a per-dimension method"));
          return;
        }
        if (!originals[ci]) {
          out.diags.push_back(detail::failure(inst.id, method.name, "", "infidelity", "original prediction unavailable"));
          return;
        }
        const std::size_t cls = originals[ci]->predicted_class;
        try {
          const Matrix emb = be.classifier.embed(inst.text);
          const auto& phi = std::get<Matrix>(rec->per_token);
          auto f = [&](const Matrix& e) {
            const auto p = be.classifier.predict_embeddings(e);
            check_predictions({p}, 1);
            if (cls >= p.probabilities.size()) throw ProtocolError("predicted class missing from response");
            if (!cfg.infidelity_on_logit) return p.probabilities[cls];
            if (!p.logits) throw ProtocolError("backend does not report logits");
            return (*p.logits)[cls];
          };
          NoiseConfig noise = cfg.noise;
          noise.seed = derive_seed(cfg.noise.seed, "infidelity", method.name, inst.id);
          out.value = infidelity(phi, emb, f, noise).value;
        } catch (const TransportError&) {
          throw;
        } catch (const Error& e) {
          out.diags.push_back(detail::failure(inst.id, method.name, "", "infidelity", e.what()));
        }
      });
    }
    std::optional<double> infidelity_value;
    MetricCount infidelity_count{n, 0, 0};
    std::vector<Diagnostic> infidelity_diags;
    {
      double sum = 0.0;
      for (auto& o : infid) {
        if (o.value) {
          sum += *o.value;
          ++infidelity_count.used;
        }
        for (auto& d : o.diags) infidelity_diags.push_back(d);
      }
      infidelity_count.skipped = n - infidelity_count.used;
      if (infidelity_count.used > 0) infidelity_value = sum / static_cast<double>(infidelity_count.used);
      if (!method.vector)
        infidelity_diags.push_back(detail::note("", method.name, "", "infidelity",
                                                "scalar attributions: infidelity needs per-dimension scores"));
    }

    std::vector<Aggregation> modes =
        method.vector ? cfg.aggregations : std::vector<Aggregation>{Aggregation::direct};
    std::optional<double> seconds;
    {
      double total = 0.0;
      std::size_t timed = 0;
      for (const auto& [ci, rec] : method.records)
        if (rec->seconds) {
          total += *rec->seconds;
          ++timed;
        }
      if (timed > 0) seconds = total / static_cast<double>(timed);
    }

    bool first_mode = true;
    for (const Aggregation mode : modes) {
      const std::string agg(to_string(mode));
      std::vector<detail::InstanceOutcome> outcomes(n);

      detail::parallel_for(n, cfg.workers, [&](std::size_t r) {
        const auto [ci, rec] = method.records[r];
        const auto& inst = corpus[ci];
        auto& out = outcomes[r];
        auto fail = [&](const std::string& stage, const std::string& msg) {
          out.diags.push_back(detail::failure(inst.id, method.name, agg, stage, msg));
        };
        auto inform = [&](const std::string& stage, const std::string& msg) {
          out.diags.push_back(detail::note(inst.id, method.name, agg, stage, msg));
        };

        std::vector<double> weights;
        try {
          weights = aggregate(*rec, mode);
        } catch (const Error& e) {
          fail("extraction", e.what());
          return;
        }

        // Human agreement over non-boundary tokens.
        if (!inst.rationale) {
          inform("map", "no rationale");
        } else {
          const auto scores = detail::map_scores(weights, cfg.rank_by_abs);
          std::vector<std::uint8_t> rel;
          for (std::size_t i = 1; i + 1 < inst.rationale->size(); ++i) rel.push_back((*inst.rationale)[i]);
          try {
            out.ap = average_precision(scores, rel);
          } catch (const MetricError& e) {
            inform("map", e.what());
          }
        }

        if (!originals[ci]) {
          fail("predict", "original prediction unavailable");
          return;
        }
        const std::size_t cls = originals[ci]->predicted_class;
        try {
          const auto eligible = filter_candidates(inst.tokens);
          const auto sel = select_top_v(weights, eligible, cfg.top_v, select);
          if (sel.selected.empty()) {
            fail("extraction", "no eligible token to mask");
            return;
          }
          if (sel.degenerate)
            inform("extraction", "only " + std::to_string(sel.selected.size()) + " eligible tokens for V=" +
                                     std::to_string(cfg.top_v));
          const auto masked = mask_text(inst, sel.selected);
          const auto lists = be.fill_mask.fill_mask(masked.text, cfg.candidate_pool);
          check_fill_mask(lists, masked.slots.size(), cfg.candidate_pool);
          std::vector<std::vector<std::string>> candidates;
          for (std::size_t s = 0; s < lists.size(); ++s) {
            candidates.push_back(filter_substitutes(lists[s], masked.slots[s].token));
            if (candidates.back().empty())
              inform("generation", "no substitute for '" + masked.slots[s].token + "', original kept");
          }
          auto set = sample_counterfactuals(masked, candidates, cfg.k,
                                            derive_seed(cfg.seed, "generate", method.name, agg, inst.id), sampling);
          set.instance_id = inst.id;
          set.method = method.name;
          set.aggregation = mode;
          if (set.degenerate) inform("generation", "duplicate counterfactuals survived the re-draw budget");

          std::vector<std::string> texts;
          for (const auto& cf : set.counterfactuals) texts.push_back(cf.text);
          const auto preds = be.classifier.predict(texts);
          check_predictions(preds, texts.size());
          for (const auto& p : preds) {
            if (cls >= p.probabilities.size()) throw ProtocolError("predicted class missing from response");
            out.cf.push_back(p.probabilities[cls]);
          }
          for (const auto& t : texts) out.dists.push_back(sentence_distance(be.encoder, inst.text, t));
          out.orig = originals[ci]->probabilities[cls];
          out.scored = true;
          out.set = std::move(set);
        } catch (const TransportError&) {
          throw;
        } catch (const GenerationError& e) {
          fail("generation", e.what());
        } catch (const Error& e) {
          fail("evaluate", e.what());
        }
      });

      ReportRow row;
      row.method = method.name;
      row.aggregation = mode;
      row.average_time = seconds;
      row.infidelity = infidelity_value;
      row.infidelity_count = infidelity_count;

      std::vector<double> orig;
      std::vector<std::vector<double>> cf, dists;
      double ap_sum = 0.0;
      std::size_t ap_used = 0;
      for (auto& o : outcomes) {
        if (o.scored) {
          orig.push_back(o.orig);
          cf.push_back(o.cf);
          dists.push_back(o.dists);
        }
        if (o.ap) {
          ap_sum += *o.ap;
          ++ap_used;
        }
      }
      row.validity_count = {n, orig.size(), n - orig.size()};
      row.c_soft_count = {n, 0, n};
      row.map_count = {n, ap_used, n - ap_used};
      if (ap_used > 0) row.map = ap_sum / static_cast<double>(ap_used);

      std::vector<Diagnostic> row_diags;
      if (!orig.empty()) {
        row.validity_soft = validity_soft(orig, cf);
        for (std::size_t r = 0; r < n; ++r) {
          if (!outcomes[r].scored) continue;
          double dsum = 0.0;
          for (double d : outcomes[r].dists) dsum += d;
          if (dsum < kDistanceEpsilon)
            row_diags.push_back(detail::failure(corpus[method.records[r].first].id, method.name, agg, "c_soft",
                                                "counterfactual distances sum to zero"));
        }
        try {
          const auto cs = c_soft(orig, cf, dists);
          row.c_soft = cs.value;
          row.c_soft_count = {n, cs.used, n - cs.used};
        } catch (const MetricError& e) {
          row_diags.push_back(detail::failure("", method.name, agg, "c_soft", e.what()));
        }
      }

      for (auto& o : outcomes) {
        for (auto& d : o.diags) report.diagnostics.push_back(std::move(d));
        if (o.set) result.counterfactuals.push_back(std::move(*o.set));
      }
      for (auto& d : row_diags) report.diagnostics.push_back(std::move(d));
      if (first_mode)
        for (auto& d : infidelity_diags) report.diagnostics.push_back(d);
      first_mode = false;
      report.rows.push_back(std::move(row));
    }
  }

  // Each metric column against human agreement.
  const std::vector<std::pair<std::string, std::optional<double> ReportRow::*>> columns{
      {"infidelity", &ReportRow::infidelity},
      {"validity_soft", &ReportRow::validity_soft},
      {"c_soft", &ReportRow::c_soft},
  };
  for (const auto& [name, member] : columns) {
    Correlation c;
    c.metric = name;
    std::vector<double> x, y;
    for (const auto& row : report.rows)
      if (row.map && row.*member) {
        x.push_back(*row.map);
        y.push_back(*(row.*member));
      }
    c.rows = x.size();
    try {
      c.rho = spearman(x, y);
    } catch (const Error& e) {
      c.note = e.what();
    }
    report.correlations.push_back(std::move(c));
  }
  return result;
}

inline std::unique_ptr<Backend> make_backend(const BackendSpec& spec) {
  if (spec.mock_fixtures) return std::make_unique<MockBackend>(load_mock_fixtures(*spec.mock_fixtures));
  return std::make_unique<HttpBackend>(spec.http);
}

// Loads inputs and builds backends; role specs that are equal share one backend.
inline RunResult run_scene(const SceneConfig& cfg) {
  std::vector<Instance> corpus;
  std::vector<AttributionRecord> attributions;
  try {
    corpus = parse_corpus(cfg.corpus);
    attributions = parse_attributions(cfg.attributions, corpus);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
  std::vector<std::pair<BackendSpec, std::unique_ptr<Backend>>> owned;
  auto get = [&](const BackendSpec& spec) -> Backend& {
    for (auto& [s, b] : owned)
      if (s == spec) return *b;
    return *owned.emplace_back(spec, make_backend(spec)).second;
  };
  Backend& classifier = get(cfg.classifier);
  Backend& masker = get(cfg.fill_mask);
  Backend& encoder = get(cfg.encoder);
  return run_scene(cfg, corpus, attributions, Backends{classifier, masker, encoder});
}

inline nlohmann::ordered_json to_json(const SoftCounterfactualSet& set, std::size_t index) {
  const auto& cf = set.counterfactuals.at(index);
  nlohmann::ordered_json j;
  j["instance_id"] = set.instance_id;
  j["method"] = set.method;
  j["aggregation"] = to_string(set.aggregation);
  j["seed"] = set.seed;
  j["index"] = index;
  j["text"] = cf.text;
  auto& subs = j["substitutions"] = nlohmann::ordered_json::array();
  for (const auto& s : cf.substitutions)
    subs.push_back({{"position", s.position}, {"original", s.original}, {"replacement", s.replacement}});
  j["fallback"] = cf.fallback;
  return j;
}

inline std::string serialize_counterfactuals(const std::vector<SoftCounterfactualSet>& sets) {
  std::string out;
  for (const auto& set : sets)
    for (std::size_t i = 0; i < set.counterfactuals.size(); ++i) {
      out += to_json(set, i).dump();
      out += '\n';
    }
  return out;
}

inline void export_counterfactuals(const std::vector<SoftCounterfactualSet>& sets,
                                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize_counterfactuals(sets);
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace scene

#include "scene/pipeline.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "golden.hpp"
#include "scene/report.hpp"

using namespace scene;

namespace {

SceneConfig e2e_config() { return load_config(scene::testing::data_path("e2e/config.json"), std::nullopt); }

std::string artifacts(const RunResult& r) {
  return render_report(r.report, ReportFormat::json) + render_report(r.report, ReportFormat::csv) +
         render_report(r.report, ReportFormat::table_text) + serialize_counterfactuals(r.counterfactuals);
}

const ReportRow* find_row(const EvaluationReport& r, const std::string& method, Aggregation a) {
  for (const auto& row : r.rows)
    if (row.method == method && row.aggregation == a) return &row;
  return nullptr;
}

}  // namespace

TEST(Config, DefaultsAndResolution) {
  const auto c = parse_config(nlohmann::json{{"corpus", "c.jsonl"}, {"attributions", "/abs/a.jsonl"}}, "/base");
  EXPECT_EQ(c.corpus, std::filesystem::path("/base/c.jsonl"));
  EXPECT_EQ(c.attributions, std::filesystem::path("/abs/a.jsonl"));
  EXPECT_EQ(c.top_v, 5u);
  EXPECT_EQ(c.k, 10u);
  EXPECT_EQ(c.candidate_pool, 20u);
  EXPECT_DOUBLE_EQ(c.noise.sigma, 0.01);
  EXPECT_EQ(c.noise.samples, 50u);
  EXPECT_FALSE(c.rank_by_abs);
  EXPECT_FALSE(c.infidelity_on_logit);
  EXPECT_EQ(c.aggregations, (std::vector<Aggregation>{Aggregation::mean, Aggregation::l2}));
  EXPECT_FALSE(c.classifier.mock_fixtures);
  EXPECT_EQ(c.classifier.http.base_url, "http://127.0.0.1:8080");
}

TEST(Config, Errors) {
  const nlohmann::json base{{"corpus", "c"}, {"attributions", "a"}};
  auto with = [&](const char* key, nlohmann::json v) {
    auto j = base;
    j[key] = std::move(v);
    return j;
  };
  EXPECT_THROW(parse_config(nlohmann::json{{"corpus", "c"}}, "."), ConfigError);
  EXPECT_THROW(parse_config(with("top_k", 3), "."), ConfigError);
  EXPECT_THROW(parse_config(with("k", 0), "."), ConfigError);
  EXPECT_THROW(parse_config(with("seed", "seven"), "."), ConfigError);
  EXPECT_THROW(parse_config(with("aggregations", {"max"}), "."), ConfigError);
  EXPECT_THROW(parse_config(with("noise", {{"sigma", 0}}), "."), ConfigError);
  EXPECT_THROW(parse_config(with("backend", {{"url", "http://x"}, {"mock", "m.json"}}), "."), ConfigError);
  EXPECT_THROW(parse_config(with("backend", {{"max_batch", 0}}), "."), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json", std::nullopt), ConfigError);
}

TEST(Config, BackendUrlOverride) {
  const nlohmann::json j{{"corpus", "c"}, {"attributions", "a"}, {"backend", {{"mock", "m.json"}}},
                         {"roles", {{"encoder", {{"url", "http://enc:1"}}}}}};
  const auto c = parse_config(j, "/d", std::string("http://override:9"));
  EXPECT_FALSE(c.classifier.mock_fixtures);
  EXPECT_EQ(c.classifier.http.base_url, "http://override:9");
  EXPECT_EQ(c.fill_mask.http.base_url, "http://override:9");
  EXPECT_EQ(c.encoder.http.base_url, "http://enc:1");
  EXPECT_EQ(*parse_config(j, "/d").classifier.mock_fixtures, std::filesystem::path("/d/m.json"));

  ::setenv(kBackendUrlEnv, "http://env:7", 1);
  EXPECT_EQ(backend_url_from_env(), std::optional<std::string>("http://env:7"));
  ::unsetenv(kBackendUrlEnv);
  EXPECT_FALSE(backend_url_from_env());
}

TEST(RunScene, MatchesHandComputedOracle) {
  const auto run = run_scene(e2e_config());
  const auto json = nlohmann::json::parse(render_report(run.report, ReportFormat::json));
  for (const auto& line : scene::testing::check_e2e(json, serialize_counterfactuals(run.counterfactuals)))
    ADD_FAILURE() << line;
  EXPECT_FALSE(run.report.has_failures());
  EXPECT_EQ(run.report.run.seed, 7u);
  EXPECT_EQ(run.report.run.backend, "mock:e2e");
  EXPECT_EQ(run.counterfactuals.size(), 9u);
}

TEST(RunScene, DeterministicAcrossRunsAndWorkerCounts) {
  auto cfg = e2e_config();
  const auto a = artifacts(run_scene(cfg));
  EXPECT_EQ(a, artifacts(run_scene(cfg)));
  cfg.workers = 1;
  EXPECT_EQ(a, artifacts(run_scene(cfg)));
  cfg.workers = 8;
  EXPECT_EQ(a, artifacts(run_scene(cfg)));
}

TEST(RunScene, RowsIndependentOfOtherMethods) {
  auto cfg = e2e_config();
  const auto both = run_scene(cfg);
  cfg.methods = {"lime"};
  const auto lime_only = run_scene(cfg);
  ASSERT_EQ(lime_only.report.rows.size(), 1u);
  const auto* full = find_row(both.report, "lime", Aggregation::direct);
  ASSERT_NE(full, nullptr);
  const auto& row = lime_only.report.rows[0];
  EXPECT_EQ(row.validity_soft, full->validity_soft);
  EXPECT_EQ(row.c_soft, full->c_soft);
  EXPECT_EQ(row.map, full->map);
  EXPECT_EQ(row.validity_count, full->validity_count);
  cfg.methods = {"nope"};
  EXPECT_THROW(run_scene(cfg), ConfigError);
}

TEST(RunScene, DiagnosticsConservation) {
  const auto run = run_scene(e2e_config());
  for (const auto& row : run.report.rows)
    for (const auto* c : {&row.validity_count, &row.c_soft_count, &row.infidelity_count, &row.map_count}) {
      EXPECT_EQ(c->in, 3u);
      EXPECT_EQ(c->in, c->used + c->skipped) << row.label();
    }
  const auto* lime = find_row(run.report, "lime", Aggregation::direct);
  EXPECT_EQ(lime->map_count.skipped, 1u);
  EXPECT_EQ(lime->infidelity_count.used, 0u);
}

TEST(RunScene, ZeroMethodsIsAnError) {
  auto cfg = e2e_config();
  const auto corpus = parse_corpus(cfg.corpus);
  MockBackend mock{MockFixtures{}};
  EXPECT_THROW(run_scene(cfg, corpus, {}, Backends{mock, mock, mock}), ConfigError);
}

TEST(RunScene, PerInstanceFailuresBecomeDiagnostics) {
  auto cfg = e2e_config();
  const auto corpus = parse_corpus(cfg.corpus);
  const auto attributions = parse_attributions(cfg.attributions, corpus);
  auto fixtures = load_mock_fixtures(scene::testing::data_path("e2e/mock.json"));
  fixtures.fill_mask.erase("good [MASK]");
  MockBackend mock(fixtures);
  const auto run = run_scene(cfg, corpus, attributions, Backends{mock, mock, mock});
  EXPECT_TRUE(run.report.has_failures());
  const auto* lime = find_row(run.report, "lime", Aggregation::direct);
  EXPECT_EQ(lime->validity_count.used, 2u);
  EXPECT_EQ(lime->validity_count.skipped, 1u);
  EXPECT_NEAR(*lime->validity_soft, (0.05 + 0.2) / 2.0, 1e-12);
  bool found = false;
  for (const auto& d : run.report.diagnostics)
    if (d.failure && d.instance_id == "e1" && d.method == "lime") found = true;
  EXPECT_TRUE(found);
}

TEST(RunScene, UnreachableBackendIsTransportError) {
  auto cfg = e2e_config();
  cfg.classifier = BackendSpec{};
  cfg.classifier.http.base_url = "http://127.0.0.1:1";
  cfg.classifier.http.timeout_seconds = 2;
  cfg.classifier.http.retries = 0;
  cfg.fill_mask = cfg.encoder = cfg.classifier;
  EXPECT_THROW(run_scene(cfg), TransportError);
}

TEST(RunScene, ProbabilityInfidelityIsReportedWithoutLogits) {
  auto cfg = e2e_config();
  cfg.infidelity_on_logit = false;
  const auto run = run_scene(cfg);
  const auto* grad = find_row(run.report, "grad", Aggregation::mean);
  ASSERT_TRUE(grad->infidelity);
  EXPECT_GE(*grad->infidelity, 0.0);
  EXPECT_EQ(grad->infidelity_count.used, 3u);
}

TEST(ExportCounterfactuals, ReviewSentenceRecords) {
  Instance inst;
  inst.id = "t1";
  inst.text = "I love this movie, the cast was great.";
  inst.tokens = {"[CLS]", "i", "love", "this", "movie", ",", "the", "cast", "was", "great", ".", "[SEP]"};
  const std::vector<ScoredPosition> sel{{2, 0.9}, {9, 0.8}};
  const std::vector<std::vector<std::string>> cands{{"like", "hate"}, {"awesome", "awful"}};
  auto set = sample_counterfactuals(mask_text(inst, sel), cands, 2, 3);
  set.instance_id = "t1";
  set.method = "m";
  const auto text = serialize_counterfactuals({set});
  std::istringstream in(text);
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line); ++lines) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("instance_id"), "t1");
    EXPECT_EQ(j.at("method"), "m");
    EXPECT_EQ(j.at("seed"), 3u);
    EXPECT_EQ(j.at("substitutions").size(), 2u);
  }
  EXPECT_EQ(lines, 2u);
  EXPECT_EQ(serialize_counterfactuals({}), "");
  EXPECT_EQ(text, serialize_counterfactuals({set}));
}

TEST(ExportCounterfactuals, UnwritablePath) {
  EXPECT_THROW(export_counterfactuals({}, "/nonexistent/dir/cf.jsonl"), Error);
}

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "golden.hpp"
#include "properties.hpp"
#include "scene/mock_backend.hpp"
#include "scene/pipeline.hpp"
#include "scene/report.hpp"

using namespace scene;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool ok = true;
  std::vector<std::string> notes;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      notes.push_back(what);
    }
  }
  void near(double got, double want, double tol, const std::string& what) {
    std::ostringstream s;
    s.precision(12);
    s << what << ": got " << got << ", want " << want << " +/- " << tol;
    require(std::abs(got - want) <= tol, s.str());
  }
};

int failures = 0;

void criterion(const std::string& name, double limit_seconds, const std::function<void(Verdict&)>& body) {
  Verdict v;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(v);
  } catch (const std::exception& e) {
    v.require(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (limit_seconds > 0) {
    std::ostringstream s;
    s << "runtime " << secs << " s exceeds " << limit_seconds << " s";
    v.require(secs < limit_seconds, s.str());
  }
  std::printf("%s  %s  (%.3f s)\n", v.ok ? "PASS" : "FAIL", name.c_str(), secs);
  for (const auto& n : v.notes) std::printf("      %s\n", n.c_str());
  if (!v.ok) ++failures;
}

using Probs = std::vector<std::vector<double>>;

struct TableEncoder {
  std::map<std::string, std::vector<double>> table;
  std::vector<std::vector<double>> sentence_embed(const std::vector<std::string>& texts) {
    std::vector<std::vector<double>> out;
    for (const auto& t : texts) out.push_back(table.at(t));
    return out;
  }
};

void metric_oracles(Verdict& v) {
  const double tol = 1e-12;
  const std::vector<double> one{0.9};
  v.near(validity_soft(one, Probs{{0.7, 0.5}}), 0.3, tol, "validitySoft single instance");
  v.near(validity_soft(one, Probs{{0.9, 0.9}}), 0.0, tol, "validitySoft zero drop");
  v.near(validity_soft(std::vector<double>{0.9, 0.4}, Probs{{0.7, 0.5}, {0.5, 0.5}}), 0.1, tol, "validitySoft two instances");

  v.near(c_soft(one, Probs{{0.7, 0.5}}, Probs{{0.3, 0.2}}).value, 1.2, tol, "cSoft single instance");
  v.near(c_soft(one, Probs{{0.9, 0.9}}, Probs{{0.3, 0.2}}).value, 0.0, tol, "cSoft zero drops");
  const auto excl = c_soft(std::vector<double>{0.9, 0.8}, Probs{{0.7}, {0.6}}, Probs{{0.0}, {0.5}});
  v.require(excl.excluded == 1 && excl.used == 1, "cSoft zero-distance instance is excluded and counted");

  v.near(average_precision(std::vector<double>{0.9, 0.1, 0.8}, std::vector<std::uint8_t>{1, 0, 1}), 1.0, tol,
         "AP positives first");
  v.near(average_precision(std::vector<double>{0.9, 0.8, 0.1}, std::vector<std::uint8_t>{0, 1, 1}),
         (1.0 / 2.0 + 2.0 / 3.0) / 2.0, tol, "AP mixed ranking");
  v.near(average_precision(std::vector<double>{0.9, 0.8, 0.1}, std::vector<std::uint8_t>{1, 1, 1}), 1.0, tol,
         "AP all positive");

  const std::vector<double> x{1, 2, 3};
  v.near(spearman(x, std::vector<double>{10, 20, 30}), 1.0, tol, "spearman perfect monotone");
  v.near(spearman(x, std::vector<double>{30, 20, 10}), -1.0, tol, "spearman perfect inverse");

  TableEncoder enc{{{"a", {1.0, 0.0}}, {"b", {0.0, 1.0}}, {"c", {-1.0, 0.0}}}};
  v.near(sentence_distance(enc, "a", "a"), 0.0, tol, "sentenceDistance identical");
  v.near(sentence_distance(enc, "a", "b"), 1.0, tol, "sentenceDistance orthogonal");
  v.near(sentence_distance(enc, "a", "c"), 2.0, tol, "sentenceDistance antipodal");

  auto stub = [](const Matrix& e) { return 0.3 * e.values[0]; };
  const std::vector<Matrix> draws{Matrix::from_rows({{1.0}})};
  v.near(infidelity_from_draws(Matrix::from_rows({{0.5}}), Matrix::from_rows({{2.0}}), stub, draws).value, 0.04, tol,
         "infidelity fixed draw");
}

void infidelity_zero(Verdict& v) {
  MockBackend mock(load_mock_fixtures(testing::data_path("synthetic/mock.json")));
  const auto corpus = parse_corpus(testing::data_path("synthetic/corpus.jsonl"));
  std::size_t checks = 0;
  for (const auto& inst : corpus) {
    const Matrix x = mock.embed(inst.text);
    for (std::size_t cls : {0u, 1u}) {
      const Matrix phi = mock.coefficient_matrix(cls, x.rows);
      auto logit = [&](const Matrix& e) { return (*mock.predict_embeddings(e).logits)[cls]; };
      for (double sigma : {0.001, 0.01, 0.1})
        for (std::size_t s : {1u, 50u}) {
          const double inf = infidelity(phi, x, logit, NoiseConfig{sigma, s, 7}).value;
          ++checks;
          std::ostringstream what;
          what << inst.id << " class " << cls << " sigma " << sigma << " S " << s << ": " << inf;
          v.require(inf >= 0.0 && inf < 1e-10, what.str());
        }
    }
  }
  v.require(checks == corpus.size() * 12, "every (sigma, S) combination checked");
}

void correlation_fixture(Verdict& v) {
  const auto t = testing::run_correlation_fixture();
  v.near(t.validity_rho, t.expected_validity, t.tolerance, "rho(Human Agreement, Validity_soft)");
  v.near(t.c_soft_rho, t.expected_c_soft, t.tolerance, "rho(Human Agreement, C_soft)");
}

void extraction_golden(Verdict& v) {
  const auto outcomes = testing::run_extraction_golden();
  v.require(outcomes.size() == 20, "golden suite has " + std::to_string(outcomes.size()) + " cases, want 20");
  for (const auto& o : outcomes) v.require(o.ok, o.name + ": " + o.detail);
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

void generation(Verdict& v) {
  const auto cfg = load_config(testing::data_path("synthetic/config.json"), std::nullopt);
  v.require(cfg.k == 10 && cfg.top_v == 5, "defaults K=10, V=5 in effect");
  const auto first = run_scene(cfg);
  const auto second = run_scene(cfg);
  const auto bytes = serialize_counterfactuals(first.counterfactuals);
  v.require(!bytes.empty(), "export is non-empty");
  v.require(bytes == serialize_counterfactuals(second.counterfactuals), "two seed-7 exports are byte-identical");
  v.require(!first.report.has_failures(), "run has no failure diagnostics");

  std::map<std::string, const Instance*> by_id;
  const auto corpus = parse_corpus(cfg.corpus);
  for (const auto& inst : corpus) by_id[inst.id] = &inst;

  std::map<std::string, std::size_t> per_group;
  std::size_t checked = 0;
  for (const auto& set : first.counterfactuals) {
    const auto& inst = *by_id.at(set.instance_id);
    const auto original = words(inst.text);
    for (const auto& cf : set.counterfactuals) {
      ++per_group[set.instance_id + "/" + set.method + "/" + std::string(to_string(set.aggregation))];
      v.require(cf.substitutions.size() == 5, set.instance_id + ": expected V=5 substitutions");
      // Synthetic tokens are one per word, so token position p is word p-1.
      std::map<std::size_t, std::string> replaced;
      for (const auto& s : cf.substitutions) replaced[s.position - 1] = s.replacement;
      const auto now = words(cf.text);
      if (now.size() != original.size()) {
        v.require(false, set.instance_id + ": word count changed in '" + cf.text + "'");
        continue;
      }
      for (std::size_t w = 0; w < now.size(); ++w) {
        const auto it = replaced.find(w);
        if (it == replaced.end()) {
          v.require(now[w] == original[w], set.instance_id + ": unmasked word " + std::to_string(w) + " changed");
        } else {
          const bool last = w + 1 == now.size();
          const std::string want = it->second + (last ? "." : "");
          v.require(lower(now[w]) == want && lower(original[w]) != want,
                    set.instance_id + ": masked word " + std::to_string(w) + " is '" + now[w] + "'");
        }
      }
      ++checked;
    }
  }
  v.require(per_group.size() == 30, "30 (instance, row) groups, got " + std::to_string(per_group.size()));
  for (const auto& [group, n] : per_group) v.require(n == 10, group + ": " + std::to_string(n) + " counterfactuals");
  v.require(checked == 300, "locality checked on " + std::to_string(checked) + " counterfactuals");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("env -u ") + kBackendUrlEnv + " " + SCENE_CLI + " " + args + " >/dev/null";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

void end_to_end(Verdict& v) {
  const auto a = fs::temp_directory_path() / "scene_acceptance_a";
  const auto b = fs::temp_directory_path() / "scene_acceptance_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const auto config = testing::data_path("e2e/config.json");
  const int code = run_cli("run --config " + config + " --out " + a.string());
  v.require(code == testing::load_json("e2e/oracle.json").at("exit_code").get<int>(),
            "scene run exit code " + std::to_string(code));
  v.require(run_cli("run --config " + config + " --out " + b.string()) == code, "rerun exit code");
  for (const char* f : {kReportJson, kReportCsv, kReportText, kCounterfactualsFile})
    v.require(fs::exists(a / f) && slurp(a / f) == slurp(b / f), std::string(f) + " differs between runs");
  if (fs::exists(a / kReportJson))
    for (const auto& line :
         testing::check_e2e(nlohmann::json::parse(slurp(a / kReportJson)), slurp(a / kCounterfactualsFile)))
      v.require(false, line);
  fs::remove_all(a);
  fs::remove_all(b);
}

void properties(Verdict& v) {
  for (const auto& r : testing::run_property_suites()) {
    v.require(r.cases >= 1000, r.name + ": only " + std::to_string(r.cases) + " cases");
    v.require(r.failures == 0, r.name + ": " + std::to_string(r.failures) + " failures, " + r.first_failure);
  }
}

}  // namespace

int main() {
  criterion("Metric oracles (validitySoft, cSoft, averagePrecision, spearman) to 1e-12", 1.0, metric_oracles);
  criterion("Infidelity is zero for the mock linear head, sigma in {0.001,0.01,0.1}, S in {1,50}", 5.0,
            infidelity_zero);
  criterion("Reference correlation fixture: spearman of Validity_soft and C_soft against Human Agreement", 0.0, correlation_fixture);
  criterion("Extraction conformance: 20-case golden suite", 0.0, extraction_golden);
  criterion("Generation determinism and locality on the 10-instance synthetic corpus", 10.0, generation);
  criterion("End-to-end mock run of 'scene run' matches the hand-computed oracle", 5.0, end_to_end);
  criterion("Property suites (>= 1000 generated cases each)", 0.0, properties);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

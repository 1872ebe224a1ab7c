#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "scene/http_server.hpp"
#include "scene/mock_backend.hpp"
#include "scene/pipeline.hpp"
#include "scene/report.hpp"

namespace {

enum Exit : int { kOk = 0, kConfig = 1, kBackend = 2, kPartial = 3 };

std::atomic<bool> g_stop{false};

int run_command(const std::string& config_path, std::optional<std::uint64_t> seed,
                const std::vector<std::string>& methods, const std::string& out_dir) {
  auto cfg = scene::load_config(config_path);
  if (seed) {
    cfg.seed = *seed;
    if (!cfg.noise_seed_set) cfg.noise.seed = *seed;
  }
  if (!methods.empty()) cfg.methods = methods;
  const auto run = scene::run_scene(cfg);
  scene::write_run_dir(out_dir, run);
  std::cout << scene::render_report(run.report, scene::ReportFormat::table_text);
  if (run.report.has_failures()) {
    std::cerr << "scene: some instances failed; see diagnostics in " << out_dir << "/" << scene::kReportJson << "\n";
    return kPartial;
  }
  return kOk;
}

int report_command(const std::string& dir, const std::string& format) {
  const auto fmt = scene::parse_report_format(format);
  std::cout << scene::render_report(scene::read_run_dir(dir), fmt);
  return kOk;
}

int mock_serve_command(const std::string& fixtures, const std::string& host, int port) {
  scene::MockBackend backend(scene::load_mock_fixtures(fixtures));
  scene::ProtocolServer server(backend);
  const int bound = server.start_background(host, port);
  if (bound < 0) {
    std::cerr << "scene: cannot bind " << host << ":" << port << "\n";
    return kBackend;
  }
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  std::cout << "listening on http://" << host << ":" << bound << std::endl;
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft counterfactual evaluation of attribution methods"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "scene-run";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> methods;
  auto* run = app.add_subcommand("run", "Evaluate every configured method and write a run directory");
  run->add_option("--config", config_path, "Run configuration (JSON)")->required();
  run->add_option("--seed", seed, "Override the run seed");
  run->add_option("--methods", methods, "Comma-separated subset of methods")->delimiter(',');
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();

  std::string run_dir, format = "table-text";
  auto* report = app.add_subcommand("report", "Render a finished run");
  report->add_option("run-dir", run_dir, "Directory written by 'scene run'")->required();
  report->add_option("--format", format, "table-text, csv or json")->capture_default_str();

  std::string fixtures, host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("mock-serve", "Serve the backend protocol from a fixture file");
  serve->add_option("--fixtures", fixtures, "Mock fixture file (JSON)")->required();
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port, "0 picks a free port")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    if (*run) return run_command(config_path, seed, methods, out_dir);
    if (*report) return report_command(run_dir, format);
    return mock_serve_command(fixtures, host, port);
  } catch (const scene::BackendError& e) {
    std::cerr << "scene: backend error: " << e.what() << "\n";
    return kBackend;
  } catch (const std::exception& e) {
    std::cerr << "scene: " << e.what() << "\n";
    return kConfig;
  }
}

// testbed: bring the plant up, or run attack scenarios and write datasets.

#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "scada/orchestrator/dataset.hpp"
#include "scada/orchestrator/hmi_api.hpp"

namespace orch = scada::orchestrator;
namespace fs = std::filesystem;

namespace {

orch::Coordinator* g_coordinator = nullptr;

void on_signal(int)
{
    if (g_coordinator) g_coordinator->stop();
}

void print_bundle(const orch::DatasetBundle& b)
{
    std::cout << b.code << "  alarm=" << (b.alarm_observed ? "YES" : "NO") << " expected="
              << (b.expected_alarm ? "YES" : "NO") << "  packets=" << b.packets << " alerts=" << b.alerts << "  "
              << (b.verdict() ? "PASS" : "FAIL");
    if (!b.error.empty()) std::cout << "  error: " << b.error;
    std::cout << "\n";
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"SCADA tank testbed"};
    app.require_subcommand(1);
    std::string config = orch::default_config_path().string();
    app.add_option("--config", config, "testbed.ini")->check(CLI::ExistingFile);

    auto* up = app.add_subcommand("up", "run the plant and serve the operator API");
    bool wall_clock = false;
    int port = -1;
    double duration = 0;
    std::string bind = "127.0.0.1";
    up->add_flag("--wall-clock", wall_clock, "pace the simulated clock to real time");
    up->add_option("--port", port, "HTTP port (default from config)");
    up->add_option("--bind", bind, "HTTP bind address");
    up->add_option("--duration", duration, "stop after this many simulated seconds (0 = run until interrupted)");

    auto* one = app.add_subcommand("run-scenario", "run one scenario and write its dataset pair");
    std::string code;
    std::string out;
    one->add_option("code", code)->required();
    one->add_option("--out", out, "dataset directory (default from config)");
    bool show_transcript = false;
    one->add_flag("--transcript", show_transcript, "print what the attacker sent and received");

    auto* all = app.add_subcommand("run-all", "run every scenario");
    all->add_option("--out", out, "dataset directory (default from config)");

    CLI11_PARSE(app, argc, argv);

    try {
        auto cfg = orch::load_config(config);
        fs::path out_dir = out.empty() ? cfg.output_dir : fs::path(out);

        if (*up) {
            if (!wall_clock && duration <= 0) {
                std::cerr << "without --wall-clock, give --duration\n";
                return 2;
            }
            orch::Topology topo(cfg);
            topo.start();
            orch::Coordinator coord(topo);
            g_coordinator = &coord;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::optional<scada::sim::Duration> limit;
            if (duration > 0) limit = std::chrono::microseconds(static_cast<std::int64_t>(duration * 1e6));
            std::unique_ptr<orch::HmiServer> http;
            if (wall_clock) {
                std::uint16_t p = port >= 0 ? static_cast<std::uint16_t>(port) : cfg.hmi_port;
                http = std::make_unique<orch::HmiServer>(coord, bind, p);
                std::cout << "operator API on http://" << bind << ":" << p << "/api/tags\n" << std::flush;
            }
            coord.run(wall_clock, limit);
            http.reset();
            g_coordinator = nullptr;
            std::cout << orch::tags_json(topo).dump(2) << "\n";
            return 0;
        }
        if (*one) {
            auto* sc = scada::attack::find_scenario(code);
            if (!sc) {
                std::cerr << "unknown scenario '" << code << "'\n";
                return 2;
            }
            auto b = orch::run_scenario(cfg, *sc, out_dir);
            if (show_transcript) std::cout << b.transcript;
            print_bundle(b);
            return b.verdict() ? 0 : 1;
        }
        int failed = 0;
        for (auto& sc : scada::attack::scenario_catalog()) {
            auto b = orch::run_scenario(cfg, sc, out_dir);
            print_bundle(b);
            failed += !b.verdict();
        }
        return failed == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "testbed: " << e.what() << "\n";
        return 1;
    }
}

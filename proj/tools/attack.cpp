// attack: the attacker's tool kit against a fresh in-process plant.

#include <iostream>

#include <CLI11.hpp>

#include "scada/orchestrator/dataset.hpp"

namespace orch = scada::orchestrator;
namespace fs = std::filesystem;
namespace atk = scada::attack;

namespace {

void print_modpoll(const atk::ModpollArgs& a, const atk::ModpollResult& r)
{
    if (!r.connected) {
        std::cout << "Connection failed: " << r.error << "\n";
        return;
    }
    for (auto& tx : r.transactions) {
        std::cout << "[" << tx.at.count() / 1000 << " ms] ";
        switch (tx.status) {
        case scada::modbus::Exchange::Status::ok:
            if (a.writing()) {
                std::cout << "Written " << a.values.size() << " reference(s).\n";
            } else {
                std::cout << "\n";
                for (std::size_t i = 0; i < tx.values.size(); ++i) {
                    long ref = a.reference + long(i);
                    long v = a.bit_type() ? long(tx.values[i]) : long(scada::as_signed(tx.values[i]));
                    std::cout << "[" << ref << "]: " << v << "\n";
                }
            }
            break;
        case scada::modbus::Exchange::Status::exception:
            std::cout << "Exception response 0x" << std::hex << int(tx.exception_code) << std::dec << "\n";
            break;
        case scada::modbus::Exchange::Status::timeout: std::cout << "Reply time-out!\n"; break;
        case scada::modbus::Exchange::Status::closed: std::cout << "Connection closed by peer.\n"; break;
        }
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"attacker tool kit"};
    app.require_subcommand(1);
    std::string config = orch::default_config_path().string();
    app.add_option("--config", config, "testbed.ini")->check(CLI::ExistingFile);

    auto* list = app.add_subcommand("list", "list the scenario catalog");

    auto* run = app.add_subcommand("run", "run one scenario and print the attacker transcript");
    std::string code, out;
    run->add_option("code", code)->required();
    run->add_option("--out", out, "dataset directory (default from config)");

    auto* mp = app.add_subcommand("modpoll", "modpoll against the plant, e.g. modpoll -0 -r 32210 10.0.0.5 -- 200");
    mp->prefix_command();
    double seconds = 5;
    mp->add_option("--for", seconds, "simulated seconds to keep polling");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*list) {
            for (auto& s : atk::scenario_catalog())
                std::cout << s.code << "  " << atk::category_name(s.category) << "  ALARM "
                          << (s.expected_alarm ? "YES" : "NO") << "\n    " << s.purpose << "\n    " << s.command << "\n";
            return 0;
        }
        auto cfg = orch::load_config(config);
        if (*run) {
            auto* sc = atk::find_scenario(code);
            if (!sc) {
                std::cerr << "unknown scenario '" << code << "'\n";
                return 2;
            }
            auto b = orch::run_scenario(cfg, *sc, out.empty() ? cfg.output_dir : fs::path(out));
            std::cout << b.transcript;
            std::cout << b.code << " alarm=" << (b.alarm_observed ? "YES" : "NO") << "\n";
            return 0;
        }

        auto args = atk::parse_modpoll(mp->remaining());
        orch::Topology topo(cfg);
        topo.start();
        auto& sched = topo.sched();
        sched.run_for(std::chrono::seconds(1));
        auto until = sched.now() + std::chrono::microseconds(static_cast<std::int64_t>(seconds * 1e6));
        std::optional<atk::ModpollResult> result;
        auto body = [&]() -> scada::sim::Task<void> { result = co_await atk::run_modpoll(topo.attacker(), args, until); };
        scada::sim::spawn(body());
        sched.run_until(until);
        if (result) print_modpoll(args, *result);
        std::cout << "levels: " << topo.tank().level1() << " / " << topo.tank().level2()
                  << "  alarm: " << (topo.alarm() ? "on" : "off") << "\n";
        return 0;
    } catch (const atk::ModpollError& e) {
        std::cerr << "modpoll: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "attack: " << e.what() << "\n";
        return 1;
    }
}

#pragma once

// One scenario, one fresh plant: capture everything crossing the gateway,
// log every alert, and judge the alarm outcome against the expectation.

#include <fstream>
#include <string>

#include "scada/attack/scenarios.hpp"
#include "scada/orchestrator/testbed.hpp"

namespace scada::orchestrator {

struct RunOptions {
    sim::Duration warmup = 1s;
    std::size_t flood_workers = 128;
    std::size_t crc_flood_count = 10000;
};

struct DatasetBundle {
    std::string code;
    fs::path capture;
    fs::path alert_log;
    std::vector<AlarmSample> alarm_trace; // samples inside the attack window
    bool alarm_before = false;
    bool alarm_observed = false; // the alarm came on during the attack
    bool expected_alarm = false;
    std::size_t packets = 0;
    std::size_t alerts = 0;
    sim::Time attack_start{0}, attack_end{0};
    std::string error;
    std::string transcript;

    bool verdict() const { return error.empty() && alarm_observed == expected_alarm; }
};

inline std::string capture_name(std::string_view code) { return std::string(code) + "_TDP.out"; }
inline std::string alert_log_name(std::string_view code) { return std::string(code) + "_SNT.log"; }

/// Rising edge of the alarm inside the window, given its state just before.
inline bool alarm_raised(bool before, const std::vector<AlarmSample>& window)
{
    bool prev = before;
    for (auto& s : window) {
        if (s.alarm && !prev) return true;
        prev = s.alarm;
    }
    return false;
}

inline DatasetBundle run_scenario(const TestbedConfig& cfg, const attack::Scenario& sc, const fs::path& out_dir,
                                  const RunOptions& opt = {})
{
    fs::create_directories(out_dir);
    DatasetBundle b;
    b.code = sc.code;
    b.expected_alarm = sc.expected_alarm;
    b.capture = out_dir / capture_name(sc.code);
    b.alert_log = out_dir / alert_log_name(sc.code);

    Topology topo(cfg);
    net::PcapWriter pcap(b.capture.string());
    for (auto& [ip, mac] : topo.macs()) pcap.set_mac(ip, mac);
    std::ofstream alerts(b.alert_log, std::ios::trunc);
    if (!alerts) throw std::runtime_error("cannot open " + b.alert_log.string());

    topo.gateway().on_capture = [&](const net::PacketRecord& p) { pcap.write(p); };
    topo.gateway().on_alert = [&](const ids::AlertEvent& e) {
        alerts << ids::format_alert(e) << '\n';
        ++b.alerts;
    };

    if (sc.preset) topo.preset_levels(sc.preset->first, sc.preset->second);
    topo.start();
    auto& sched = topo.sched();
    sched.run_until(sched.now() + opt.warmup);

    b.attack_start = sched.now();
    b.alarm_before = topo.alarm();
    std::size_t first_sample = topo.alarm_trace().size();

    attack::ScenarioContext ctx{topo.attacker(), cfg.target, cfg.inside, 502, b.attack_start + sc.window, {},
                                opt.flood_workers, opt.crc_flood_count};
    const Tag* speed = topo.tags().find("PumpSpeed");
    ctx.operator_speed = [&topo, speed](std::int16_t v) {
        if (speed) topo.operator_write(*speed, v);
    };

    bool finished = false;
    std::exception_ptr failure;
    auto body = [&]() -> sim::Task<void> {
        try {
            co_await sc.run(ctx);
        } catch (...) {
            failure = std::current_exception();
        }
        finished = true;
    };
    sim::spawn(body());
    while (!finished) {
        auto next = sched.next_event();
        if (!next || *next > ctx.deadline) break;
        sched.run_one();
    }
    if (!finished) sched.run_until(ctx.deadline);
    b.attack_end = sched.now();
    if (failure) {
        try {
            std::rethrow_exception(failure);
        } catch (const std::exception& e) {
            b.error = e.what();
        }
    }

    auto& trace = topo.alarm_trace();
    b.alarm_trace.assign(trace.begin() + std::ptrdiff_t(first_sample), trace.end());
    b.alarm_observed = alarm_raised(b.alarm_before, b.alarm_trace);
    b.transcript = topo.attacker().transcript().render();

    topo.gateway().on_capture = nullptr;
    topo.gateway().on_alert = nullptr;
    pcap.close();
    b.packets = pcap.count();
    alerts.flush();
    return b;
}

} // namespace scada::orchestrator

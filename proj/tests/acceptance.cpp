// End-to-end acceptance run. One PASS/FAIL line per criterion; details for
// failures are indented underneath. Exit status is non-zero on any failure.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "support/oracles.hpp"
#include "support/packets.hpp"
#include "scada/attack/scans.hpp"
#include "scada/honeypot/fingerprint.hpp"
#include "scada/honeypot/honeyd_config.hpp"
#include "scada/honeypot/responder.hpp"
#include "scada/ids/engine.hpp"
#include "scada/logic_engine.hpp"
#include "scada/modbus/codec.hpp"
#include "scada/net/pcap.hpp"
#include "scada/orchestrator/dataset.hpp"
#include "scada/tank_process.hpp"

using namespace scada;
using namespace std::chrono_literals;
namespace orch = scada::orchestrator;
namespace fs = std::filesystem;

namespace {

struct Check {
    std::vector<std::string> problems;

    void expect(bool ok, const std::string& what)
    {
        if (!ok) problems.push_back(what);
    }
    bool passed() const { return problems.empty(); }
};

struct Run {
    orch::DatasetBundle bundle;
    double wall_seconds = 0;
};

struct Context {
    orch::TestbedConfig cfg;
    fs::path out;
    std::map<std::string, Run> first;  // filled by criterion 1
    std::map<std::string, Run> second; // filled by criterion 8
};

std::map<std::string, Run> run_all(Context& ctx, const fs::path& dir)
{
    std::map<std::string, Run> runs;
    for (auto& sc : attack::scenario_catalog()) {
        auto t0 = std::chrono::steady_clock::now();
        Run r;
        r.bundle = orch::run_scenario(ctx.cfg, sc, dir);
        r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        runs[sc.code] = std::move(r);
    }
    return runs;
}

// ---- 1: alarm column ----

Check check_alarm_column(Context& ctx)
{
    Check c;
    ctx.first = run_all(ctx, ctx.out / "run1");
    for (auto& sc : attack::scenario_catalog()) {
        auto& r = ctx.first.at(sc.code);
        auto& b = r.bundle;
        std::ostringstream line;
        line << sc.code << " alarm=" << (b.alarm_observed ? "YES" : "NO") << " expected="
             << (sc.expected_alarm ? "YES" : "NO") << " wall=" << r.wall_seconds << "s";
        std::cout << "    " << line.str() << "\n";
        c.expect(b.error.empty(), sc.code + " failed: " + b.error);
        c.expect(b.alarm_observed == sc.expected_alarm, sc.code + " alarm column mismatch");
        c.expect(r.wall_seconds <= 30.0, sc.code + " took longer than 30 s");
    }
    return c;
}

// ---- 2: signature coverage ----

std::string rules_text(const Context& ctx) { return orch::read_file(ctx.cfg.rules); }

std::set<std::uint32_t> fired(ids::Engine& e, const net::PacketRecord& p)
{
    std::set<std::uint32_t> s;
    for (auto& ev : e.inspect(p).events) s.insert(ev.sid);
    return s;
}

Check check_rule_coverage(Context& ctx)
{
    using namespace testpk;
    Check c;
    auto text = rules_text(ctx);

    struct Case {
        std::uint32_t sid;
        std::vector<net::PacketRecord> packets; // all but the last must stay silent
        std::set<std::uint32_t> expect;         // sids on the last packet
    };
    auto repeat = [](const net::PacketRecord& p, int n) {
        std::vector<net::PacketRecord> v;
        for (int i = 0; i < n; ++i) {
            auto q = p;
            q.ts = std::chrono::seconds(i);
            v.push_back(q);
        }
        return v;
    };
    Bytes big = from_hex("00 01 00 00 01 30 01 10");
    big.resize(310, 0x00);
    auto http = segment(master_ep, slave_ep, Bytes{'G', 'E', 'T', ' ', '/', ' ', 'H', 'T', 'T', 'P', '/', '1', '.', '0',
                                                   '\r', '\n', '\r', '\n'},
                        true);

    std::vector<Case> cases{
        {1111001, {to_slave("00 01 00 00 00 06 01 08 00 04 00 00")}, {1111001}},
        {1111002, {to_slave("00 01 00 00 00 06 01 08 00 01 00 00")}, {1111002}},
        {1111003, {to_slave("00 01 00 00 00 06 01 08 00 0A 00 00")}, {1111003}},
        {1111004, {to_slave("00 01 00 00 00 05 01 2B 0E 01 00")}, {1111004}},
        {1111005, {to_slave("00 01 00 00 00 02 01 11")}, {1111005}},
        {1111006, {to_slave("00 01 00 00 00 06 01 03 A4 E2 00 01", stranger_ep)}, {1111006}},
        {1111007, {to_slave("00 01 00 00 00 06 01 06 7D D2 00 C8", stranger_ep)}, {1111007}},
        {1111008, {segment(master_ep, slave_ep, big, true)}, {1111008}},
        {1111009, {http}, {1111009}},
        {1111010, repeat(from_slave("00 01 00 00 00 03 01 83 06"), 3), {1111010}},
        {1111011, repeat(from_slave("00 01 00 00 00 03 01 83 05"), 3), {1111011}},
        {1111012, {to_slave("00 01 00 00 00 08 01 10 7D D2 00 01 02 FF FB")}, {1111012}},
        {1111013, repeat(from_slave("00 01 00 00 00 03 01 81 02"), 5), {1111013}},
        {1111014, repeat(from_slave("00 01 00 00 00 03 01 81 01"), 3), {1111014}},
        // an RTU frame tunnelled over TCP is both non-Modbus and mis-sized
        {1111009, {to_slave("01 04 7D D2 00 01 C8 4B")}, {1111009, 1111012}},
    };
    std::set<std::uint32_t> covered;
    for (auto& k : cases) {
        auto eng = ids::Engine::from_text(text);
        for (std::size_t i = 0; i + 1 < k.packets.size(); ++i) {
            auto early = fired(eng, k.packets[i]);
            c.expect(early.empty(), "sid " + std::to_string(k.sid) + " fired before its threshold");
        }
        auto got = fired(eng, k.packets.back());
        if (got != k.expect) {
            std::string s;
            for (auto x : got) s += " " + std::to_string(x);
            c.expect(false, "sid " + std::to_string(k.sid) + " case fired {" + s + " }");
        }
        covered.insert(got.begin(), got.end());
    }
    c.expect(covered.size() == 14, "only " + std::to_string(covered.size()) + " of 14 signatures exercised");

    // authorised master traffic is silent
    auto eng = ids::Engine::from_text(text);
    for (auto* hex : {"00 01 00 00 00 06 01 03 A4 E2 00 02", "00 02 00 00 00 09 01 10 7D D2 00 01 02 00 05"})
        c.expect(fired(eng, to_slave(hex)).empty(), std::string("benign request fired: ") + hex);
    for (auto* hex : {"00 01 00 00 00 07 01 03 04 00 32 00 32", "00 02 00 00 00 06 01 10 7D D2 00 01"})
        c.expect(fired(eng, from_slave(hex)).empty(), std::string("benign response fired: ") + hex);

    auto ones = fired(eng, to_slave("00 01 00 00 00 09 11 11 11 11 11 11 11 11 11", ep("192.168.100.11", 41000)));
    auto zeros = fired(eng, to_slave("00 01 00 00 00 09 00 00 00 00 00 00 00 00 00", ep("192.168.100.11", 41000)));
    c.expect(!ones.empty(), "all-0x11 payload raised nothing");
    c.expect(zeros.empty(), "all-0x00 payload raised an alert");
    return c;
}

// ---- 3: threshold window ----

Check check_threshold_window(Context& ctx)
{
    Check c;
    auto text = rules_text(ctx);
    auto busy_at = [&](const std::vector<long long>& times) {
        auto eng = ids::Engine::from_text(text);
        std::vector<bool> out;
        for (auto t : times)
            out.push_back(fired(eng, testpk::from_slave("00 01 00 00 00 03 01 83 06", testpk::master_ep, t)).count(1111010));
        return out;
    };
    const long long s = 1'000'000;
    c.expect(busy_at({0, 20 * s, 59 * s}).back(), "third busy reply within 60 s did not fire");
    auto two = busy_at({0, 20 * s});
    c.expect(!two[0] && !two[1], "two busy replies fired");
    auto spread = busy_at({0, 30 * s + s / 2, 61 * s});
    c.expect(!spread[0] && !spread[1] && !spread[2], "three busy replies over 61 s fired");

    std::mt19937_64 rng(2024);
    int mismatches = 0;
    for (int run = 0; run < 1000; ++run) {
        std::vector<long long> times;
        long long t = 0;
        int n = std::uniform_int_distribution<int>(1, 25)(rng);
        for (int i = 0; i < n; ++i) {
            t += std::uniform_int_distribution<long long>(0, 45 * s)(rng);
            times.push_back(t);
        }
        if (busy_at(times) != oracle::threshold_fires(times, 3, 60 * s)) ++mismatches;
    }
    c.expect(mismatches == 0, std::to_string(mismatches) + " of 1000 random streams disagree with the reference");
    return c;
}

// ---- 4: codec ----

Check check_codec(Context&)
{
    Check c;
    std::mt19937_64 rng(404);
    auto byte = [&] { return static_cast<std::uint8_t>(rng()); };
    int bad_round = 0, bad_crc = 0;
    for (int i = 0; i < 10000; ++i) {
        modbus::Pdu pdu{static_cast<std::uint8_t>(std::uniform_int_distribution<int>(1, 0x7F)(rng)), {}};
        pdu.payload.resize(std::uniform_int_distribution<std::size_t>(0, modbus::kMaxPayload)(rng));
        for (auto& b : pdu.payload) b = byte();
        auto adu = modbus::make_adu(static_cast<std::uint16_t>(rng()), byte(), pdu);
        auto wire = modbus::encode_adu(adu);
        auto back = modbus::decode_adu(wire);
        bool same = back.ok() && back.adu && back.adu->header.transaction_id == adu.header.transaction_id
                    && back.adu->header.unit_id == adu.header.unit_id && back.adu->pdu.function_code == pdu.function_code
                    && back.adu->pdu.payload == pdu.payload && modbus::encode_adu(*back.adu) == wire;
        bad_round += !same;

        Bytes msg(std::uniform_int_distribution<std::size_t>(1, 256)(rng));
        for (auto& b : msg) b = byte();
        auto crc = modbus::crc16_modbus(msg);
        Bytes framed = msg;
        put_le16(framed, crc);
        bad_crc += crc != oracle::crc16_modbus(msg) || modbus::crc16_modbus(framed) != 0;
    }
    c.expect(bad_round == 0, std::to_string(bad_round) + " ADU round trips differ");
    c.expect(bad_crc == 0, std::to_string(bad_crc) + " CRC checks failed");

    const std::pair<const char*, int> frames[] = {
        {"00 01 00 00 00 08 01 10 7D D2 00 01 02 FF FB", 0x08}, {"00 01 00 00 00 10 01 10 7D D2 00 01 02 FF FB", 0x10},
        {"00 01 00 00 00 00 01 10 7D D2 00 01 02 FF FB", 0x00}, {"00 01 00 00 00 FF 01 10 7D D2 00 01 02 FF FB", 0xFF},
        {"00 01 00 00 00 74 01 10 7D D2 00 01 02 FF FB", 0x74}};
    for (auto& [hex, declared] : frames) {
        auto d = modbus::decode_adu(from_hex(hex));
        c.expect(d.status == modbus::DecodeStatus::length_mismatch && d.declared_length == declared,
                 std::string("frame not a length mismatch: ") + hex);
    }
    return c;
}

// ---- 5: physics ----

Check check_physics(Context& ctx)
{
    Check c;
    std::mt19937_64 rng(55);
    DataTable table;
    auto s = process::TankState::at(std::uniform_int_distribution<int>(0, 100)(rng), 0);
    s.level2_milli = std::uniform_int_distribution<std::int64_t>(0, process::kCapacity)(rng);
    const auto total = s.level1_milli + s.level2_milli;
    for (int i = 0; i < 1000; ++i) {
        table.set_holding(process::reg::pump_speed,
                          as_unsigned(static_cast<std::int16_t>(std::uniform_int_distribution<int>(-9, 9)(rng))));
        s = process::step(s, 100ms, table);
        if (s.level1_milli + s.level2_milli != total) {
            c.expect(false, "water not conserved at step " + std::to_string(i));
            break;
        }
        if (s.level1_milli < 0 || s.level2_milli < 0 || s.level1_milli > process::kCapacity
            || s.level2_milli > process::kCapacity) {
            c.expect(false, "level left 0..100 at step " + std::to_string(i));
            break;
        }
    }

    DataTable t2;
    t2.set_holding(process::reg::pump_speed, 200);
    auto f = process::TankState::at(50, 50);
    sim::Duration elapsed{0};
    while (elapsed < 1s && process::classify_level(f.level2()) != process::Band::HH) {
        f = process::step(f, 100ms, t2);
        elapsed += 100ms;
    }
    c.expect(process::classify_level(f.level2()) == process::Band::HH
                 && process::classify_level(f.level1()) == process::Band::LL,
             "speed 200 did not reach HH/LL within 1 s");

    // the same through the plant: the alarm follows the write within a second
    auto it = ctx.first.find("CI-03");
    if (it == ctx.first.end()) {
        c.expect(false, "CI-03 run missing");
        return c;
    }
    auto& b = it->second.bundle;
    std::optional<sim::Time> first_alarm;
    for (auto& smp : b.alarm_trace)
        if (smp.alarm) {
            first_alarm = smp.at;
            break;
        }
    c.expect(first_alarm && *first_alarm - b.attack_start <= 1s, "plant alarm later than 1 s after the CI-03 write");
    return c;
}

// ---- 6: logic ----

Check check_logic_engine(Context& ctx)
{
    namespace lad = oracle::ladder;
    Check c;
    int mismatched = 0;
    for (std::uint64_t seed = 1000; seed < 1100; ++seed) {
        lad::Generator gen(seed);
        auto prog = gen.program();
        auto parsed = logic::parse_program(lad::render(prog));
        std::mt19937_64 rng(seed);
        lad::Memory mem;
        LogicTable table;
        for (auto& r : lad::reg_names()) {
            int v = std::uniform_int_distribution<int>(-3, 3)(rng);
            mem.regs[r] = v;
            table.set_reg(r, static_cast<std::int16_t>(v));
        }
        for (auto& b : lad::bit_names()) {
            bool v = rng() & 1;
            mem.bits[b] = v;
            table.set_bit(b, v);
        }
        lad::Evaluator ev(prog, mem);
        for (int k = 0; k < 4; ++k) {
            ev.scan();
            logic::scan_cycle(parsed, table);
        }
        bool same = true;
        for (auto& r : lad::reg_names()) same &= table.reg(r) == mem.reg(r);
        for (auto& b : lad::bit_names()) same &= table.bit(b) == mem.bit(b);
        mismatched += !same;
    }
    c.expect(mismatched == 0, std::to_string(mismatched) + " of 100 generated programs disagree with the reference");

    auto program = logic::parse_program(orch::read_file(ctx.cfg.program));
    auto map = parse_address_map(orch::read_file(ctx.cfg.logic_map));
    for (int level = 0; level <= 100; ++level) {
        DataTable sys;
        LogicTable lt;
        sys.set_holding(42210, static_cast<std::uint16_t>(level));
        sys.set_holding(42211, static_cast<std::uint16_t>(100 - level));
        transfer(map, sys, lt);
        logic::scan_cycle(program, lt);
        transfer(map, sys, lt);
        logic::scan_cycle(program, lt);
        transfer(map, sys, lt);
        bool ok = sys.coil(30) == (level >= 95) && sys.coil(32) == (level >= 80) && sys.coil(31) == (100 - level >= 95)
                  && sys.coil(33) == (100 - level >= 80);
        c.expect(ok, "alarm coils wrong at level " + std::to_string(level));
    }
    return c;
}

// ---- 7: honeypot ----

Check check_honeypot(Context& ctx)
{
    using namespace honeypot;
    Check c;
    if (!ctx.cfg.honeypot) {
        c.expect(false, "configuration has no honeypot section");
        return c;
    }
    auto cfg = parse_honeyd_config(orch::read_file(ctx.cfg.honeypot->config));
    auto db = parse_fingerprints(orch::read_file(ctx.cfg.honeypot->osdb));
    auto* node = cfg.node_for(ctx.cfg.target);
    if (!node) {
        c.expect(false, "no honeypot bound to the target address");
        return c;
    }
    auto* pers = find_personality(db, node->personality);
    c.expect(pers != nullptr, "personality '" + node->personality + "' not in the database");
    Responder r(*node, pers ? std::optional<Personality>(*pers) : std::nullopt, ctx.cfg.seed);

    std::set<std::uint16_t> tcp, udp;
    for (std::uint32_t port = 0; port <= 65535; ++port) {
        auto p16 = static_cast<std::uint16_t>(port);
        if (r.respond({net::Transport::tcp, p16, net::tcp::SYN}).kind != ProbeResponse::Kind::none) tcp.insert(p16);
        if (r.respond({net::Transport::udp, p16}).kind != ProbeResponse::Kind::none) udp.insert(p16);
    }
    c.expect(tcp == std::set<std::uint16_t>{21, 23, 80, 111, 502, 47808}, "TCP answering set differs");
    c.expect(udp == std::set<std::uint16_t>{161, 17185}, "UDP answering set differs");

    auto check_synack = [&](std::uint16_t window, const Bytes& options, const std::string& where) {
        c.expect(window == 0x2000, where + ": SYN-ACK window " + std::to_string(window));
        auto opts = parse_tcp_options(options);
        bool ok = opts.size() == 3 && opts[0].kind == TcpOption::Kind::mss && opts[0].value == 0x200
                  && opts[1].kind == TcpOption::Kind::nop && opts[2].kind == TcpOption::Kind::wscale && opts[2].value == 0;
        c.expect(ok, where + ": SYN-ACK options " + to_hex(options));
    };
    auto sa = r.respond({net::Transport::tcp, 502, net::tcp::SYN});
    check_synack(sa.window, sa.options, "responder");

    // the same node on the simulated wire, scanned from the attacker
    {
        orch::Topology topo(ctx.cfg);
        auto& a = topo.attacker();
        std::optional<attack::PortMap> tcp_map, udp_map;
        std::optional<net::PacketRecord> synack;
        auto body = [&]() -> sim::Task<void> {
            auto t = co_await attack::syn_scan(a, ctx.cfg.target, attack::port_range(0, 65535));
            tcp_map = std::move(t);
            auto u = co_await attack::udp_scan(a, ctx.cfg.target, attack::port_range(0, 65535));
            udp_map = std::move(u);
            auto p = co_await a.net().probe(attack::tcp_probe_packet(a, ctx.cfg.target, 502, net::tcp::SYN), 1s);
            synack = std::move(p);
        };
        sim::spawn(body());
        auto& sched = topo.sched();
        while (!synack && sched.run_one()) {}
        if (!tcp_map || !udp_map || !synack) {
            c.expect(false, "network scan did not finish");
        } else {
            std::set<std::uint16_t> open_tcp, open_udp;
            for (auto& [port, st] : *tcp_map)
                if (st == attack::PortState::open) open_tcp.insert(port);
            for (auto& [port, st] : *udp_map)
                if (st == attack::PortState::open) open_udp.insert(port);
            c.expect(open_tcp == std::set<std::uint16_t>{21, 23, 80, 111, 502, 47808}, "scanned TCP open set differs");
            c.expect(open_udp == std::set<std::uint16_t>{161, 17185}, "scanned UDP open set differs");
            check_synack(synack->window, synack->tcp_options, "wire");
        }
    }

    auto lossy = *node;
    lossy.droprate_in = 25;
    Responder d(lossy, std::nullopt, 77);
    const int n = 10000;
    int dropped = 0;
    for (int i = 0; i < n; ++i) dropped += d.respond({net::Transport::tcp, 502, net::tcp::SYN}).dropped;
    double mean = n * 0.25, sd = std::sqrt(n * 0.25 * 0.75);
    c.expect(std::abs(dropped - mean) <= 3 * sd, "drop count " + std::to_string(dropped) + " outside 3 sigma");

    auto high = parse_honeyd_config("create top\nadd top tcp port 65535 open\nbind 10.0.0.9 top\n");
    Responder hr(high.profiles.at("top"), std::nullopt);
    c.expect(hr.respond({net::Transport::tcp, 65535, net::tcp::SYN}).kind == ProbeResponse::Kind::synack,
             "port 65535 not answering");
    return c;
}

// ---- 8: datasets ----

Check check_datasets(Context& ctx)
{
    Check c;
    ctx.second = run_all(ctx, ctx.out / "run2");
    static const std::regex alert_line(
        R"(^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}\.\d{6}Z \[sid:\d+:\d+\] [^{}]+ \{(TCP|UDP|ICMP)\} [\d.]+:\d+ -> [\d.]+:\d+$)");
    for (auto& sc : attack::scenario_catalog()) {
        auto& a = ctx.first.at(sc.code).bundle;
        auto& b = ctx.second.at(sc.code).bundle;
        c.expect(a.capture.filename() == sc.code + "_TDP.out", sc.code + ": capture name");
        c.expect(a.alert_log.filename() == sc.code + "_SNT.log", sc.code + ": alert log name");
        try {
            auto pc = net::read_pcap(a.capture.string());
            c.expect(pc.magic == net::kPcapMagic && pc.linktype == net::kLinktypeEthernet,
                     sc.code + ": capture header");
            c.expect(pc.records.size() == a.packets, sc.code + ": capture record count");
        } catch (const std::exception& e) {
            c.expect(false, sc.code + ": capture unreadable: " + e.what());
        }
        auto log = orch::read_file(a.alert_log);
        std::istringstream in(log);
        std::size_t lines = 0;
        for (std::string line; std::getline(in, line); ++lines)
            if (!std::regex_match(line, alert_line)) {
                c.expect(false, sc.code + ": malformed alert line: " + line);
                break;
            }
        c.expect(lines == a.alerts, sc.code + ": alert line count");
        c.expect(orch::read_file(a.capture) == orch::read_file(b.capture), sc.code + ": captures differ between replays");
        c.expect(log == orch::read_file(b.alert_log), sc.code + ": alert logs differ between replays");
    }
    return c;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"acceptance run"};
    std::string config = orch::default_config_path().string();
    std::string out = "acceptance-out";
    std::vector<int> only;
    app.add_option("--config", config, "testbed configuration");
    app.add_option("--out", out, "directory for the emitted datasets");
    app.add_option("--only", only, "criteria to run (default: all)");
    CLI11_PARSE(app, argc, argv);

    Context ctx;
    ctx.cfg = orch::load_config(config);
    ctx.out = out;
    fs::remove_all(ctx.out);
    fs::create_directories(ctx.out);

    const std::vector<std::pair<std::string, std::function<Check(Context&)>>> criteria{
        {"alarm column across all 15 scenarios", check_alarm_column},
        {"signature coverage", check_rule_coverage},
        {"threshold window", check_threshold_window},
        {"codec round trips and CRC", check_codec},
        {"process physics", check_physics},
        {"logic engine equivalence", check_logic_engine},
        {"honeypot fidelity", check_honeypot},
        {"dataset emission and replay", check_datasets},
    };

    std::set<int> wanted(only.begin(), only.end());
    // physics and datasets reuse the first scenario pass
    if (!wanted.empty() && (wanted.count(5) || wanted.count(8))) wanted.insert(1);

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        int id = static_cast<int>(i + 1);
        if (!wanted.empty() && !wanted.count(id)) continue;
        auto t0 = std::chrono::steady_clock::now();
        Check result;
        try {
            result = criteria[i].second(ctx);
        } catch (const std::exception& e) {
            result.expect(false, std::string("exception: ") + e.what());
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (result.passed() ? "PASS" : "FAIL") << "  criterion " << id << ": " << criteria[i].first << " ("
                  << std::fixed << std::setprecision(1) << secs << " s)" << std::defaultfloat << std::endl;
        for (auto& p : result.problems) std::cout << "    - " << p << "\n";
        failures += !result.passed();
    }
    return failures == 0 ? 0 : 1;
}

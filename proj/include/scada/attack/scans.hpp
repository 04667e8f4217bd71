#pragma once

// Reconnaissance tools: host discovery, TCP/UDP port scans, stack probes,
// banner grabs, and Modbus function/unit/memory enumeration.

#include <map>
#include <optional>
#include <vector>

#include "scada/attack/attacker.hpp"
#include "scada/data_table.hpp"
#include "scada/modbus/client.hpp"
#include "scada/sim/gather.hpp"

namespace scada::attack {

/// The 100 most common TCP ports, as a fast scan probes them.
inline const std::vector<std::uint16_t>& top100_tcp_ports()
{
    static const std::vector<std::uint16_t> ports{
        7,    9,    13,   21,   22,    23,    25,    26,    37,    53,    79,    80,    81,   88,   106,  110,  111,
        113,  119,  135,  139,  143,   144,   179,   199,   389,   427,   443,   444,   445,  465,  513,  514,  515,
        543,  544,  548,  554,  587,   631,   646,   873,   990,   993,   995,   1025,  1026, 1027, 1028, 1029, 1110,
        1433, 1720, 1723, 1755, 1900,  2000,  2001,  2049,  2121,  2717,  3000,  3128,  3306, 3389, 3986, 4899, 5000,
        5009, 5051, 5060, 5101, 5190,  5357,  5432,  5631,  5666,  5800,  5900,  6000,  6001, 6646, 7070, 8000, 8008,
        8009, 8080, 8081, 8443, 8888,  9100,  9999,  10000, 32768, 49152, 49153, 49154, 49155, 49156, 49157};
    return ports;
}

enum class PortState { open, closed, filtered, open_filtered };

inline const char* port_state_name(PortState s)
{
    switch (s) {
    case PortState::open: return "open";
    case PortState::closed: return "closed";
    case PortState::filtered: return "filtered";
    case PortState::open_filtered: return "open|filtered";
    }
    return "?";
}

using PortMap = std::map<std::uint16_t, PortState>;

inline std::vector<std::uint16_t> port_range(std::uint16_t first, std::uint16_t last)
{
    std::vector<std::uint16_t> out;
    for (std::uint32_t p = first; p <= last; ++p) out.push_back(static_cast<std::uint16_t>(p));
    return out;
}

// raw probes

inline sim::Task<std::optional<net::PacketRecord>> raw_probe(Attacker& a, net::PacketRecord p, std::string tool)
{
    a.log(tool, TranscriptEntry::Kind::request, p.src, p.dst, p.payload,
          p.transport == net::Transport::tcp ? "tcp flags " + std::to_string(p.flags) : net::transport_name(p.transport));
    auto r = co_await a.net().probe(p, a.settings().probe_timeout);
    if (r) a.log(tool, TranscriptEntry::Kind::response, p.src, p.dst, r->payload);
    else a.log(tool, TranscriptEntry::Kind::timeout, p.src, p.dst);
    co_return r;
}

inline net::PacketRecord tcp_probe_packet(Attacker& a, net::Ipv4 ip, std::uint16_t port, std::uint8_t flags)
{
    auto p = a.net().base({a.ip(), a.net().ephemeral_port(a.ip())}, {ip, port}, net::Transport::tcp);
    p.flags = flags;
    p.seq = static_cast<std::uint32_t>(a.rng()());
    p.window = 1024;
    p.tcp_options = {0x02, 0x04, 0x05, 0xB4};
    p.df = false;
    return p;
}

inline sim::Task<PortState> syn_probe(Attacker& a, net::Ipv4 ip, std::uint16_t port)
{
    auto r = co_await raw_probe(a, tcp_probe_packet(a, ip, port, net::tcp::SYN), "portscan");
    if (!r) co_return PortState::filtered;
    if (r->transport == net::Transport::icmp) co_return PortState::filtered;
    if ((r->flags & (net::tcp::SYN | net::tcp::ACK)) == (net::tcp::SYN | net::tcp::ACK)) co_return PortState::open;
    if (r->flags & net::tcp::RST) co_return PortState::closed;
    co_return PortState::filtered;
}

inline sim::Task<PortMap> syn_scan(Attacker& a, net::Ipv4 ip, std::vector<std::uint16_t> ports)
{
    std::vector<sim::Task<PortState>> jobs;
    for (auto p : ports) jobs.push_back(syn_probe(a, ip, p));
    auto states = co_await sim::gather(a.sched(), std::move(jobs), a.settings().scan_parallelism);
    PortMap out;
    for (std::size_t i = 0; i < ports.size(); ++i) out[ports[i]] = states[i];
    co_return out;
}

inline sim::Task<PortState> udp_probe(Attacker& a, net::Ipv4 ip, std::uint16_t port, Bytes payload = {})
{
    auto p = a.net().base({a.ip(), a.net().ephemeral_port(a.ip())}, {ip, port}, net::Transport::udp);
    p.payload = std::move(payload);
    auto r = co_await raw_probe(a, std::move(p), "udpscan");
    if (!r) co_return PortState::open_filtered;
    if (r->transport == net::Transport::udp) co_return PortState::open;
    if (r->transport == net::Transport::icmp && r->icmp_type == net::icmp::unreachable
        && r->icmp_code == net::icmp::port_unreachable)
        co_return PortState::closed;
    co_return PortState::filtered;
}

inline sim::Task<PortMap> udp_scan(Attacker& a, net::Ipv4 ip, std::vector<std::uint16_t> ports)
{
    std::vector<sim::Task<PortState>> jobs;
    for (auto p : ports) jobs.push_back(udp_probe(a, ip, p));
    auto states = co_await sim::gather(a.sched(), std::move(jobs), a.settings().scan_parallelism);
    PortMap out;
    for (std::size_t i = 0; i < ports.size(); ++i) out[ports[i]] = states[i];
    co_return out;
}

inline sim::Task<bool> ping(Attacker& a, net::Ipv4 ip)
{
    auto p = a.net().base({a.ip(), static_cast<std::uint16_t>(a.rng()() & 0xFFFF)}, {ip, 1}, net::Transport::icmp);
    p.icmp_type = net::icmp::echo_request;
    p.payload = Bytes(8, 0);
    auto r = co_await raw_probe(a, std::move(p), "ping");
    co_return r && r->icmp_type == net::icmp::echo_reply;
}

/// Host discovery: ICMP echo, SYN to 443, ACK to 80. Any answer means up.
inline sim::Task<bool> host_alive(Attacker& a, net::Ipv4 ip)
{
    if (co_await ping(a, ip)) co_return true;
    if (co_await raw_probe(a, tcp_probe_packet(a, ip, 443, net::tcp::SYN), "ping")) co_return true;
    co_return (co_await raw_probe(a, tcp_probe_packet(a, ip, 80, net::tcp::ACK), "ping")).has_value();
}

inline sim::Task<std::vector<net::Ipv4>> ping_sweep(Attacker& a, net::Cidr range)
{
    std::vector<net::Ipv4> candidates;
    std::uint32_t size = range.prefix >= 31 ? (1u << (32 - range.prefix)) : (1u << (32 - range.prefix)) - 2;
    std::uint32_t first = range.base.value() + (range.prefix >= 31 ? 0 : 1);
    for (std::uint32_t i = 0; i < size; ++i) candidates.push_back(net::Ipv4(first + i));
    std::vector<sim::Task<bool>> jobs;
    for (auto ip : candidates) jobs.push_back(host_alive(a, ip));
    auto up = co_await sim::gather(a.sched(), std::move(jobs), a.settings().scan_parallelism);
    std::vector<net::Ipv4> out;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (up[i]) out.push_back(candidates[i]);
    co_return out;
}

// stack fingerprint probes

struct StackProbe {
    std::string test;
    std::optional<net::PacketRecord> reply;
};

/// The TCP/UDP/ICMP probes a fingerprinting scan sends: T1 and ECN to an
/// open port, T2-T4 to the open port with odd flags, T5-T7 to a closed
/// port, U1 to a closed UDP port and IE.
inline sim::Task<std::vector<StackProbe>> os_probes(Attacker& a, net::Ipv4 ip, std::uint16_t open_port,
                                                    std::uint16_t closed_port)
{
    using namespace net::tcp;
    struct Spec {
        const char* test;
        std::uint16_t port;
        std::uint8_t flags;
        bool df;
    };
    const Spec specs[] = {
        {"T1", open_port, SYN, false},
        {"ECN", open_port, static_cast<std::uint8_t>(SYN | ECE | CWR), false},
        {"T2", open_port, 0, true},
        {"T3", open_port, static_cast<std::uint8_t>(SYN | FIN | PSH | URG), false},
        {"T4", open_port, ACK, true},
        {"T5", closed_port, SYN, false},
        {"T6", closed_port, ACK, true},
        {"T7", closed_port, static_cast<std::uint8_t>(FIN | PSH | URG), false},
    };
    std::vector<StackProbe> out;
    for (auto& s : specs) {
        auto p = tcp_probe_packet(a, ip, s.port, s.flags);
        p.df = s.df;
        p.tcp_options = {0x03, 0x03, 0x0A, 0x01, 0x02, 0x04, 0x05, 0xB4, 0x04, 0x02};
        auto reply = co_await raw_probe(a, std::move(p), "osscan");
        out.push_back({s.test, std::move(reply)});
    }
    auto u1 = a.net().base({a.ip(), a.net().ephemeral_port(a.ip())}, {ip, closed_port}, net::Transport::udp);
    u1.payload = Bytes(300, 0x43);
    auto u1_reply = co_await raw_probe(a, std::move(u1), "osscan");
    out.push_back({"U1", std::move(u1_reply)});
    auto ie = a.net().base({a.ip(), static_cast<std::uint16_t>(a.rng()() & 0xFFFF)}, {ip, 295}, net::Transport::icmp);
    ie.icmp_type = net::icmp::echo_request;
    ie.icmp_code = 9;
    ie.df = true;
    ie.payload = Bytes(120, 0);
    auto ie_reply = co_await raw_probe(a, std::move(ie), "osscan");
    out.push_back({"IE", std::move(ie_reply)});
    co_return out;
}

/// Connects, waits for whatever the service says first, optionally sends a
/// nudge, and closes.
inline sim::Task<Bytes> banner_grab(Attacker& a, net::Endpoint to, sim::Duration wait, Bytes nudge = {})
{
    auto c = co_await a.connect("banner", to);
    if (!c.ok()) co_return Bytes{};
    auto local = c.stream.local();
    Bytes got;
    auto m = co_await c.stream.recv(wait);
    if (m.status == sim::Mailbox<Bytes>::Status::item) got = std::move(*m.item);
    if (got.empty() && !nudge.empty()) {
        a.log("banner", TranscriptEntry::Kind::request, local, to, nudge);
        c.stream.send(nudge);
        auto m2 = co_await c.stream.recv(wait);
        if (m2.status == sim::Mailbox<Bytes>::Status::item) got = std::move(*m2.item);
    }
    a.log("banner", got.empty() ? TranscriptEntry::Kind::timeout : TranscriptEntry::Kind::response, local, to, got);
    c.stream.close();
    co_return got;
}

// Modbus enumeration

/// Smallest well-formed request body for each function code; unknown
/// codes are sent bare.
inline modbus::Pdu minimal_request(std::uint8_t function)
{
    namespace fc = modbus::fc;
    switch (function) {
    case fc::read_coils:
    case fc::read_discrete_inputs:
    case fc::read_holding_registers:
    case fc::read_input_registers: return modbus::read_request(function, 0, 1);
    case fc::write_single_coil: return modbus::write_coil_request(0, false);
    case fc::write_single_register: return modbus::write_register_request(0, 0);
    case fc::write_multiple_coils: return modbus::write_coils_request(0, {0});
    case fc::write_multiple_registers: return modbus::write_registers_request(0, {0});
    case fc::diagnostics: return {function, {0x00, 0x01, 0x00, 0x00}}; // restart communications
    case fc::encapsulated_interface: return {function, {0x0E, 0x01, 0x00}};
    default: return {function, {}};
    }
}

struct FunctionProbe {
    std::uint8_t function = 0;
    modbus::Exchange::Status status = modbus::Exchange::Status::timeout;
    std::uint8_t exception_code = 0;
    bool supported() const
    {
        return status == modbus::Exchange::Status::ok
               || (status == modbus::Exchange::Status::exception && exception_code != modbus::exc::illegal_function);
    }
};

struct FunctionScan {
    bool connected = false;
    std::map<std::uint8_t, FunctionProbe> results;
    std::vector<std::uint8_t> supported() const
    {
        std::vector<std::uint8_t> out;
        for (auto& [f, r] : results)
            if (r.supported()) out.push_back(f);
        return out;
    }
};

/// One request/response on an open channel, logged.
inline sim::Task<modbus::Exchange> logged_exchange(Attacker& a, modbus::ClientChannel& ch, std::string tool,
                                                   std::uint8_t unit, modbus::Pdu req, sim::Duration timeout)
{
    auto tid = ch.next_transaction();
    auto local = ch.stream().local(), remote = ch.stream().remote();
    a.log(tool, TranscriptEntry::Kind::request, local, remote, modbus::encode_adu(modbus::make_adu(tid, unit, req)));
    auto e = co_await ch.exchange(unit, std::move(req), timeout);
    if (e.response)
        a.log(tool, TranscriptEntry::Kind::response, local, remote, modbus::encode_adu(modbus::make_adu(tid, unit, *e.response)));
    else
        a.log(tool, e.status == modbus::Exchange::Status::closed ? TranscriptEntry::Kind::closed : TranscriptEntry::Kind::timeout,
              local, remote);
    co_return e;
}

/// Tries every function code in [first, last]; reconnects if the server
/// hangs up on one.
inline sim::Task<FunctionScan> function_scan(Attacker& a, net::Endpoint to, std::uint8_t unit = 1, std::uint8_t first = 1,
                                             std::uint8_t last = 127, sim::Duration timeout = std::chrono::milliseconds(500))
{
    FunctionScan out;
    std::optional<modbus::ClientChannel> ch;
    for (unsigned f = first; f <= last; ++f) {
        if (!ch || !ch->open()) {
            auto c = co_await a.connect("funcscan", to);
            if (!c.ok()) co_return out;
            out.connected = true;
            ch.emplace(a.sched(), std::move(c.stream));
        }
        auto e = co_await logged_exchange(a, *ch, "funcscan", unit, minimal_request(static_cast<std::uint8_t>(f)), timeout);
        out.results[static_cast<std::uint8_t>(f)] = {static_cast<std::uint8_t>(f), e.status, e.exception_code};
    }
    if (ch) ch->close();
    co_return out;
}

/// Asks each unit id for its server id; ids that answer at all are live.
inline sim::Task<std::vector<std::uint8_t>> unit_sweep(Attacker& a, net::Endpoint to, std::uint8_t first = 1,
                                                       std::uint8_t last = 247,
                                                       sim::Duration timeout = std::chrono::milliseconds(200))
{
    std::vector<std::uint8_t> live;
    auto c = co_await a.connect("unitscan", to);
    if (!c.ok()) co_return live;
    modbus::ClientChannel ch(a.sched(), std::move(c.stream));
    for (unsigned u = first; u <= last; ++u) {
        if (!ch.open()) break;
        auto e = co_await logged_exchange(a, ch, "unitscan", static_cast<std::uint8_t>(u),
                                          modbus::Pdu{modbus::fc::report_server_id, {}}, timeout);
        if (e.status == modbus::Exchange::Status::ok || e.status == modbus::Exchange::Status::exception)
            live.push_back(static_cast<std::uint8_t>(u));
    }
    ch.close();
    co_return live;
}

struct MemoryScanOptions {
    std::vector<Space> spaces{Space::holding_registers, Space::coils};
    std::uint32_t first = 0;
    std::uint32_t last = 65535;
    std::uint8_t unit = 1;
    sim::Duration timeout = std::chrono::seconds(1);
    sim::Duration busy_backoff = std::chrono::milliseconds(50);
    int max_busy_retries = 20;
    bool keep_values = true;
    std::optional<sim::Time> until; // stop early (flood workers)
};

struct MemoryRegion {
    Space space;
    std::uint16_t addr;
    std::uint16_t qty;
    std::uint8_t exception_code;
};

struct MemoryDump {
    bool connected = false;
    std::map<Space, std::map<std::uint16_t, std::uint16_t>> values;
    std::vector<MemoryRegion> exceptions;
    std::size_t requests = 0;
    std::size_t busy = 0;
    std::size_t timeouts = 0;

    std::optional<std::uint16_t> value(Space s, std::uint16_t addr) const
    {
        auto it = values.find(s);
        if (it == values.end()) return std::nullopt;
        auto v = it->second.find(addr);
        if (v == it->second.end()) return std::nullopt;
        return v->second;
    }
};

inline std::uint8_t read_function_for(Space s)
{
    switch (s) {
    case Space::coils: return modbus::fc::read_coils;
    case Space::discrete_inputs: return modbus::fc::read_discrete_inputs;
    case Space::input_registers: return modbus::fc::read_input_registers;
    case Space::holding_registers: return modbus::fc::read_holding_registers;
    }
    return modbus::fc::read_holding_registers;
}

/// Reads each space end to end in maximum-size chunks. Busy answers back
/// off and retry the same chunk; other exceptions are recorded and skipped.
inline sim::Task<MemoryDump> memory_scan(Attacker& a, net::Endpoint to, MemoryScanOptions opt = {})
{
    MemoryDump dump;
    auto c = co_await a.connect("memscan", to);
    if (!c.ok()) co_return dump;
    dump.connected = true;
    modbus::ClientChannel ch(a.sched(), std::move(c.stream));
    auto expired = [&] { return opt.until && a.sched().now() >= *opt.until; };

    for (auto space : opt.spaces) {
        std::uint32_t chunk = is_bit_space(space) ? 2000 : 125;
        std::uint8_t f = read_function_for(space);
        for (std::uint32_t addr = opt.first; addr <= opt.last && !expired();) {
            // always a full chunk: the last one runs past the table end
            int retries = 0;
            modbus::Exchange e;
            while (true) {
                if (!ch.open()) co_return dump;
                ++dump.requests;
                e = co_await logged_exchange(a, ch, "memscan", opt.unit,
                                             modbus::read_request(f, static_cast<std::uint16_t>(addr), static_cast<std::uint16_t>(chunk)),
                                             opt.timeout);
                if (e.status == modbus::Exchange::Status::exception && e.exception_code == modbus::exc::server_busy
                    && retries++ < opt.max_busy_retries && !expired()) {
                    ++dump.busy;
                    co_await a.sched().sleep(opt.busy_backoff);
                    continue;
                }
                break;
            }
            if (e.status == modbus::Exchange::Status::ok && opt.keep_values) {
                if (auto v = modbus::read_values(*e.response, f, static_cast<std::uint16_t>(chunk)))
                    for (std::size_t i = 0; i < v->size(); ++i) dump.values[space][static_cast<std::uint16_t>(addr + i)] = (*v)[i];
            } else if (e.status == modbus::Exchange::Status::exception) {
                dump.exceptions.push_back({space, static_cast<std::uint16_t>(addr), static_cast<std::uint16_t>(chunk), e.exception_code});
            } else if (e.status == modbus::Exchange::Status::timeout) {
                ++dump.timeouts;
            } else {
                co_return dump;
            }
            addr += chunk;
        }
    }
    ch.close();
    co_return dump;
}

} // namespace scada::attack

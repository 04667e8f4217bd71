#pragma once

// Command-line Modbus master in the style of modpoll: polls or writes one
// block of references over Modbus/TCP or RTU-over-TCP framing.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "scada/attack/attacker.hpp"
#include "scada/modbus/client.hpp"
#include "scada/util/process.hpp"

namespace scada::attack {

class ModpollError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Framing { tcp, enc };

struct ModpollArgs {
    bool zero_based = false;          // -0
    bool single_poll = false;         // -1
    long reference = 1;               // -r
    int type = 4;                     // -t 0 coil, 1 input, 3 input register, 4 holding register
    std::chrono::milliseconds poll_rate{1000}; // -l
    Framing framing = Framing::tcp;   // -m
    long count = 1;                   // -c
    int slave = 1;                    // -a
    std::string host;
    std::uint16_t port = 502;         // -p
    std::chrono::milliseconds timeout{1000}; // -o (seconds on the command line)
    bool bad_crc = false;             // --bad-crc
    std::vector<long> values;

    std::uint16_t address() const { return static_cast<std::uint16_t>(zero_based ? reference : reference - 1); }
    bool bit_type() const { return type == 0 || type == 1; }
    bool writing() const { return !values.empty(); }

    std::uint8_t read_function() const
    {
        switch (type) {
        case 0: return modbus::fc::read_coils;
        case 1: return modbus::fc::read_discrete_inputs;
        case 3: return modbus::fc::read_input_registers;
        default: return modbus::fc::read_holding_registers;
        }
    }

    modbus::Pdu request() const
    {
        if (!writing()) return modbus::read_request(read_function(), address(), static_cast<std::uint16_t>(count));
        std::vector<std::uint16_t> regs;
        for (auto v : values) regs.push_back(static_cast<std::uint16_t>(v));
        if (type == 0) {
            if (regs.size() == 1) return modbus::write_coil_request(address(), regs[0] != 0);
            return modbus::write_coils_request(address(), regs);
        }
        return modbus::write_registers_request(address(), regs);
    }
};

namespace detail {

inline long modpoll_number(const std::string& s, const char* what)
{
    std::size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(s, &pos, 0);
    } catch (const std::exception&) {
        throw ModpollError(std::string("bad ") + what + " '" + s + "'");
    }
    if (pos != s.size()) throw ModpollError(std::string("bad ") + what + " '" + s + "'");
    return v;
}

} // namespace detail

/// Parses modpoll arguments (without the program name). Negative write
/// values are only accepted after "--".
inline ModpollArgs parse_modpoll(const std::vector<std::string>& argv)
{
    ModpollArgs a;
    std::vector<std::string> positional;
    bool options_done = false;
    for (std::size_t i = 0; i < argv.size(); ++i) {
        const auto& t = argv[i];
        if (options_done || t.empty() || t[0] != '-') {
            positional.push_back(t);
            continue;
        }
        if (t == "--") {
            options_done = true;
            continue;
        }
        auto value = [&](const char* what) -> const std::string& {
            if (i + 1 >= argv.size()) throw ModpollError(std::string("missing value for ") + what);
            return argv[++i];
        };
        if (t == "-0") a.zero_based = true;
        else if (t == "-1") a.single_poll = true;
        else if (t == "--bad-crc") a.bad_crc = true;
        else if (t == "-r") a.reference = detail::modpoll_number(value("-r"), "reference");
        else if (t == "-c") a.count = detail::modpoll_number(value("-c"), "count");
        else if (t == "-a") a.slave = static_cast<int>(detail::modpoll_number(value("-a"), "slave address"));
        else if (t == "-l") a.poll_rate = std::chrono::milliseconds(detail::modpoll_number(value("-l"), "poll rate"));
        else if (t == "-p") {
            long p = detail::modpoll_number(value("-p"), "port");
            if (p < 1 || p > 65535) throw ModpollError("port outside 1..65535");
            a.port = static_cast<std::uint16_t>(p);
        } else if (t == "-o") {
            double secs = 0;
            try {
                secs = std::stod(value("-o"));
            } catch (const std::exception&) {
                throw ModpollError("bad timeout");
            }
            if (!(secs > 0 && secs <= 100)) throw ModpollError("timeout outside (0, 100] s");
            a.timeout = std::chrono::milliseconds(static_cast<long>(secs * 1000 + 0.5));
        } else if (t == "-t") {
            auto v = value("-t");
            auto colon = v.find(':');
            auto base = v.substr(0, colon);
            if (base != "0" && base != "1" && base != "3" && base != "4") throw ModpollError("unknown type '" + v + "'");
            a.type = base[0] - '0';
        } else if (t == "-m") {
            auto v = value("-m");
            if (v == "tcp") a.framing = Framing::tcp;
            else if (v == "enc") a.framing = Framing::enc;
            else if (v == "rtu" || v == "ascii") throw ModpollError("serial mode '" + v + "' needs a serial port");
            else throw ModpollError("unknown mode '" + v + "'");
        } else {
            throw ModpollError("unknown option '" + t + "'");
        }
    }
    if (positional.empty()) throw ModpollError("no host given");
    a.host = positional.front();
    for (std::size_t i = 1; i < positional.size(); ++i) a.values.push_back(detail::modpoll_number(positional[i], "value"));

    long lo = a.zero_based ? 0 : 1, hi = a.zero_based ? 65535 : 65536;
    if (a.reference < lo || a.reference > hi) throw ModpollError("reference outside " + std::to_string(lo) + ".." + std::to_string(hi));
    if (a.slave < 0 || a.slave > 255) throw ModpollError("slave address outside 0..255");
    if (a.poll_rate.count() < 0) throw ModpollError("negative poll rate");
    if (a.writing()) {
        if (a.type == 1 || a.type == 3) throw ModpollError("input tables are read-only");
        for (auto v : a.values) {
            if (a.type == 0 ? (v != 0 && v != 1) : (v < -32768 || v > 65535))
                throw ModpollError("value " + std::to_string(v) + " out of range");
        }
        std::size_t limit = a.type == 0 ? 1968 : 123;
        if (a.values.size() > limit) throw ModpollError("too many values");
        a.count = static_cast<long>(a.values.size());
    } else {
        long limit = a.bit_type() ? 2000 : 125;
        if (a.count < 1 || a.count > limit) throw ModpollError("count outside 1.." + std::to_string(limit));
    }
    if (long(a.address()) + a.count > 65536) throw ModpollError("block runs past the end of the table");
    return a;
}

inline ModpollArgs parse_modpoll(std::string_view command_line)
{
    return parse_modpoll(util::split_command(command_line));
}

struct ModpollTransaction {
    sim::Time at{0};
    Bytes request;
    std::optional<Bytes> response;
    modbus::Exchange::Status status = modbus::Exchange::Status::timeout;
    std::uint8_t exception_code = 0;
    std::vector<std::uint16_t> values;
};

struct ModpollResult {
    bool connected = false;
    std::string error;
    std::vector<ModpollTransaction> transactions;
};

/// Runs one modpoll invocation. Without -1 it keeps polling every poll_rate
/// until `until` (if given) passes, as an interrupted shell command would.
inline sim::Task<ModpollResult> run_modpoll(Attacker& attacker, ModpollArgs args, std::optional<sim::Time> until = std::nullopt)
{
    auto& sched = attacker.sched();
    ModpollResult res;
    auto ip = net::Ipv4::parse(args.host);
    if (!ip) {
        res.error = "cannot resolve " + args.host;
        co_return res;
    }
    net::Endpoint target{*ip, args.port};
    co_await sched.sleep(attacker.settings().process_start);

    auto conn = co_await attacker.connect("modpoll", target);
    if (!conn.ok()) {
        res.error = conn.status == sim::ConnectResult::Status::refused ? "connection refused" : "connect timed out";
        co_return res;
    }
    res.connected = true;
    net::Endpoint local = conn.stream.local();
    modbus::ClientChannel ch(sched, std::move(conn.stream));
    using K = TranscriptEntry::Kind;

    while (true) {
        ModpollTransaction tx;
        tx.at = sched.now();
        auto pdu = args.request();
        if (args.framing == Framing::tcp) {
            auto tid = ch.next_transaction();
            ch.set_next_transaction(static_cast<std::uint16_t>(tid + 1));
            tx.request = modbus::encode_adu(modbus::make_adu(tid, static_cast<std::uint8_t>(args.slave), pdu));
            attacker.log("modpoll", K::request, local, target, tx.request);
            ch.send_raw(tx.request);
            auto e = co_await ch.await_reply(tid, args.timeout);
            tx.status = e.status;
            tx.exception_code = e.exception_code;
            if (e.response) {
                tx.response = modbus::encode_adu(modbus::make_adu(tid, static_cast<std::uint8_t>(args.slave), *e.response));
                if (e.ok() && !args.writing())
                    if (auto v = modbus::read_values(*e.response, pdu.function_code, static_cast<std::uint16_t>(args.count)))
                        tx.values = *v;
            }
        } else {
            tx.request = modbus::encode_rtu(static_cast<std::uint8_t>(args.slave), pdu, args.bad_crc);
            attacker.log("modpoll", K::request, local, target, tx.request);
            ch.send_raw(tx.request);
            auto m = co_await ch.recv_raw(args.timeout);
            if (m.status == sim::Mailbox<Bytes>::Status::item) {
                tx.response = *m.item;
                auto d = modbus::decode_rtu(*m.item);
                if (d && d->crc_ok && d->frame.pdu.is_exception()) {
                    tx.status = modbus::Exchange::Status::exception;
                    tx.exception_code = d->frame.pdu.payload.empty() ? 0 : d->frame.pdu.payload[0];
                } else if (d && d->crc_ok) {
                    tx.status = modbus::Exchange::Status::ok;
                    if (!args.writing())
                        if (auto v = modbus::read_values(d->frame.pdu, pdu.function_code, static_cast<std::uint16_t>(args.count)))
                            tx.values = *v;
                } else {
                    tx.status = modbus::Exchange::Status::timeout; // garbage counts as no reply
                }
            } else {
                tx.status = m.status == sim::Mailbox<Bytes>::Status::closed ? modbus::Exchange::Status::closed
                                                                            : modbus::Exchange::Status::timeout;
            }
        }
        if (tx.response) attacker.log("modpoll", K::response, local, target, *tx.response);
        else attacker.log("modpoll", tx.status == modbus::Exchange::Status::closed ? K::closed : K::timeout, local, target);
        bool closed = tx.status == modbus::Exchange::Status::closed;
        res.transactions.push_back(std::move(tx));

        if (args.single_poll || closed) break;
        if (until && sched.now() + args.poll_rate >= *until) break;
        co_await sched.sleep(args.poll_rate);
    }
    ch.close();
    co_return res;
}

} // namespace scada::attack

#pragma once

// Modbus master: runs the mbclient.config command list against a slave once
// per poll round, mirroring reads into the local table and pushing writes
// out of it. A failed exchange latches the fault registers until the reset
// coil is pulsed, then the link waits retry_time before reconnecting.

#include <chrono>
#include <deque>
#include <string>
#include <vector>

#include "scada/data_table.hpp"
#include "scada/ini.hpp"
#include "scada/modbus/client.hpp"
#include "scada/sim/network.hpp"

namespace scada::master {

struct PollCommand {
    std::string name;
    std::uint8_t function = 3;
    std::uint8_t uid = 1;
    std::uint16_t memaddr = 0;
    std::uint16_t qty = 1;
    std::uint16_t remoteaddr = 0;

    bool is_read() const { return function >= 1 && function <= 4; }
};

struct ClientConfig {
    std::string name;
    net::Ipv4 host;
    std::uint16_t port = 502;
    std::chrono::milliseconds repeat_time{100};
    std::chrono::milliseconds retry_time{5000};
    std::chrono::milliseconds cmd_time{100};
    std::uint16_t fault_coil = 0, fault_inp = 0, fault_holdingreg = 0, fault_inpreg = 0;
    std::uint16_t fault_reset = 0;
    std::vector<PollCommand> commands;
};

/// Local table space a command reads into or writes from.
inline Space local_space(std::uint8_t function)
{
    switch (function) {
    case 1: return Space::coils;
    case 2: return Space::discrete_inputs;
    case 3: return Space::holding_registers;
    case 4: return Space::input_registers;
    case 5:
    case 15: return Space::coils;
    case 6:
    case 16: return Space::holding_registers;
    }
    throw std::invalid_argument("function " + std::to_string(function) + " cannot be polled");
}

namespace detail {

inline std::uint16_t u16(std::string_view v, std::string_view what)
{
    long n = ini::parse_int(v, what);
    if (n < 0 || n > 65535) throw ini::ConfigError(std::string(what) + " outside 0..65535");
    return static_cast<std::uint16_t>(n);
}

inline PollCommand parse_command(const std::string& name, const std::string& value)
{
    PollCommand c;
    c.name = name;
    bool fn = false, mem = false, remote = false;
    for (auto& kv : ini::split_list(value)) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ini::ConfigError(name + ": '" + kv + "' is not key=value");
        auto k = ini::trim(kv.substr(0, eq));
        auto v = ini::trim(kv.substr(eq + 1));
        if (k == "function") {
            long f = ini::parse_int(v, "function");
            if (f != 1 && f != 2 && f != 3 && f != 4 && f != 5 && f != 6 && f != 15 && f != 16)
                throw ini::ConfigError(name + ": function " + v + " cannot be polled");
            c.function = static_cast<std::uint8_t>(f);
            fn = true;
        } else if (k == "uid") {
            long u = ini::parse_int(v, "uid");
            if (u < 0 || u > 255) throw ini::ConfigError(name + ": uid outside 0..255");
            c.uid = static_cast<std::uint8_t>(u);
        } else if (k == "memaddr") {
            c.memaddr = u16(v, "memaddr");
            mem = true;
        } else if (k == "remoteaddr") {
            c.remoteaddr = u16(v, "remoteaddr");
            remote = true;
        } else if (k == "qty") {
            c.qty = u16(v, "qty");
        } else {
            throw ini::ConfigError(name + ": unknown field '" + k + "'");
        }
    }
    if (!fn || !mem || !remote) throw ini::ConfigError(name + ": needs function, memaddr and remoteaddr");
    if (c.qty == 0 || c.memaddr + std::size_t(c.qty) > 65536 || c.remoteaddr + std::size_t(c.qty) > 65536)
        throw ini::ConfigError(name + ": qty does not fit the address space");
    if ((c.function == 5 || c.function == 6) && c.qty != 1) throw ini::ConfigError(name + ": single writes need qty=1");
    return c;
}

} // namespace detail

inline std::vector<ClientConfig> parse_client_config(std::string_view text)
{
    std::vector<ClientConfig> out;
    for (auto& sec : ini::parse(text).sections) {
        auto* type = sec.find("type");
        if (!type || *type != "tcpclient") continue;
        if (auto* action = sec.find("action"); action && *action != "poll") continue;
        ClientConfig c;
        c.name = sec.name;
        auto host = net::Ipv4::parse(sec.require("host"));
        if (!host) throw ini::ConfigError("[" + sec.name + "] bad host");
        c.host = *host;
        if (auto* v = sec.find("port")) c.port = detail::u16(*v, "port");
        if (auto* v = sec.find("repeattime")) c.repeat_time = std::chrono::milliseconds(ini::parse_int(*v, "repeattime"));
        if (auto* v = sec.find("retrytime")) c.retry_time = std::chrono::milliseconds(ini::parse_int(*v, "retrytime"));
        if (auto* v = sec.find("cmdtime")) c.cmd_time = std::chrono::milliseconds(ini::parse_int(*v, "cmdtime"));
        if (c.repeat_time.count() <= 0 || c.cmd_time.count() <= 0 || c.retry_time.count() < 0)
            throw ini::ConfigError("[" + sec.name + "] times must be positive");
        if (auto* v = sec.find("fault_coil")) c.fault_coil = detail::u16(*v, "fault_coil");
        if (auto* v = sec.find("fault_inp")) c.fault_inp = detail::u16(*v, "fault_inp");
        if (auto* v = sec.find("fault_holdingreg")) c.fault_holdingreg = detail::u16(*v, "fault_holdingreg");
        if (auto* v = sec.find("fault_inpreg")) c.fault_inpreg = detail::u16(*v, "fault_inpreg");
        if (auto* v = sec.find("fault_reset")) c.fault_reset = detail::u16(*v, "fault_reset");
        for (auto& [k, v] : sec.entries)
            if (!k.empty() && k[0] == '&') c.commands.push_back(detail::parse_command(k.substr(1), v));
        if (c.commands.empty()) throw ini::ConfigError("[" + sec.name + "] has no commands");
        out.push_back(std::move(c));
    }
    if (out.empty()) throw ini::ConfigError("no tcpclient section");
    return out;
}

struct PollerStats {
    std::uint64_t rounds = 0;
    std::uint64_t skipped_rounds = 0;
    std::uint64_t exchanges = 0;
    std::uint64_t failures = 0;
    std::uint64_t connects = 0;
    std::string last_error;
};

class MasterPoller {
public:
    MasterPoller(sim::Network& net, net::Ipv4 self, DataTable& local, ClientConfig cfg)
        : net_(net), self_(self), local_(local), cfg_(std::move(cfg)), triggers_(net.scheduler()) {}

    MasterPoller(const MasterPoller&) = delete;
    MasterPoller& operator=(const MasterPoller&) = delete;

    const ClientConfig& config() const { return cfg_; }
    const PollerStats& stats() const { return stats_; }
    bool faulted() const { return local_.coil(cfg_.fault_coil); }

    /// Starts the polling task; rounds begin on trigger().
    void start() { sim::spawn(run()); }
    void stop() { triggers_.close(); }

    /// One poll round is due.
    void trigger() { triggers_.push(1); }

    /// Writes registers locally and queues an FC16 ahead of the next round.
    void send_write(std::uint16_t addr, std::vector<std::uint16_t> values)
    {
        local_.write(Space::holding_registers, addr, values);
        writes_.push_back({addr, std::move(values)});
    }

private:
    struct PendingWrite {
        std::uint16_t addr;
        std::vector<std::uint16_t> values;
    };

    void set_fault(const std::string& why)
    {
        ++stats_.failures;
        stats_.last_error = why;
        local_.set_coil(cfg_.fault_coil, true);
        local_.set_bit(Space::discrete_inputs, cfg_.fault_inp, true);
        local_.set_reg(Space::holding_registers, cfg_.fault_holdingreg, 1);
        local_.set_reg(Space::input_registers, cfg_.fault_inpreg, 1);
    }

    void check_reset()
    {
        if (!local_.coil(cfg_.fault_reset)) return;
        local_.set_coil(cfg_.fault_reset, false);
        local_.set_coil(cfg_.fault_coil, false);
        local_.set_bit(Space::discrete_inputs, cfg_.fault_inp, false);
        local_.set_reg(Space::holding_registers, cfg_.fault_holdingreg, 0);
        local_.set_reg(Space::input_registers, cfg_.fault_inpreg, 0);
    }

    modbus::Pdu request_for(const PollCommand& c) const
    {
        switch (c.function) {
        case 1:
        case 2:
        case 3:
        case 4: return modbus::read_request(c.function, c.remoteaddr, c.qty);
        case 5: return modbus::write_coil_request(c.remoteaddr, local_.coil(c.memaddr));
        case 6: return modbus::write_register_request(c.remoteaddr, local_.holding(c.memaddr));
        case 15: return modbus::write_coils_request(c.remoteaddr, local_.read(Space::coils, c.memaddr, c.qty));
        default: return modbus::write_registers_request(c.remoteaddr, local_.read(Space::holding_registers, c.memaddr, c.qty));
        }
    }

    /// True when the exchange succeeded and its result was applied.
    sim::Task<bool> run_command(const PollCommand& c)
    {
        ++stats_.exchanges;
        auto e = co_await link_->exchange(c.uid, request_for(c), cfg_.cmd_time);
        if (!e.ok()) {
            set_fault(c.name + ": " + modbus::exchange_name(e.status)
                      + (e.status == modbus::Exchange::Status::exception ? " " + std::to_string(e.exception_code) : ""));
            co_return false;
        }
        if (c.is_read()) {
            auto vals = modbus::read_values(*e.response, c.function, c.qty);
            if (!vals) {
                set_fault(c.name + ": malformed response");
                co_return false;
            }
            local_.write(local_space(c.function), c.memaddr, *vals);
        }
        co_return true;
    }

    sim::Task<void> run()
    {
        auto& sched = net_.scheduler();
        while (true) {
            auto t = co_await triggers_.recv();
            if (t.status == sim::Mailbox<int>::Status::closed) break;
            while (!triggers_.empty()) {
                co_await triggers_.recv(); // rounds that fell due while busy are skipped
                ++stats_.skipped_rounds;
            }
            ++stats_.rounds;
            check_reset();

            if (!link_ || !link_->open()) {
                ++stats_.connects;
                auto r = co_await net_.connect(self_, {cfg_.host, cfg_.port}, cfg_.cmd_time);
                if (!r.ok()) {
                    set_fault(std::string("connect ") + (r.status == sim::ConnectResult::Status::refused ? "refused" : "timed out"));
                    co_await sched.sleep(cfg_.retry_time);
                    continue;
                }
                link_.emplace(sched, std::move(r.stream));
            }

            bool ok = true;
            while (ok && !writes_.empty()) {
                auto w = std::move(writes_.front());
                writes_.pop_front();
                PollCommand c{"send_write", 16, 1, w.addr, static_cast<std::uint16_t>(w.values.size()), w.addr};
                ok = co_await run_command(c);
            }
            for (std::size_t i = 0; ok && i < cfg_.commands.size(); ++i) ok = co_await run_command(cfg_.commands[i]);
            if (!ok) {
                link_->close();
                link_.reset();
                co_await sched.sleep(cfg_.retry_time);
            }
        }
        if (link_) link_->close();
    }

    sim::Network& net_;
    net::Ipv4 self_;
    DataTable& local_;
    ClientConfig cfg_;
    sim::Mailbox<int> triggers_;
    std::optional<modbus::ClientChannel> link_;
    std::deque<PendingWrite> writes_;
    PollerStats stats_;
};

} // namespace scada::master

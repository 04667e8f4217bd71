#pragma once

// Bridging gateway between the outside network and the control network.
// Every crossing packet is captured, run through a fixed filter chain and
// handed to the signature engine. In ips mode, queued packets that hit a
// drop rule are discarded; in ids mode the engine only watches.

#include <functional>
#include <string>
#include <vector>

#include "scada/ids/engine.hpp"
#include "scada/net/ipv4.hpp"
#include "scada/net/packet.hpp"
#include "scada/sim/network.hpp"

namespace scada::gateway {

using net::Ipv4;
using net::PacketRecord;

enum class Verdict { accept, drop, queue };
enum class Mode { ids, ips };

inline const char* verdict_name(Verdict v)
{
    switch (v) {
    case Verdict::accept: return "ACCEPT";
    case Verdict::drop: return "DROP";
    case Verdict::queue: return "QUEUE";
    }
    return "?";
}

inline Mode parse_mode(std::string_view s)
{
    if (s == "ids") return Mode::ids;
    if (s == "ips") return Mode::ips;
    throw std::invalid_argument("unknown gateway mode '" + std::string(s) + "' (ids|ips)");
}

struct ChainDecision {
    Verdict verdict = Verdict::accept;
    std::optional<std::string> log; // LOG target text, without timestamp
};

/// Forward chain, evaluated top to bottom:
///   source blacklisted            DROP
///   source whitelisted            ACCEPT
///   broadcast destination         ACCEPT
///   inbound, state NEW            LOG "INBOUND <PROTO>: "
///   inbound                       QUEUE
///   anything else                 ACCEPT
struct ChainPolicy {
    net::AddressSet blacklist;
    net::AddressSet whitelist;
    std::vector<Ipv4> broadcast{Ipv4::must("10.0.0.255"), Ipv4::must("255.255.255.255")};

    ChainDecision evaluate(const PacketRecord& p, bool inbound) const
    {
        if (blacklist.contains(p.src.ip)) return {Verdict::drop, std::nullopt};
        if (whitelist.contains(p.src.ip)) return {Verdict::accept, std::nullopt};
        for (auto b : broadcast)
            if (p.dst.ip == b) return {Verdict::accept, std::nullopt};
        if (!inbound) return {Verdict::accept, std::nullopt};
        ChainDecision d{Verdict::queue, std::nullopt};
        if (p.new_connection) d.log = log_line(p);
        return d;
    }

    static std::string log_line(const PacketRecord& p)
    {
        std::string proto = p.transport == net::Transport::tcp    ? "TCP"
                            : p.transport == net::Transport::udp  ? "UDP"
                            : p.transport == net::Transport::icmp ? "ICMP"
                                                                  : "OTHER";
        std::string s = "INBOUND " + proto + ": IN=br0 PHYSIN=eth0 OUT=br0 PHYSOUT=eth1 SRC=" + p.src.ip.str()
                        + " DST=" + p.dst.ip.str() + " TTL=" + std::to_string(p.ttl) + " PROTO=" + proto;
        if (p.transport == net::Transport::icmp)
            s += " TYPE=" + std::to_string(p.icmp_type) + " CODE=" + std::to_string(p.icmp_code);
        else
            s += " SPT=" + std::to_string(p.src.port) + " DPT=" + std::to_string(p.dst.port);
        return s;
    }
};

struct Stats {
    std::uint64_t seen = 0;
    std::uint64_t captured = 0;
    std::uint64_t queued = 0;
    std::uint64_t chain_dropped = 0;
    std::uint64_t ips_dropped = 0;
    std::uint64_t alerts = 0;
};

class Gateway {
public:
    Gateway(Mode mode, ChainPolicy chain, ids::Engine engine, net::AddressSet inside)
        : mode_(mode), chain_(std::move(chain)), engine_(std::move(engine)), inside_(std::move(inside)) {}

    /// Packets between two inside hosts are ignored unless this is set.
    bool monitor_internal = false;

    std::function<void(const PacketRecord&)> on_capture;
    std::function<void(const ids::AlertEvent&)> on_alert;
    std::function<void(const PacketRecord&, const std::string&)> on_log;

    void attach(sim::Network& net)
    {
        net_ = &net;
        net.set_gateway([this](PacketRecord& p) { return process(p); });
    }

    /// Direction is decided by where the source sits: packets from outside are
    /// inbound.
    bool crossing(const PacketRecord& p) const { return inside_.contains(p.src.ip) != inside_.contains(p.dst.ip); }
    bool inbound(const PacketRecord& p) const { return !inside_.contains(p.src.ip); }

    sim::Passage process(PacketRecord& p)
    {
        ++stats_.seen;
        if (!crossing(p) && !monitor_internal) return {true};

        ++stats_.captured;
        if (on_capture) on_capture(p);

        auto d = chain_.evaluate(p, crossing(p) && inbound(p));
        if (d.log && on_log) on_log(p, *d.log);
        if (d.verdict == Verdict::drop) {
            ++stats_.chain_dropped;
            return {false};
        }
        if (d.verdict == Verdict::queue) ++stats_.queued;

        auto r = engine_.inspect(p);
        stats_.alerts += r.events.size();
        if (on_alert)
            for (auto& e : r.events) on_alert(e);

        if (mode_ == Mode::ips && d.verdict == Verdict::queue) {
            if (r.reset && net_) net_->reset_flow(p);
            if (r.drop) {
                ++stats_.ips_dropped;
                return {false};
            }
        }
        return {true};
    }

    Mode mode() const { return mode_; }
    const Stats& stats() const { return stats_; }
    ids::Engine& engine() { return engine_; }
    const ChainPolicy& chain() const { return chain_; }

private:
    Mode mode_;
    ChainPolicy chain_;
    ids::Engine engine_;
    net::AddressSet inside_;
    sim::Network* net_ = nullptr;
    Stats stats_;
};

} // namespace scada::gateway

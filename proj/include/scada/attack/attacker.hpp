#pragma once

// Attacker host state shared by the tools: where it sits, what it has sent
// and received so far.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "scada/bytes.hpp"
#include "scada/sim/network.hpp"

namespace scada::attack {

struct TranscriptEntry {
    enum class Kind { connect, request, response, timeout, closed, note };
    sim::Time at{0};
    std::string tool;
    Kind kind = Kind::note;
    net::Endpoint local, remote;
    Bytes bytes;
    std::string text;
};

inline const char* entry_kind_name(TranscriptEntry::Kind k)
{
    using K = TranscriptEntry::Kind;
    switch (k) {
    case K::connect: return "connect";
    case K::request: return "request";
    case K::response: return "response";
    case K::timeout: return "timeout";
    case K::closed: return "closed";
    case K::note: return "note";
    }
    return "?";
}

/// Everything the tools did, in order. Workers run on the one simulation
/// thread, so appends need no locking.
class Transcript {
public:
    void add(TranscriptEntry e) { entries_.push_back(std::move(e)); }
    const std::vector<TranscriptEntry>& entries() const { return entries_; }
    std::size_t count(TranscriptEntry::Kind k) const
    {
        std::size_t n = 0;
        for (auto& e : entries_) n += e.kind == k;
        return n;
    }
    void clear() { entries_.clear(); }

    std::string render() const
    {
        std::string out;
        for (auto& e : entries_) {
            out += std::to_string(e.at.count()) + " " + e.tool + " " + entry_kind_name(e.kind) + " "
                   + e.local.ip.str() + ":" + std::to_string(e.local.port) + " > " + e.remote.ip.str() + ":"
                   + std::to_string(e.remote.port);
            if (!e.bytes.empty()) out += " " + to_hex(e.bytes);
            if (!e.text.empty()) out += " " + e.text;
            out += "\n";
        }
        return out;
    }

private:
    std::vector<TranscriptEntry> entries_;
};

struct AttackerSettings {
    sim::Duration process_start = std::chrono::milliseconds(10); // cost of launching one tool process
    sim::Duration connect_timeout = std::chrono::seconds(1);
    sim::Duration probe_timeout = std::chrono::milliseconds(300);
    std::size_t scan_parallelism = 100;
};

class Attacker {
public:
    Attacker(sim::Network& net, net::Ipv4 ip, std::uint64_t seed = 7, AttackerSettings s = {})
        : net_(net), ip_(ip), rng_(seed), settings_(s)
    {
        if (!net_.has_host(ip)) net_.add_host(ip, "attacker");
    }

    sim::Network& net() { return net_; }
    sim::Scheduler& sched() { return net_.scheduler(); }
    net::Ipv4 ip() const { return ip_; }
    Transcript& transcript() { return transcript_; }
    const Transcript& transcript() const { return transcript_; }
    std::mt19937_64& rng() { return rng_; }
    const AttackerSettings& settings() const { return settings_; }
    AttackerSettings& settings() { return settings_; }

    void log(std::string tool, TranscriptEntry::Kind kind, net::Endpoint local, net::Endpoint remote, Bytes bytes = {},
             std::string text = {})
    {
        transcript_.add({sched().now(), std::move(tool), kind, local, remote, std::move(bytes), std::move(text)});
    }

    /// Opens a TCP connection and records the outcome.
    sim::Task<sim::ConnectResult> connect(std::string tool, net::Endpoint to)
    {
        auto r = co_await net_.connect(ip_, to, settings_.connect_timeout);
        log(std::move(tool), TranscriptEntry::Kind::connect, r.ok() ? r.stream.local() : net::Endpoint{ip_, 0}, to, {},
            r.ok() ? "ok" : r.status == sim::ConnectResult::Status::refused ? "refused" : "timeout");
        co_return r;
    }

private:
    sim::Network& net_;
    net::Ipv4 ip_;
    std::mt19937_64 rng_;
    AttackerSettings settings_;
    Transcript transcript_;
};

} // namespace scada::attack

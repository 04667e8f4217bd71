#pragma once

// Rule matching over single packets: header and flow checks, the detection
// option chain (with backtracking over content positions), rate gates, and
// activate/dynamic groups.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <ctime>
#include <deque>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "scada/ids/parser.hpp"
#include "scada/net/packet.hpp"
#include "scada/net/pcap.hpp"

namespace scada::ids {

struct AlertEvent {
    net::Timestamp ts{0};
    std::uint32_t sid = 0;
    std::uint32_t rev = 0;
    int priority = 0;
    std::string msg;
    Action action = Action::alert;
    net::Transport transport = net::Transport::tcp;
    net::Endpoint src, dst;
    std::size_t packet_index = 0; // position in the inspected stream
};

/// Result of inspecting one packet.
struct Inspection {
    std::vector<AlertEvent> events;
    bool drop = false;  // a drop/reject/sdrop rule fired
    bool reset = false; // reject or resp:reset_both fired
    bool passed = false;
};

/// "2015-07-16T00:00:01.250000Z" for a simulated timestamp.
inline std::string iso_timestamp(net::Timestamp ts)
{
    std::int64_t us = ts.count();
    std::time_t secs = static_cast<std::time_t>(net::kCaptureEpochSeconds + us / 1000000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%06lldZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<long long>(us % 1000000));
    return buf;
}

inline std::string format_alert(const AlertEvent& e)
{
    return iso_timestamp(e.ts) + " [sid:" + std::to_string(e.sid) + ":" + std::to_string(e.rev) + "] " + e.msg + " {"
           + net::transport_name(e.transport) + "} " + e.src.str() + " -> " + e.dst.str();
}

/// Sliding-window event counter. An event at time t is inside the window at
/// `now` when now - t < window.
class SlidingWindow {
public:
    void add(net::Timestamp t) { events_.push_back(t); }
    std::size_t count(net::Timestamp now, std::chrono::microseconds window)
    {
        while (!events_.empty() && now - events_.front() >= window) events_.pop_front();
        return events_.size();
    }
    void clear() { events_.clear(); }

private:
    std::deque<net::Timestamp> events_;
};

namespace detail {

inline bool header_matches(const Rule& r, const net::PacketRecord& p)
{
    if (!r.any_proto && r.proto != p.transport) return false;
    auto one_way = [&](const net::Endpoint& s, const net::Endpoint& d) {
        return r.src.matches(s.ip) && r.dst.matches(d.ip) && r.sport.matches(s.port) && r.dport.matches(d.port);
    };
    if (one_way(p.src, p.dst)) return true;
    return r.bidirectional && one_way(p.dst, p.src);
}

inline bool flow_matches(const Rule& r, const net::PacketRecord& p)
{
    if (!r.flow) return true;
    auto& f = *r.flow;
    if (f.from_client && *f.from_client != p.from_client) return false;
    if (f.established && !(p.transport == net::Transport::tcp && p.established)) return false;
    if (f.not_established && p.transport == net::Transport::tcp && p.established) return false;
    return true;
}

inline bool bytes_equal(ByteView data, std::size_t at, const Bytes& pat, bool nocase)
{
    if (at + pat.size() > data.size()) return false;
    for (std::size_t i = 0; i < pat.size(); ++i) {
        auto a = data[at + i], b = pat[i];
        if (nocase ? std::tolower(a) != std::tolower(b) : a != b) return false;
    }
    return true;
}

inline std::optional<std::uint32_t> read_number(ByteView data, long at, int n, bool little)
{
    if (at < 0 || static_cast<std::size_t>(at) + static_cast<std::size_t>(n) > data.size()) return std::nullopt;
    std::uint32_t v = 0;
    for (int i = 0; i < n; ++i) {
        std::uint32_t b = data[static_cast<std::size_t>(at) + static_cast<std::size_t>(little ? n - 1 - i : i)];
        v = v << 8 | b;
    }
    return v;
}

/// Evaluates options [i..] with the cursor at `cursor`. Content and pcre
/// alternatives backtrack: a later failure retries the next position.
inline bool eval_options(const std::vector<DetectOption>& opts, std::size_t i, ByteView data, long cursor)
{
    if (i == opts.size()) return true;
    const long size = static_cast<long>(data.size());
    const auto& opt = opts[i];

    if (auto* c = std::get_if<Content>(&opt)) {
        const long len = static_cast<long>(c->pattern.size());
        long start, limit = size;
        bool relative = c->distance || c->within;
        if (relative) {
            start = cursor + c->distance.value_or(0);
            if (c->within) limit = std::min(limit, start + *c->within);
        } else {
            start = c->offset.value_or(0);
            if (c->depth) limit = std::min(limit, start + *c->depth);
        }
        if (start < 0) start = 0;
        if (c->negated) {
            for (long p = start; p + len <= limit; ++p)
                if (bytes_equal(data, static_cast<std::size_t>(p), c->pattern, c->nocase)) return false;
            return eval_options(opts, i + 1, data, cursor);
        }
        for (long p = start; p + len <= limit; ++p)
            if (bytes_equal(data, static_cast<std::size_t>(p), c->pattern, c->nocase)
                && eval_options(opts, i + 1, data, p + len))
                return true;
        return false;
    }

    if (auto* re = std::get_if<Pcre>(&opt)) {
        long pos = (re->relative ? cursor : 0) + static_cast<long>(re->skip);
        auto matched_at = [&]() -> std::vector<long> {
            std::vector<long> ends;
            if (pos > size) return ends;
            if (re->not_followed_by) {
                if (!bytes_equal(data, static_cast<std::size_t>(pos), *re->not_followed_by, false)) ends.push_back(pos);
                return ends;
            }
            for (auto& alt : re->alternatives)
                if (bytes_equal(data, static_cast<std::size_t>(pos), alt, false)) ends.push_back(pos + long(alt.size()));
            return ends;
        }();
        if (re->negated) return matched_at.empty() && eval_options(opts, i + 1, data, cursor);
        for (long end : matched_at)
            if (eval_options(opts, i + 1, data, end)) return true;
        return false;
    }

    if (auto* t = std::get_if<ByteTest>(&opt)) {
        auto v = read_number(data, (t->relative ? cursor : 0) + t->offset, t->bytes, t->little);
        if (!v) return false;
        bool r = false;
        switch (t->op) {
        case '<': r = *v < t->value || (t->or_equal && *v == t->value); break;
        case '>': r = *v > t->value || (t->or_equal && *v == t->value); break;
        case '=': r = *v == t->value; break;
        case '&': r = (*v & t->value) != 0; break;
        case '^': r = (*v ^ t->value) != 0; break;
        }
        if (r == t->negated) return false;
        return eval_options(opts, i + 1, data, cursor);
    }

    if (auto* j = std::get_if<ByteJump>(&opt)) {
        long at = (j->relative ? cursor : 0) + j->offset;
        auto v = read_number(data, at, j->bytes, j->little);
        if (!v) return false;
        long next = (j->from_beginning ? 0 : at + j->bytes) + long(*v) * j->multiplier + j->post_offset;
        if (next < 0 || next > size) return false;
        return eval_options(opts, i + 1, data, next);
    }

    if (auto* d = std::get_if<IsDataAt>(&opt)) {
        long pos = (d->relative ? cursor : 0) + d->pos;
        bool present = pos >= 0 && pos < size;
        if (present == d->negated) return false;
        return eval_options(opts, i + 1, data, cursor);
    }

    if (auto* ds = std::get_if<Dsize>(&opt)) {
        if (!ds->matches(data.size())) return false;
        return eval_options(opts, i + 1, data, cursor);
    }
    return false;
}

} // namespace detail

/// Header, flow and detection options, without rate gates or activation.
inline bool rule_matches(const Rule& r, const net::PacketRecord& p)
{
    return detail::header_matches(r, p) && detail::flow_matches(r, p) && detail::eval_options(r.detect, 0, p.payload, 0);
}

class Engine {
public:
    explicit Engine(std::vector<Rule> rules) : rules_(std::move(rules)) { link_activation(rules_); }

    static Engine from_text(std::string_view text, const Variables& vars = default_variables())
    {
        return Engine(parse_rules(text, vars));
    }

    const std::vector<Rule>& rules() const { return rules_; }

    /// Evaluates every rule in file order. A matching pass rule stops the
    /// walk; all other matching rules fire.
    Inspection inspect(const net::PacketRecord& p)
    {
        Inspection out;
        std::size_t index = packets_++;
        for (auto& r : rules_) {
            if (r.action == Action::dynamic && !dynamic_enabled(r, p.ts)) continue;
            if (!rule_matches(r, p)) continue;
            if (r.action == Action::pass) {
                out.passed = true;
                break;
            }
            if (!gate(r, p)) continue;

            if (r.action == Action::activate) activate(*r.activates, p.ts);
            if (r.action == Action::dynamic) consume_dynamic(r);
            if (r.action == Action::drop || r.action == Action::reject || r.action == Action::sdrop) out.drop = true;
            if (r.action == Action::reject || r.reset_both) out.reset = true;
            if (r.action != Action::sdrop) {
                AlertEvent e;
                e.ts = p.ts;
                e.sid = r.sid;
                e.rev = r.rev;
                e.priority = r.priority;
                e.msg = r.msg;
                e.action = r.action;
                e.transport = p.transport;
                e.src = p.src;
                e.dst = p.dst;
                e.packet_index = index;
                out.events.push_back(std::move(e));
            }
        }
        return out;
    }

    void reset_state()
    {
        windows_.clear();
        fired_.clear();
        dynamic_.clear();
        packets_ = 0;
    }

private:
    using Key = std::tuple<std::uint32_t, int, std::uint32_t>; // sid, gate kind, tracked address

    static std::uint32_t tracked(Track t, const net::PacketRecord& p)
    {
        return t == Track::by_src ? p.src.ip.value() : p.dst.ip.value();
    }

    /// Rate gates. Returns whether the match should fire.
    bool gate(const Rule& r, const net::PacketRecord& p)
    {
        using std::chrono::seconds;
        if (r.detection_filter) {
            auto& f = *r.detection_filter;
            auto& w = windows_[{r.sid, 0, tracked(f.track, p)}];
            w.add(p.ts);
            if (w.count(p.ts, seconds(f.seconds)) <= static_cast<std::size_t>(f.count)) return false;
        }
        if (r.threshold) {
            auto& t = *r.threshold;
            Key k{r.sid, 1, tracked(t.track, p)};
            auto& w = windows_[k];
            auto& fired = fired_[k];
            auto window = seconds(t.seconds);
            switch (t.type) {
            case Threshold::Type::threshold:
                w.add(p.ts);
                if (w.count(p.ts, window) < static_cast<std::size_t>(t.count)) return false;
                w.clear();
                return true;
            case Threshold::Type::limit:
                if (fired.count(p.ts, window) >= static_cast<std::size_t>(t.count)) return false;
                fired.add(p.ts);
                return true;
            case Threshold::Type::both:
                w.add(p.ts);
                if (w.count(p.ts, window) < static_cast<std::size_t>(t.count)) return false;
                if (fired.count(p.ts, window) > 0) return false;
                fired.add(p.ts);
                return true;
            }
        }
        return true;
    }

    struct DynamicState {
        net::Timestamp until{0};
        bool timed = false;
        int remaining = -1; // -1: unlimited
        bool active = false;
    };

    void activate(int group, net::Timestamp now)
    {
        for (auto& r : rules_) {
            if (r.action != Action::dynamic || r.activated_by != group) continue;
            auto& d = dynamic_[r.sid];
            d.active = true;
            d.timed = r.active_seconds.has_value();
            if (d.timed) d.until = now + std::chrono::seconds(*r.active_seconds);
            d.remaining = r.active_count.value_or(-1);
        }
    }

    bool dynamic_enabled(const Rule& r, net::Timestamp now)
    {
        auto it = dynamic_.find(r.sid);
        if (it == dynamic_.end() || !it->second.active) return false;
        auto& d = it->second;
        if ((d.timed && now > d.until) || d.remaining == 0) {
            d.active = false;
            return false;
        }
        return true;
    }

    void consume_dynamic(const Rule& r)
    {
        auto& d = dynamic_[r.sid];
        if (d.remaining > 0) --d.remaining;
    }

    std::vector<Rule> rules_;
    std::map<Key, SlidingWindow> windows_;
    std::map<Key, SlidingWindow> fired_;
    std::map<std::uint32_t, DynamicState> dynamic_;
    std::size_t packets_ = 0;
};

} // namespace scada::ids

#pragma once

// Signature rules: the snort subset used by the Modbus TCP ruleset.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "scada/bytes.hpp"
#include "scada/net/ipv4.hpp"
#include "scada/net/packet.hpp"

namespace scada::ids {

enum class Action { alert, log, pass, drop, reject, sdrop, activate, dynamic };

inline const char* action_name(Action a)
{
    switch (a) {
    case Action::alert: return "alert";
    case Action::log: return "log";
    case Action::pass: return "pass";
    case Action::drop: return "drop";
    case Action::reject: return "reject";
    case Action::sdrop: return "sdrop";
    case Action::activate: return "activate";
    case Action::dynamic: return "dynamic";
    }
    return "?";
}

struct AddrSpec {
    bool negated = false;
    net::AddressSet set = net::AddressSet::all();
    std::string text;

    bool matches(net::Ipv4 a) const { return set.contains(a) != negated; }
};

struct PortSpec {
    bool any = true;
    bool negated = false;
    std::vector<std::pair<std::uint16_t, std::uint16_t>> ranges;

    bool matches(std::uint16_t p) const
    {
        if (any) return true;
        bool in = false;
        for (auto& [lo, hi] : ranges)
            if (p >= lo && p <= hi) in = true;
        return in != negated;
    }
};

struct Content {
    Bytes pattern;
    bool negated = false;
    bool nocase = false;
    std::optional<int> offset, depth, distance, within;
};

/// The pcre shapes the Modbus ruleset uses: skip N bytes from the start
/// (or from the cursor when relative) and then require one of a set of byte
/// strings, or require that a byte string does not follow.
struct Pcre {
    std::size_t skip = 0;
    std::vector<Bytes> alternatives; // positive group
    std::optional<Bytes> not_followed_by;
    bool relative = false;
    bool negated = false;
    std::string source;
};

struct ByteTest {
    int bytes = 1;
    char op = '=';       // < > = & ^
    bool or_equal = false; // for <= and >=
    bool negated = false;
    std::uint32_t value = 0;
    int offset = 0;
    bool relative = false;
    bool little = false;
};

struct ByteJump {
    int bytes = 2;
    int offset = 0;
    bool relative = false;
    bool little = false;
    bool from_beginning = false;
    int post_offset = 0;
    int multiplier = 1;
};

struct IsDataAt {
    int pos = 0;
    bool relative = false;
    bool negated = false;
};

struct Dsize {
    enum class Cmp { eq, gt, lt, range };
    Cmp cmp = Cmp::eq;
    int a = 0, b = 0;

    bool matches(std::size_t n) const
    {
        auto v = static_cast<long>(n);
        switch (cmp) {
        case Cmp::eq: return v == a;
        case Cmp::gt: return v > a;
        case Cmp::lt: return v < a;
        case Cmp::range: return v >= a && v <= b;
        }
        return false;
    }
};

struct Flow {
    std::optional<bool> from_client;
    bool established = false;
    bool not_established = false;
};

using DetectOption = std::variant<Content, Pcre, ByteTest, ByteJump, IsDataAt, Dsize>;

enum class Track { by_src, by_dst };

struct Threshold {
    enum class Type { limit, threshold, both };
    Type type = Type::threshold;
    Track track = Track::by_src;
    int count = 1;
    int seconds = 60;
};

struct DetectionFilter {
    Track track = Track::by_src;
    int count = 1;
    int seconds = 60;
};

struct Rule {
    Action action = Action::alert;
    net::Transport proto = net::Transport::tcp;
    bool any_proto = false; // "ip"
    AddrSpec src, dst;
    PortSpec sport, dport;
    bool bidirectional = false;

    std::optional<Flow> flow;
    std::vector<DetectOption> detect;
    std::optional<Threshold> threshold;
    std::optional<DetectionFilter> detection_filter;

    std::string msg;
    std::uint32_t sid = 0;
    std::uint32_t rev = 1;
    int priority = 3;
    std::string classtype;
    std::vector<std::string> references;
    bool reset_both = false;

    std::optional<int> activates;    // activate rules: group enabled on match
    std::optional<int> activated_by; // dynamic rules: group that enables them
    std::optional<int> active_seconds;
    std::optional<int> active_count;

    std::string text;
    int line = 0;
};

class RuleError : public std::runtime_error {
public:
    RuleError(int line, const std::string& msg)
        : std::runtime_error((line ? "line " + std::to_string(line) + ": " : std::string()) + msg), line(line) {}
    int line;
};

using Variables = std::map<std::string, net::AddressSet>;

} // namespace scada::ids

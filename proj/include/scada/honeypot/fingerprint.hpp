#pragma once

// nmap-os-db fingerprints: "Fingerprint <name>", "Class ...", "CPE ..." and
// test lines NAME(key=value%key=value...). Values are hex numbers, ranges
// "lo-hi", alternations "a|b" or opaque strings such as option encodings.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "scada/bytes.hpp"

namespace scada::honeypot {

class FingerprintError : public std::runtime_error {
public:
    FingerprintError(int line, const std::string& msg)
        : std::runtime_error("fingerprint line " + std::to_string(line) + ": " + msg), line(line) {}
    int line;
};

inline std::optional<std::uint64_t> parse_hex(std::string_view s)
{
    if (s.empty() || s.size() > 16) return std::nullopt;
    std::uint64_t v = 0;
    for (char c : s) {
        int d;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
        else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else return std::nullopt;
        v = v << 4 | static_cast<std::uint64_t>(d);
    }
    return v;
}

/// One alternative of a test value: a hex literal, a hex range, or text.
struct Alternative {
    std::string text;
    std::optional<std::uint64_t> lo, hi; // set for numerics; lo == hi for literals

    bool numeric() const { return lo.has_value(); }
    bool range() const { return lo && hi && *lo != *hi; }
};

struct TestValue {
    std::string raw;
    std::vector<Alternative> alts;

    static TestValue parse(std::string_view raw)
    {
        TestValue v;
        v.raw = std::string(raw);
        std::size_t start = 0;
        while (true) {
            auto bar = raw.find('|', start);
            auto piece = raw.substr(start, bar == std::string_view::npos ? std::string_view::npos : bar - start);
            Alternative a;
            a.text = std::string(piece);
            auto dash = piece.find('-');
            if (dash != std::string_view::npos && dash > 0) {
                auto lo = parse_hex(piece.substr(0, dash));
                auto hi = parse_hex(piece.substr(dash + 1));
                if (lo && hi) {
                    a.lo = std::min(*lo, *hi);
                    a.hi = std::max(*lo, *hi);
                }
            } else if (auto n = parse_hex(piece)) {
                a.lo = a.hi = *n;
            }
            v.alts.push_back(std::move(a));
            if (bar == std::string_view::npos) break;
            start = bar + 1;
        }
        return v;
    }

    /// Concrete number: the first alternative, ranges collapsed to their
    /// midpoint.
    std::optional<std::uint64_t> number() const
    {
        if (alts.empty() || !alts.front().numeric()) return std::nullopt;
        auto& a = alts.front();
        return *a.lo + (*a.hi - *a.lo) / 2;
    }

    /// Concrete text: the first alternative.
    std::string text() const { return alts.empty() ? std::string() : alts.front().text; }
};

using TestBlock = std::map<std::string, TestValue>;

inline const std::vector<std::string>& known_test_blocks()
{
    static const std::vector<std::string> names{"SEQ", "OPS", "WIN", "ECN", "T1", "T2", "T3",
                                                "T4",  "T5",  "T6",  "T7",  "U1", "IE"};
    return names;
}

struct Personality {
    std::string name;
    std::vector<std::string> classes;
    std::vector<std::string> cpe;
    std::map<std::string, TestBlock> tests;
    std::vector<std::string> warnings;

    const TestValue* find(const std::string& block, const std::string& key) const
    {
        auto b = tests.find(block);
        if (b == tests.end()) return nullptr;
        auto k = b->second.find(key);
        return k == b->second.end() ? nullptr : &k->second;
    }
    std::optional<std::uint64_t> number(const std::string& block, const std::string& key) const
    {
        auto* v = find(block, key);
        return v ? v->number() : std::nullopt;
    }
    std::optional<std::string> text(const std::string& block, const std::string& key) const
    {
        auto* v = find(block, key);
        if (!v) return std::nullopt;
        return v->text();
    }
};

namespace detail {

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline TestBlock parse_block_body(std::string_view body, int line)
{
    TestBlock b;
    std::size_t start = 0;
    while (start <= body.size()) {
        auto pct = body.find('%', start);
        auto item = body.substr(start, pct == std::string_view::npos ? std::string_view::npos : pct - start);
        if (!item.empty()) {
            auto eq = item.find('=');
            if (eq == std::string_view::npos || eq == 0)
                throw FingerprintError(line, "test '" + std::string(item) + "' lacks key=value");
            b[std::string(item.substr(0, eq))] = TestValue::parse(item.substr(eq + 1));
        }
        if (pct == std::string_view::npos) break;
        start = pct + 1;
    }
    return b;
}

} // namespace detail

/// Parses every fingerprint in a database. Lines outside an entry that are
/// not directives (comments, wrapped comment tails) are ignored; unknown test
/// blocks inside an entry are skipped with a warning.
inline std::vector<Personality> parse_fingerprints(std::string_view text)
{
    std::vector<Personality> out;
    std::vector<std::pair<int, std::string>> lines;
    {
        int n = 0;
        std::size_t start = 0;
        while (start <= text.size()) {
            auto nl = text.find('\n', start);
            auto l = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
            lines.emplace_back(++n, std::string(detail::trim(l)));
            if (nl == std::string_view::npos) break;
            start = nl + 1;
        }
    }

    Personality* cur = nullptr;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto [ln, l] = lines[i];
        if (l.empty() || l[0] == '#') continue;
        if (l.rfind("Fingerprint ", 0) == 0) {
            out.emplace_back();
            cur = &out.back();
            cur->name = std::string(detail::trim(std::string_view(l).substr(12)));
            continue;
        }
        if (!cur) continue;
        if (l.rfind("Class ", 0) == 0) {
            cur->classes.push_back(std::string(detail::trim(std::string_view(l).substr(6))));
            continue;
        }
        if (l.rfind("CPE ", 0) == 0) {
            cur->cpe.push_back(std::string(detail::trim(std::string_view(l).substr(4))));
            continue;
        }
        if (l.rfind("MatchPoints", 0) == 0) {
            cur = nullptr;
            continue;
        }
        auto open = l.find('(');
        if (open == std::string::npos || open == 0) throw FingerprintError(ln, "expected TEST(...) but got '" + l + "'");
        // test lines may be wrapped; join until the closing parenthesis
        std::string joined = l;
        while (joined.back() != ')') {
            if (++i >= lines.size()) throw FingerprintError(ln, "unterminated test block");
            joined += lines[i].second;
        }
        std::string name = joined.substr(0, open);
        std::string body = joined.substr(open + 1, joined.size() - open - 2);
        auto& known = known_test_blocks();
        if (std::find(known.begin(), known.end(), name) == known.end()) {
            cur->warnings.push_back("line " + std::to_string(ln) + ": unknown test block " + name + " skipped");
            continue;
        }
        cur->tests[name] = detail::parse_block_body(body, ln);
    }
    return out;
}

inline Personality parse_fingerprint(std::string_view text)
{
    auto all = parse_fingerprints(text);
    if (all.empty()) throw FingerprintError(0, "no Fingerprint entry");
    return std::move(all.front());
}

inline const Personality* find_personality(const std::vector<Personality>& db, std::string_view name)
{
    for (auto& p : db)
        if (p.name == name) return &p;
    return nullptr;
}

/// One TCP option from an nmap option string.
struct TcpOption {
    enum class Kind { mss, nop, wscale, sack_permitted, timestamp, eol };
    Kind kind;
    std::uint32_t value = 0;           // mss, wscale
    bool ts_val = false, ts_ecr = false; // timestamp: non-zero fields
    friend bool operator==(const TcpOption&, const TcpOption&) = default;
};

/// Decodes strings such as "M5B4ST11NW7": M<hex> MSS, N NOP, W<hex> window
/// scale, S SACK permitted, T<v><e> timestamp, L end of list.
inline std::vector<TcpOption> decode_option_string(std::string_view s)
{
    std::vector<TcpOption> out;
    std::size_t i = 0;
    auto hex_run = [&] {
        std::size_t j = i;
        while (j < s.size() && parse_hex(s.substr(j, 1))) ++j;
        auto v = parse_hex(s.substr(i, j - i));
        if (!v) throw std::invalid_argument("option string '" + std::string(s) + "': missing number");
        i = j;
        return static_cast<std::uint32_t>(*v);
    };
    while (i < s.size()) {
        char c = s[i++];
        switch (c) {
        case 'M': out.push_back({TcpOption::Kind::mss, hex_run()}); break;
        case 'W': out.push_back({TcpOption::Kind::wscale, hex_run()}); break;
        case 'N': out.push_back({TcpOption::Kind::nop}); break;
        case 'S': out.push_back({TcpOption::Kind::sack_permitted}); break;
        case 'L': out.push_back({TcpOption::Kind::eol}); break;
        case 'T': {
            if (i + 2 > s.size()) throw std::invalid_argument("option string '" + std::string(s) + "': short timestamp");
            TcpOption t{TcpOption::Kind::timestamp};
            t.ts_val = s[i] == '1';
            t.ts_ecr = s[i + 1] == '1';
            i += 2;
            out.push_back(t);
            break;
        }
        default: throw std::invalid_argument("option string '" + std::string(s) + "': unknown option '" + c + "'");
        }
    }
    return out;
}

/// Wire encoding of decoded options (unpadded).
inline Bytes encode_tcp_options(const std::vector<TcpOption>& opts)
{
    Bytes b;
    for (auto& o : opts) {
        switch (o.kind) {
        case TcpOption::Kind::mss:
            b.insert(b.end(), {0x02, 0x04});
            put_be16(b, static_cast<std::uint16_t>(o.value));
            break;
        case TcpOption::Kind::nop: b.push_back(0x01); break;
        case TcpOption::Kind::wscale: b.insert(b.end(), {0x03, 0x03, static_cast<std::uint8_t>(o.value)}); break;
        case TcpOption::Kind::sack_permitted: b.insert(b.end(), {0x04, 0x02}); break;
        case TcpOption::Kind::eol: b.push_back(0x00); break;
        case TcpOption::Kind::timestamp:
            b.insert(b.end(), {0x08, 0x0A});
            put_be32(b, o.ts_val ? 1 : 0);
            put_be32(b, o.ts_ecr ? 1 : 0);
            break;
        }
    }
    return b;
}

/// Parses wire options back (for checking captured SYN-ACKs).
inline std::vector<TcpOption> parse_tcp_options(ByteView b)
{
    std::vector<TcpOption> out;
    std::size_t i = 0;
    while (i < b.size()) {
        std::uint8_t kind = b[i];
        if (kind == 0x00) {
            // trailing zero padding reads as end-of-list
            out.push_back({TcpOption::Kind::eol});
            break;
        }
        if (kind == 0x01) {
            out.push_back({TcpOption::Kind::nop});
            ++i;
            continue;
        }
        if (i + 1 >= b.size() || b[i + 1] < 2 || i + b[i + 1] > b.size()) throw std::invalid_argument("malformed TCP option");
        std::uint8_t len = b[i + 1];
        switch (kind) {
        case 0x02: out.push_back({TcpOption::Kind::mss, read_be16(b, i + 2)}); break;
        case 0x03: out.push_back({TcpOption::Kind::wscale, b[i + 2]}); break;
        case 0x04: out.push_back({TcpOption::Kind::sack_permitted}); break;
        case 0x08: {
            TcpOption t{TcpOption::Kind::timestamp};
            t.ts_val = (b[i + 2] | b[i + 3] | b[i + 4] | b[i + 5]) != 0;
            t.ts_ecr = (b[i + 6] | b[i + 7] | b[i + 8] | b[i + 9]) != 0;
            out.push_back(t);
            break;
        }
        default: break;
        }
        i += len;
    }
    return out;
}

} // namespace scada::honeypot

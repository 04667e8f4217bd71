#pragma once

// Rule text -> Rule. Accepts the canonical snort forms (content:"|00 00|")
// and the rendering found in published Modbus rule listings, where hex
// contents lost their pipes (content:" 00 00 ") and pcre bodies lost their
// backslashes and alternation bars.

#include <cctype>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "scada/ids/rule.hpp"

namespace scada::ids {

namespace detail {

inline std::string trim(std::string_view s)
{
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline long number(std::string_view s, int line, std::string_view what)
{
    auto t = trim(s);
    if (t.empty()) throw RuleError(line, "empty " + std::string(what));
    std::size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(t, &pos, 0);
    } catch (const std::exception&) {
        throw RuleError(line, "bad " + std::string(what) + " '" + t + "'");
    }
    if (pos != t.size()) throw RuleError(line, "bad " + std::string(what) + " '" + t + "'");
    return v;
}

inline std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

/// Splits "a:b; c:"x;y"; d" at semicolons outside quotes.
inline std::vector<std::string> split_options(std::string_view body)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < body.size(); ++i) {
        char c = body[i];
        if (c == '\\' && i + 1 < body.size()) {
            cur += c;
            cur += body[++i];
            continue;
        }
        if (c == '"') quoted = !quoted;
        if (c == ';' && !quoted) {
            if (auto t = trim(cur); !t.empty()) out.push_back(t);
            cur.clear();
            continue;
        }
        cur += c;
    }
    if (auto t = trim(cur); !t.empty()) out.push_back(t);
    return out;
}

/// Strips surrounding quotes and a leading '!'; unescapes \" \\ \;.
inline std::string unquote(std::string_view v, bool& negated, int line)
{
    auto t = trim(v);
    negated = false;
    if (!t.empty() && t[0] == '!') {
        negated = true;
        t = trim(std::string_view(t).substr(1));
    }
    if (t.size() < 2 || t.front() != '"' || t.back() != '"') throw RuleError(line, "expected quoted string, got '" + t + "'");
    std::string out;
    for (std::size_t i = 1; i + 1 < t.size(); ++i) {
        if (t[i] == '\\' && i + 2 < t.size() && (t[i + 1] == '"' || t[i + 1] == '\\' || t[i + 1] == ';')) {
            out += t[++i];
            continue;
        }
        out += t[i];
    }
    return out;
}

inline int hex_digit(char c)
{
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

inline Bytes hex_run(std::string_view s, int line)
{
    Bytes out;
    int pending = -1;
    for (char c : s) {
        if (c == ' ' || c == '\t') continue;
        int d = hex_digit(c);
        if (d < 0) throw RuleError(line, "bad hex digit in content");
        if (pending < 0) {
            pending = d;
        } else {
            out.push_back(static_cast<std::uint8_t>(pending << 4 | d));
            pending = -1;
        }
    }
    if (pending >= 0) throw RuleError(line, "odd hex digit count in content");
    return out;
}

/// A pipe-less string made only of space-separated byte pairs and padded
/// with a space, as printed in listings where the |..| markers were lost.
inline bool looks_like_bare_hex(std::string_view s)
{
    if (s.empty() || (s.front() != ' ' && s.back() != ' ')) return false;
    std::istringstream in{std::string(s)};
    int n = 0;
    for (std::string tok; in >> tok; ++n)
        if (tok.size() != 2 || hex_digit(tok[0]) < 0 || hex_digit(tok[1]) < 0) return false;
    return n > 0;
}

inline Bytes decode_content(std::string_view s, int line)
{
    if (s.find('|') == std::string_view::npos && looks_like_bare_hex(s)) return hex_run(s, line);
    Bytes out;
    bool in_hex = false;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == '|') {
            auto part = s.substr(start, i - start);
            if (in_hex) {
                auto b = hex_run(part, line);
                out.insert(out.end(), b.begin(), b.end());
            } else {
                out.insert(out.end(), part.begin(), part.end());
            }
            if (i < s.size()) in_hex = !in_hex;
            start = i + 1;
        }
    }
    if (in_hex) throw RuleError(line, "unterminated |hex| block in content");
    return out;
}

/// Reads "\xHH" (or "xHH" when the backslash was lost) tokens.
inline Bytes escaped_bytes(std::string_view s, int line)
{
    Bytes out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] == ' ' || s[i] == '\t') {
            ++i;
            continue;
        }
        if (s[i] == '\\') ++i;
        if (i + 2 < s.size() && s[i] == 'x' && hex_digit(s[i + 1]) >= 0 && hex_digit(s[i + 2]) >= 0) {
            out.push_back(static_cast<std::uint8_t>(hex_digit(s[i + 1]) << 4 | hex_digit(s[i + 2])));
            i += 3;
            continue;
        }
        throw RuleError(line, "unsupported pcre byte syntax near '" + std::string(s.substr(i)) + "'");
    }
    return out;
}

inline Pcre parse_pcre(std::string_view value, int line)
{
    Pcre p;
    auto body = unquote(value, p.negated, line);
    p.source = body;
    if (body.size() < 2 || body[0] != '/') throw RuleError(line, "pcre must be /.../flags");
    auto close = body.rfind('/');
    if (close == 0) throw RuleError(line, "pcre must be /.../flags");
    std::string_view re = std::string_view(body).substr(1, close - 1);
    for (char f : std::string_view(body).substr(close + 1)) {
        if (f == 'R') p.relative = true;
        else if (f != 'i' && f != 'A' && f != 's' && f != 'm' && f != 'B')
            throw RuleError(line, std::string("unsupported pcre flag '") + f + "'");
    }

    // [\S\s]{N} prefix (the backslash before S may be missing)
    for (std::string_view any : {"[\\S\\s]", "[S\\s]", "[\\s\\S]"}) {
        if (re.substr(0, any.size()) == any) {
            re.remove_prefix(any.size());
            if (re.empty() || re[0] != '{') throw RuleError(line, "pcre: expected {N} after character class");
            auto rb = re.find('}');
            if (rb == std::string_view::npos) throw RuleError(line, "pcre: unterminated {N}");
            p.skip = static_cast<std::size_t>(number(re.substr(1, rb - 1), line, "pcre repeat"));
            re.remove_prefix(rb + 1);
            break;
        }
    }
    if (re.size() < 2 || re.front() != '(' || re.back() != ')') throw RuleError(line, "unsupported pcre '" + body + "'");
    re = re.substr(1, re.size() - 2);
    if (re.substr(0, 2) == "?!") {
        p.not_followed_by = escaped_bytes(re.substr(2), line);
        if (p.not_followed_by->empty()) throw RuleError(line, "pcre: empty negative lookahead");
        return p;
    }
    std::vector<std::string> alts;
    if (re.find('|') != std::string_view::npos) {
        alts = split(re, '|');
    } else {
        std::istringstream in{std::string(re)};
        for (std::string tok; in >> tok;) alts.push_back(tok);
    }
    for (auto& a : alts) {
        auto b = escaped_bytes(a, line);
        if (b.empty()) throw RuleError(line, "pcre: empty alternative");
        p.alternatives.push_back(std::move(b));
    }
    if (p.alternatives.empty()) throw RuleError(line, "pcre: empty group");
    return p;
}

inline ByteTest parse_byte_test(std::string_view v, int line)
{
    auto f = split(v, ',');
    if (f.size() < 4) throw RuleError(line, "byte_test needs bytes, operator, value, offset");
    ByteTest t;
    t.bytes = static_cast<int>(number(f[0], line, "byte_test size"));
    if (t.bytes < 1 || t.bytes > 4) throw RuleError(line, "byte_test size must be 1..4");
    std::string op = f[1];
    if (!op.empty() && op[0] == '!') {
        t.negated = true;
        op.erase(0, 1);
    }
    if (op == "<" || op == ">" || op == "=" || op == "&" || op == "^") t.op = op[0];
    else if (op == "<=" || op == ">=") {
        t.op = op[0];
        t.or_equal = true;
    } else if (op.empty() && t.negated) t.op = '=';
    else throw RuleError(line, "byte_test: unknown operator '" + f[1] + "'");
    t.value = static_cast<std::uint32_t>(number(f[2], line, "byte_test value"));
    t.offset = static_cast<int>(number(f[3], line, "byte_test offset"));
    for (std::size_t i = 4; i < f.size(); ++i) {
        if (f[i] == "relative") t.relative = true;
        else if (f[i] == "little") t.little = true;
        else if (f[i] == "big") t.little = false;
        else throw RuleError(line, "byte_test: unsupported modifier '" + f[i] + "'");
    }
    return t;
}

inline ByteJump parse_byte_jump(std::string_view v, int line)
{
    auto f = split(v, ',');
    if (f.size() < 2) throw RuleError(line, "byte_jump needs bytes, offset");
    ByteJump j;
    j.bytes = static_cast<int>(number(f[0], line, "byte_jump size"));
    if (j.bytes < 1 || j.bytes > 4) throw RuleError(line, "byte_jump size must be 1..4");
    j.offset = static_cast<int>(number(f[1], line, "byte_jump offset"));
    for (std::size_t i = 2; i < f.size(); ++i) {
        std::istringstream in(f[i]);
        std::string key, val;
        in >> key >> val;
        if (key == "relative") j.relative = true;
        else if (key == "little") j.little = true;
        else if (key == "big") j.little = false;
        else if (key == "from_beginning") j.from_beginning = true;
        else if (key == "post_offset") j.post_offset = static_cast<int>(number(val, line, "post_offset"));
        else if (key == "multiplier") j.multiplier = static_cast<int>(number(val, line, "multiplier"));
        else throw RuleError(line, "byte_jump: unsupported modifier '" + f[i] + "'");
    }
    return j;
}

inline IsDataAt parse_isdataat(std::string_view v, int line)
{
    auto f = split(v, ',');
    IsDataAt d;
    std::string pos = f[0];
    if (!pos.empty() && pos[0] == '!') {
        d.negated = true;
        pos.erase(0, 1);
    }
    d.pos = static_cast<int>(number(pos, line, "isdataat position"));
    for (std::size_t i = 1; i < f.size(); ++i) {
        if (f[i] == "relative") d.relative = true;
        else throw RuleError(line, "isdataat: unsupported modifier '" + f[i] + "'");
    }
    return d;
}

inline Dsize parse_dsize(std::string_view v, int line)
{
    auto t = trim(v);
    Dsize d;
    if (auto r = t.find("<>"); r != std::string::npos) {
        d.cmp = Dsize::Cmp::range;
        d.a = static_cast<int>(number(t.substr(0, r), line, "dsize"));
        d.b = static_cast<int>(number(t.substr(r + 2), line, "dsize"));
    } else if (!t.empty() && t[0] == '>') {
        d.cmp = Dsize::Cmp::gt;
        d.a = static_cast<int>(number(t.substr(1), line, "dsize"));
    } else if (!t.empty() && t[0] == '<') {
        d.cmp = Dsize::Cmp::lt;
        d.a = static_cast<int>(number(t.substr(1), line, "dsize"));
    } else {
        d.a = static_cast<int>(number(t, line, "dsize"));
    }
    return d;
}

inline Flow parse_flow(std::string_view v, int line)
{
    Flow f;
    for (auto& k : split(v, ',')) {
        if (k == "from_client" || k == "to_server") f.from_client = true;
        else if (k == "from_server" || k == "to_client") f.from_client = false;
        else if (k == "established") f.established = true;
        else if (k == "not_established") f.not_established = true;
        else if (k == "stateless") {}
        else throw RuleError(line, "flow: unsupported keyword '" + k + "'");
    }
    return f;
}

/// "type threshold, track by_src, count 3, seconds 60"
template <class Fn>
void keyword_pairs(std::string_view v, int line, Fn&& fn)
{
    for (auto& part : split(v, ',')) {
        std::istringstream in(part);
        std::string key, val, extra;
        in >> key >> val;
        if (key.empty() || val.empty() || (in >> extra)) throw RuleError(line, "expected 'key value', got '" + part + "'");
        fn(key, val);
    }
}

inline Track parse_track(const std::string& v, int line)
{
    if (v == "by_src") return Track::by_src;
    if (v == "by_dst") return Track::by_dst;
    throw RuleError(line, "unknown track '" + v + "'");
}

inline AddrSpec parse_addr(std::string_view tok, const Variables& vars, int line)
{
    AddrSpec a;
    a.text = std::string(tok);
    std::string t(tok);
    if (!t.empty() && t[0] == '!') {
        a.negated = true;
        t.erase(0, 1);
    }
    if (t == "any") {
        a.set = net::AddressSet::all();
        return a;
    }
    std::vector<std::string> items;
    if (!t.empty() && t.front() == '[') {
        if (t.back() != ']') throw RuleError(line, "unterminated address list '" + t + "'");
        items = split(std::string_view(t).substr(1, t.size() - 2), ',');
    } else {
        items.push_back(t);
    }
    a.set = net::AddressSet{};
    for (auto& item : items) {
        if (!item.empty() && item[0] == '$') {
            auto it = vars.find(item.substr(1));
            if (it == vars.end()) throw RuleError(line, "undefined variable " + item);
            if (it->second.any) a.set.any = true;
            a.set.blocks.insert(a.set.blocks.end(), it->second.blocks.begin(), it->second.blocks.end());
            continue;
        }
        auto c = net::Cidr::parse(item);
        if (!c) throw RuleError(line, "bad address '" + item + "'");
        a.set.blocks.push_back(*c);
    }
    return a;
}

inline PortSpec parse_port(std::string_view tok, int line)
{
    PortSpec p;
    std::string t(tok);
    if (t == "any") return p;
    p.any = false;
    if (!t.empty() && t[0] == '!') {
        p.negated = true;
        t.erase(0, 1);
    }
    std::vector<std::string> items;
    if (!t.empty() && t.front() == '[') {
        if (t.back() != ']') throw RuleError(line, "unterminated port list '" + t + "'");
        items = split(std::string_view(t).substr(1, t.size() - 2), ',');
    } else {
        items.push_back(t);
    }
    for (auto& item : items) {
        auto colon = item.find(':');
        long lo = 0, hi = 65535;
        if (colon == std::string::npos) {
            lo = hi = number(item, line, "port");
        } else {
            if (colon > 0) lo = number(item.substr(0, colon), line, "port");
            if (colon + 1 < item.size()) hi = number(item.substr(colon + 1), line, "port");
        }
        if (lo < 0 || hi > 65535 || lo > hi) throw RuleError(line, "bad port '" + item + "'");
        p.ranges.emplace_back(static_cast<std::uint16_t>(lo), static_cast<std::uint16_t>(hi));
    }
    return p;
}

} // namespace detail

inline Rule parse_rule(std::string_view text, const Variables& vars, int line = 0)
{
    using namespace detail;
    Rule r;
    r.text = trim(text);
    r.line = line;
    auto open = r.text.find('(');
    if (open == std::string::npos || r.text.back() != ')') throw RuleError(line, "rule needs a (...) option block");

    std::istringstream hdr(r.text.substr(0, open));
    std::vector<std::string> h;
    for (std::string tok; hdr >> tok;) h.push_back(tok);
    if (h.size() != 7) throw RuleError(line, "rule header needs 7 fields, got " + std::to_string(h.size()));

    static const std::map<std::string, Action> actions{
        {"alert", Action::alert}, {"log", Action::log},       {"pass", Action::pass},
        {"drop", Action::drop},   {"reject", Action::reject}, {"sdrop", Action::sdrop},
        {"activate", Action::activate}, {"dynamic", Action::dynamic}};
    auto act = actions.find(h[0]);
    if (act == actions.end()) throw RuleError(line, "unknown action '" + h[0] + "'");
    r.action = act->second;

    if (h[1] == "tcp") r.proto = net::Transport::tcp;
    else if (h[1] == "udp") r.proto = net::Transport::udp;
    else if (h[1] == "icmp") r.proto = net::Transport::icmp;
    else if (h[1] == "ip") r.any_proto = true;
    else throw RuleError(line, "unknown protocol '" + h[1] + "'");

    r.src = parse_addr(h[2], vars, line);
    r.sport = parse_port(h[3], line);
    if (h[4] == "->") r.bidirectional = false;
    else if (h[4] == "<>") r.bidirectional = true;
    else throw RuleError(line, "direction must be -> or <>");
    r.dst = parse_addr(h[5], vars, line);
    r.dport = parse_port(h[6], line);

    bool have_sid = false;
    auto last_content = [&]() -> Content& {
        if (r.detect.empty() || !std::holds_alternative<Content>(r.detect.back()))
            throw RuleError(line, "content modifier without a preceding content");
        return std::get<Content>(r.detect.back());
    };

    for (auto& opt : split_options(std::string_view(r.text).substr(open + 1, r.text.size() - open - 2))) {
        auto colon = opt.find(':');
        std::string key = trim(opt.substr(0, colon));
        std::string val = colon == std::string::npos ? std::string() : trim(opt.substr(colon + 1));

        if (key == "msg") {
            bool neg;
            r.msg = unquote(val, neg, line);
        } else if (key == "content") {
            Content c;
            c.pattern = decode_content(unquote(val, c.negated, line), line);
            if (c.pattern.empty()) throw RuleError(line, "empty content");
            r.detect.push_back(std::move(c));
        } else if (key == "offset") last_content().offset = static_cast<int>(number(val, line, "offset"));
        else if (key == "depth") last_content().depth = static_cast<int>(number(val, line, "depth"));
        else if (key == "distance") last_content().distance = static_cast<int>(number(val, line, "distance"));
        else if (key == "within") last_content().within = static_cast<int>(number(val, line, "within"));
        else if (key == "nocase") last_content().nocase = true;
        else if (key == "pcre") r.detect.push_back(parse_pcre(val, line));
        else if (key == "byte_test") r.detect.push_back(parse_byte_test(val, line));
        else if (key == "byte_jump") r.detect.push_back(parse_byte_jump(val, line));
        else if (key == "isdataat") r.detect.push_back(parse_isdataat(val, line));
        else if (key == "dsize") r.detect.push_back(parse_dsize(val, line));
        else if (key == "flow") r.flow = parse_flow(val, line);
        else if (key == "threshold") {
            Threshold t;
            bool has_type = false;
            keyword_pairs(val, line, [&](const std::string& k, const std::string& v) {
                if (k == "type") {
                    has_type = true;
                    if (v == "limit") t.type = Threshold::Type::limit;
                    else if (v == "threshold") t.type = Threshold::Type::threshold;
                    else if (v == "both") t.type = Threshold::Type::both;
                    else throw RuleError(line, "threshold: unknown type '" + v + "'");
                } else if (k == "track") t.track = parse_track(v, line);
                else if (k == "count") t.count = static_cast<int>(number(v, line, "count"));
                else if (k == "seconds") t.seconds = static_cast<int>(number(v, line, "seconds"));
                else throw RuleError(line, "threshold: unknown key '" + k + "'");
            });
            if (!has_type) throw RuleError(line, "threshold needs a type");
            if (t.count < 1 || t.seconds < 0) throw RuleError(line, "threshold count/seconds out of range");
            r.threshold = t;
        } else if (key == "detection_filter") {
            DetectionFilter d;
            keyword_pairs(val, line, [&](const std::string& k, const std::string& v) {
                if (k == "track") d.track = parse_track(v, line);
                else if (k == "count") d.count = static_cast<int>(number(v, line, "count"));
                else if (k == "seconds") d.seconds = static_cast<int>(number(v, line, "seconds"));
                else throw RuleError(line, "detection_filter: unknown key '" + k + "'");
            });
            if (d.count < 1 || d.seconds < 0) throw RuleError(line, "detection_filter count/seconds out of range");
            r.detection_filter = d;
        } else if (key == "sid") {
            r.sid = static_cast<std::uint32_t>(number(val, line, "sid"));
            have_sid = true;
        } else if (key == "rev") r.rev = static_cast<std::uint32_t>(number(val, line, "rev"));
        else if (key == "priority") r.priority = static_cast<int>(number(val, line, "priority"));
        else if (key == "classtype") r.classtype = val;
        else if (key == "reference") r.references.push_back(val);
        else if (key == "resp") {
            for (auto& k : split(val, ','))
                if (k == "reset_both" || k == "rst_all") r.reset_both = true;
                else throw RuleError(line, "resp: unsupported response '" + k + "'");
        } else if (key == "activates") r.activates = static_cast<int>(number(val, line, "activates"));
        else if (key == "activated_by") r.activated_by = static_cast<int>(number(val, line, "activated_by"));
        else if (key == "count") r.active_count = static_cast<int>(number(val, line, "count"));
        else if (key == "seconds") r.active_seconds = static_cast<int>(number(val, line, "seconds"));
        else if (key == "metadata" || key == "gid") {}
        else throw RuleError(line, "unknown option '" + key + "'");
    }
    if (!have_sid) throw RuleError(line, "rule without sid");
    if (r.action == Action::activate && !r.activates) throw RuleError(line, "activate rule without activates");
    if (r.action == Action::dynamic && !r.activated_by) throw RuleError(line, "dynamic rule without activated_by");
    if (r.action != Action::dynamic && (r.active_count || r.active_seconds))
        throw RuleError(line, "count/seconds options belong to dynamic rules");
    return r;
}

/// Checks that every dynamic rule has an activate rule for its group.
inline void link_activation(const std::vector<Rule>& rules)
{
    std::set<int> groups;
    for (auto& r : rules)
        if (r.activates) groups.insert(*r.activates);
    for (auto& r : rules)
        if (r.activated_by && !groups.count(*r.activated_by))
            throw RuleError(r.line, "sid " + std::to_string(r.sid) + ": no activate rule for group "
                                        + std::to_string(*r.activated_by));
}

/// One rule per logical line; a rule may span lines until its closing
/// parenthesis. '#' starts a comment line.
inline std::vector<Rule> parse_rules(std::string_view text, const Variables& vars)
{
    std::vector<Rule> rules;
    std::set<std::uint32_t> sids;
    std::istringstream in{std::string(text)};
    std::string raw, pending;
    int line = 0, start_line = 0;
    int depth = 0;
    bool quoted = false;
    while (std::getline(in, raw)) {
        ++line;
        auto t = detail::trim(raw);
        if (pending.empty()) {
            if (t.empty() || t[0] == '#') continue;
            start_line = line;
        }
        if (!t.empty() && t.back() == '\\') t.pop_back();
        pending += (pending.empty() ? "" : " ") + t;
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (t[i] == '\\') {
                ++i;
                continue;
            }
            if (t[i] == '"') quoted = !quoted;
            if (quoted) continue;
            if (t[i] == '(') ++depth;
            if (t[i] == ')') --depth;
        }
        if (depth > 0 || quoted || pending.find('(') == std::string::npos) continue;
        auto r = parse_rule(pending, vars, start_line);
        if (!sids.insert(r.sid).second) throw RuleError(start_line, "duplicate sid " + std::to_string(r.sid));
        rules.push_back(std::move(r));
        pending.clear();
        depth = 0;
    }
    if (!pending.empty()) throw RuleError(start_line, "unterminated rule");
    link_activation(rules);
    return rules;
}

/// $MODBUS_CLIENT / $MODBUS_SERVER and friends for the default address plan.
inline Variables default_variables()
{
    return {
        {"MODBUS_CLIENT", net::AddressSet::of({"10.0.0.0/24", "192.168.100.0/24"})},
        {"MODBUS_SERVER", net::AddressSet::of({"10.0.0.0/24"})},
        {"HOME_NET", net::AddressSet::of({"10.0.0.0/24"})},
        {"EXTERNAL_NET", net::AddressSet::all()},
    };
}

} // namespace scada::ids

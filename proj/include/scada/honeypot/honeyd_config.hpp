#pragma once

// honeyd configuration: create/clone/set/add/bind directives describing
// profiles of fake hosts and the addresses they answer for.

#include <array>
#include <cstdio>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "scada/net/ipv4.hpp"
#include "scada/net/packet.hpp"

namespace scada::honeypot {

class ConfigError : public std::runtime_error {
public:
    ConfigError(int line, const std::string& msg)
        : std::runtime_error("honeyd config line " + std::to_string(line) + ": " + msg), line(line) {}
    int line;
};

/// What an unbound port (or a port bound without a service) does.
enum class PortMode { open, filtered, reset };

inline const char* port_mode_name(PortMode m)
{
    switch (m) {
    case PortMode::open: return "open";
    case PortMode::filtered: return "filtered";
    case PortMode::reset: return "reset";
    }
    return "?";
}

struct PortAction {
    enum class Kind { open, filtered, reset, script, proxy };
    Kind kind = Kind::open;
    std::string command;    // script
    std::string proxy_host; // proxy
    std::uint16_t proxy_port = 0;

    bool answers() const { return kind == Kind::open || kind == Kind::script || kind == Kind::proxy; }
};

using PortKey = std::pair<net::Transport, std::uint16_t>;

struct HoneyNode {
    std::string profile;
    std::string personality;
    PortMode tcp_default = PortMode::reset;
    PortMode udp_default = PortMode::reset;
    PortMode icmp_default = PortMode::open;
    std::map<PortKey, PortAction> ports;
    double droprate_in = 0; // percent
    std::optional<std::array<std::uint8_t, 6>> ethernet;
    std::vector<net::Ipv4> addresses;

    const PortAction* binding(net::Transport t, std::uint16_t port) const
    {
        auto it = ports.find({t, port});
        return it == ports.end() ? nullptr : &it->second;
    }
};

struct HoneydConfig {
    std::map<std::string, HoneyNode> profiles;
    std::vector<std::pair<net::Ipv4, std::string>> bindings; // in file order

    /// Profiles that have at least one bound address, with addresses filled.
    std::vector<HoneyNode> nodes() const
    {
        std::vector<HoneyNode> out;
        for (auto& [name, p] : profiles) {
            HoneyNode n = p;
            n.addresses.clear();
            for (auto& [ip, prof] : bindings)
                if (prof == name) n.addresses.push_back(ip);
            if (!n.addresses.empty()) out.push_back(std::move(n));
        }
        return out;
    }

    const HoneyNode* node_for(net::Ipv4 ip) const
    {
        for (auto& [addr, prof] : bindings)
            if (addr == ip) return &profiles.at(prof);
        return nullptr;
    }
};

namespace detail {

struct Statement {
    int line;
    std::vector<std::string> words;
    std::vector<bool> quoted;
};

/// Splits into statements. Quoted strings may run over line breaks (which
/// become spaces); '#' starts a comment outside quotes.
inline std::vector<Statement> tokenize(std::string_view text)
{
    std::vector<Statement> out;
    Statement cur{1, {}, {}};
    int line = 1;
    std::size_t i = 0;
    auto flush = [&] {
        if (!cur.words.empty()) out.push_back(std::move(cur));
        cur = Statement{line, {}, {}};
    };
    while (i < text.size()) {
        char c = text[i];
        if (c == '\n') {
            ++line;
            ++i;
            flush();
            continue;
        }
        if (c == ' ' || c == '\t' || c == '\r') {
            ++i;
            continue;
        }
        if (c == '#') {
            while (i < text.size() && text[i] != '\n') ++i;
            continue;
        }
        if (cur.words.empty()) cur.line = line;
        if (c == '"') {
            int start_line = line;
            std::string w;
            ++i;
            while (i < text.size() && text[i] != '"') {
                if (text[i] == '\n') {
                    ++line;
                    w += ' ';
                } else if (text[i] != '\r') {
                    w += text[i];
                }
                ++i;
            }
            if (i >= text.size()) throw ConfigError(start_line, "unterminated quoted string");
            ++i;
            cur.words.push_back(std::move(w));
            cur.quoted.push_back(true);
            continue;
        }
        std::string w;
        while (i < text.size() && text[i] != ' ' && text[i] != '\t' && text[i] != '\n' && text[i] != '\r') w += text[i++];
        cur.words.push_back(std::move(w));
        cur.quoted.push_back(false);
    }
    flush();
    return out;
}

inline net::Transport parse_transport(const std::string& s, int line)
{
    if (s == "tcp") return net::Transport::tcp;
    if (s == "udp") return net::Transport::udp;
    if (s == "icmp") return net::Transport::icmp;
    throw ConfigError(line, "unknown protocol '" + s + "'");
}

inline PortMode parse_mode(const std::string& s, int line)
{
    if (s == "open") return PortMode::open;
    if (s == "filtered" || s == "block") return PortMode::filtered;
    if (s == "reset" || s == "closed") return PortMode::reset;
    throw ConfigError(line, "unknown action '" + s + "'");
}

inline std::uint16_t parse_port(const std::string& s, int line)
{
    std::size_t used = 0;
    long v = -1;
    try {
        v = std::stol(s, &used, 10);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || v < 0 || v > 65535) throw ConfigError(line, "port '" + s + "' outside 0..65535");
    return static_cast<std::uint16_t>(v);
}

inline std::array<std::uint8_t, 6> parse_mac(const std::string& s, int line)
{
    std::array<std::uint8_t, 6> m{};
    unsigned v[6];
    char tail;
    if (std::sscanf(s.c_str(), "%2x:%2x:%2x:%2x:%2x:%2x%c", &v[0], &v[1], &v[2], &v[3], &v[4], &v[5], &tail) != 6)
        throw ConfigError(line, "bad ethernet address '" + s + "'");
    for (int k = 0; k < 6; ++k) m[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(v[k]);
    return m;
}

} // namespace detail

inline HoneydConfig parse_honeyd_config(std::string_view text)
{
    HoneydConfig cfg;
    auto profile = [&](const std::string& name, int line) -> HoneyNode& {
        auto it = cfg.profiles.find(name);
        if (it == cfg.profiles.end()) throw ConfigError(line, "unknown profile '" + name + "'");
        return it->second;
    };

    for (auto& st : detail::tokenize(text)) {
        auto& w = st.words;
        int ln = st.line;
        auto need = [&](std::size_t n) {
            if (w.size() < n) throw ConfigError(ln, "incomplete '" + w[0] + "' directive");
        };
        const std::string& verb = w[0];

        if (verb == "create") {
            need(2);
            if (cfg.profiles.count(w[1])) throw ConfigError(ln, "profile '" + w[1] + "' already exists");
            HoneyNode n;
            n.profile = w[1];
            cfg.profiles.emplace(w[1], std::move(n));
        } else if (verb == "clone") {
            need(3);
            if (cfg.profiles.count(w[1])) throw ConfigError(ln, "profile '" + w[1] + "' already exists");
            HoneyNode n = profile(w[2], ln);
            n.profile = w[1];
            cfg.profiles.emplace(w[1], std::move(n));
        } else if (verb == "set") {
            need(3);
            auto& n = profile(w[1], ln);
            const std::string& what = w[2];
            if (what == "default") {
                // set P default tcp action filtered
                need(6);
                if (w[4] != "action") throw ConfigError(ln, "expected 'action'");
                auto t = detail::parse_transport(w[3], ln);
                auto m = detail::parse_mode(w[5], ln);
                if (t == net::Transport::tcp) n.tcp_default = m;
                else if (t == net::Transport::udp) n.udp_default = m;
                else n.icmp_default = m;
            } else if (what == "personality") {
                need(4);
                n.personality = w[3];
            } else if (what == "droprate") {
                need(5);
                if (w[3] != "in") throw ConfigError(ln, "expected 'droprate in'");
                double d;
                try {
                    d = std::stod(w[4]);
                } catch (const std::exception&) {
                    throw ConfigError(ln, "bad droprate '" + w[4] + "'");
                }
                if (d < 0 || d > 100) throw ConfigError(ln, "droprate outside 0..100");
                n.droprate_in = d;
            } else if (what == "ethernet") {
                need(4);
                n.ethernet = detail::parse_mac(w[3], ln);
            } else if (what == "uptime" || what == "uid" || what == "maxfds") {
                // accepted, not modelled
            } else {
                throw ConfigError(ln, "unknown setting '" + what + "'");
            }
        } else if (verb == "add") {
            // add P tcp port N <action>
            need(6);
            auto& n = profile(w[1], ln);
            auto t = detail::parse_transport(w[2], ln);
            if (t == net::Transport::icmp) throw ConfigError(ln, "icmp has no ports");
            if (w[3] != "port") throw ConfigError(ln, "expected 'port'");
            auto port = detail::parse_port(w[4], ln);
            PortAction a;
            if (st.quoted[5]) {
                a.kind = PortAction::Kind::script;
                a.command = w[5];
            } else if (w[5] == "proxy") {
                need(7);
                auto colon = w[6].rfind(':');
                if (colon == std::string::npos) throw ConfigError(ln, "proxy target needs host:port");
                a.kind = PortAction::Kind::proxy;
                a.proxy_host = w[6].substr(0, colon);
                a.proxy_port = detail::parse_port(w[6].substr(colon + 1), ln);
            } else {
                switch (detail::parse_mode(w[5], ln)) {
                case PortMode::open: a.kind = PortAction::Kind::open; break;
                case PortMode::filtered: a.kind = PortAction::Kind::filtered; break;
                case PortMode::reset: a.kind = PortAction::Kind::reset; break;
                }
            }
            if (!n.ports.emplace(PortKey{t, port}, std::move(a)).second)
                throw ConfigError(ln, "duplicate binding for " + w[2] + " port " + w[4]);
        } else if (verb == "bind") {
            need(3);
            auto ip = net::Ipv4::parse(w[1]);
            if (!ip) throw ConfigError(ln, "bad address '" + w[1] + "'");
            profile(w[2], ln);
            for (auto& [addr, prof] : cfg.bindings)
                if (addr == *ip) throw ConfigError(ln, "address " + w[1] + " bound twice");
            cfg.bindings.emplace_back(*ip, w[2]);
        } else {
            throw ConfigError(ln, "unknown directive '" + verb + "'");
        }
    }
    return cfg;
}

} // namespace scada::honeypot

#pragma once

// Probe answers for one honeypot profile. TCP answers follow nmap's test
// classes: T1 (SYN to an open port), ECN, T2..T4 (odd flags to an open
// port), T5..T7 (to a closed port). Each class reads its window, options,
// TTL, DF and flags from the personality; classes the personality lacks fall
// back to a generic stack.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>

#include "scada/honeypot/fingerprint.hpp"
#include "scada/honeypot/honeyd_config.hpp"
#include "scada/net/packet.hpp"

namespace scada::honeypot {

struct Probe {
    net::Transport transport = net::Transport::tcp;
    std::uint16_t dst_port = 0;
    std::uint8_t tcp_flags = net::tcp::SYN;
    std::uint8_t icmp_type = net::icmp::echo_request;
    bool df = false;
};

struct ProbeResponse {
    enum class Kind { none, reset, synack, tcp, icmp_reply, udp_payload };
    Kind kind = Kind::none;
    std::uint8_t tcp_flags = 0;
    std::uint16_t window = 0;
    Bytes options; // wire encoding
    std::uint8_t ttl = 64;
    bool df = false;
    bool dropped = false;               // removed by the drop rate
    const PortAction* service = nullptr; // binding behind an answering port
};

inline const char* kind_name(ProbeResponse::Kind k)
{
    switch (k) {
    case ProbeResponse::Kind::none: return "none";
    case ProbeResponse::Kind::reset: return "reset";
    case ProbeResponse::Kind::synack: return "synack";
    case ProbeResponse::Kind::tcp: return "tcp";
    case ProbeResponse::Kind::icmp_reply: return "icmp-reply";
    case ProbeResponse::Kind::udp_payload: return "udp-payload";
    }
    return "?";
}

/// nmap flag letters: E U A P R S F.
inline std::uint8_t decode_flag_letters(std::string_view s)
{
    std::uint8_t f = 0;
    for (char c : s) {
        switch (c) {
        case 'E': f |= net::tcp::ECE; break;
        case 'U': f |= net::tcp::URG; break;
        case 'A': f |= net::tcp::ACK; break;
        case 'P': f |= net::tcp::PSH; break;
        case 'R': f |= net::tcp::RST; break;
        case 'S': f |= net::tcp::SYN; break;
        case 'F': f |= net::tcp::FIN; break;
        default: break;
        }
    }
    return f;
}

/// Concrete reply parameters for one probe class.
struct ReplyShape {
    bool responds = true;
    std::uint8_t flags = 0;
    std::uint16_t window = 0;
    Bytes options;
    std::uint8_t ttl = 64;
    bool df = true;
};

class Responder {
public:
    Responder(HoneyNode node, std::optional<Personality> personality, std::uint64_t seed = 1)
        : node_(std::move(node)), personality_(std::move(personality)), rng_(seed)
    {
        for (auto* cls : {"T1", "ECN", "T2", "T3", "T4", "T5", "T6", "T7"}) shapes_[cls] = concretize(cls);
        echo_ = concretize_echo();
        unreachable_ = concretize_unreachable();
    }

    const HoneyNode& node() const { return node_; }
    const std::optional<Personality>& personality() const { return personality_; }
    const ReplyShape& shape(const std::string& cls) const { return shapes_.at(cls); }
    std::uint64_t dropped() const { return dropped_; }

    ProbeResponse respond(const Probe& p)
    {
        ProbeResponse r;
        if (node_.droprate_in > 0) {
            std::bernoulli_distribution drop(node_.droprate_in / 100.0);
            if (drop(rng_)) {
                ++dropped_;
                r.dropped = true;
                return r;
            }
        }
        switch (p.transport) {
        case net::Transport::tcp: return tcp(p);
        case net::Transport::udp: return udp(p);
        case net::Transport::icmp: return icmp(p);
        }
        return r;
    }

    /// Port state as a scanner would classify it.
    PortMode port_state(net::Transport t, std::uint16_t port) const
    {
        if (auto* b = node_.binding(t, port)) {
            switch (b->kind) {
            case PortAction::Kind::filtered: return PortMode::filtered;
            case PortAction::Kind::reset: return PortMode::reset;
            default: return PortMode::open;
            }
        }
        return t == net::Transport::tcp ? node_.tcp_default : node_.udp_default;
    }

private:
    ProbeResponse from_shape(const ReplyShape& s) const
    {
        ProbeResponse r;
        if (!s.responds) return r;
        r.tcp_flags = s.flags;
        r.window = s.window;
        r.options = s.options;
        r.ttl = s.ttl;
        r.df = s.df;
        if (s.flags & net::tcp::RST) r.kind = ProbeResponse::Kind::reset;
        else if ((s.flags & (net::tcp::SYN | net::tcp::ACK)) == (net::tcp::SYN | net::tcp::ACK))
            r.kind = ProbeResponse::Kind::synack;
        else r.kind = ProbeResponse::Kind::tcp;
        return r;
    }

    ProbeResponse tcp(const Probe& p) const
    {
        using namespace net::tcp;
        auto state = port_state(net::Transport::tcp, p.dst_port);
        if (state == PortMode::filtered) return {};
        std::uint8_t f = p.tcp_flags;
        const char* cls = nullptr;
        if (state == PortMode::open) {
            if ((f & (SYN | ACK | FIN | PSH | URG | RST)) == SYN) cls = (f & (ECE | CWR)) == (ECE | CWR) ? "ECN" : "T1";
            else if (f == 0) cls = "T2";
            else if ((f & SYN) && (f & (FIN | PSH | URG))) cls = "T3";
            else if ((f & (ACK | SYN | RST | FIN)) == ACK) cls = "T4";
            else return {};
        } else {
            if (f & RST) return {};
            if ((f & (SYN | ACK)) == SYN) cls = "T5";
            else if ((f & (ACK | SYN | FIN)) == ACK) cls = "T6";
            else cls = "T7";
        }
        auto r = from_shape(shapes_.at(cls));
        if (state == PortMode::open) r.service = node_.binding(net::Transport::tcp, p.dst_port);
        return r;
    }

    ProbeResponse udp(const Probe& p) const
    {
        ProbeResponse r;
        switch (port_state(net::Transport::udp, p.dst_port)) {
        case PortMode::filtered: return r;
        case PortMode::open:
            r.kind = ProbeResponse::Kind::udp_payload;
            r.ttl = echo_.ttl;
            r.df = echo_.df;
            r.service = node_.binding(net::Transport::udp, p.dst_port);
            return r;
        case PortMode::reset:
            if (!unreachable_.responds) return r;
            r.kind = ProbeResponse::Kind::reset;
            r.ttl = unreachable_.ttl;
            r.df = unreachable_.df;
            return r;
        }
        return r;
    }

    ProbeResponse icmp(const Probe& p) const
    {
        ProbeResponse r;
        if (p.icmp_type != net::icmp::echo_request || node_.icmp_default != PortMode::open) return r;
        r.kind = ProbeResponse::Kind::icmp_reply;
        r.ttl = echo_.ttl;
        r.df = echo_dfi_ == "S" ? p.df : echo_dfi_ == "O" ? !p.df : echo_dfi_ == "Y";
        return r;
    }

    std::uint8_t ttl_of(const std::string& block) const
    {
        if (!personality_) return 64;
        if (auto t = personality_->number(block, "T")) return static_cast<std::uint8_t>(*t);
        if (auto t = personality_->number(block, "TG")) return static_cast<std::uint8_t>(*t);
        return 64;
    }

    static ReplyShape generic(const std::string& cls)
    {
        using namespace net::tcp;
        ReplyShape s;
        if (cls == "T1" || cls == "ECN") {
            s.flags = SYN | ACK;
            s.window = 64240;
            s.options = {0x02, 0x04, 0x05, 0xB4, 0x04, 0x02, 0x01, 0x03, 0x03, 0x07};
        } else if (cls == "T2" || cls == "T7") {
            s.responds = false;
        } else if (cls == "T3") {
            s.flags = SYN | ACK;
            s.window = 64240;
        } else if (cls == "T5") {
            s.flags = RST | ACK;
        } else {
            s.flags = RST;
        }
        return s;
    }

    ReplyShape concretize(const std::string& cls) const
    {
        if (!personality_ || !personality_->tests.count(cls)) return generic(cls);
        const auto& P = *personality_;
        ReplyShape s;
        if (auto r = P.text(cls, "R"); r && *r == "N") {
            s.responds = false;
            return s;
        }
        s.flags = decode_flag_letters(P.text(cls, "F").value_or(cls == "ECN" ? "AS" : ""));
        if (cls == "ECN" && !P.find(cls, "F")) s.flags = net::tcp::SYN | net::tcp::ACK;
        if (auto w = P.number(cls, "W")) s.window = static_cast<std::uint16_t>(*w);
        else if (cls == "T1") s.window = static_cast<std::uint16_t>(P.number("WIN", "W1").value_or(0));
        std::optional<std::string> ops = P.text(cls, "O");
        if (!ops && cls == "T1") ops = P.text("OPS", "O1");
        if (ops && !ops->empty()) s.options = encode_tcp_options(decode_option_string(*ops));
        s.ttl = ttl_of(cls);
        s.df = P.text(cls, "DF").value_or("N") == "Y";
        return s;
    }

    ReplyShape concretize_echo()
    {
        ReplyShape s;
        s.ttl = ttl_of("IE");
        if (personality_) echo_dfi_ = personality_->text("IE", "DFI").value_or("N");
        s.df = echo_dfi_ == "Y";
        return s;
    }

    ReplyShape concretize_unreachable() const
    {
        ReplyShape s;
        if (!personality_ || !personality_->tests.count("U1")) return s;
        if (auto r = personality_->text("U1", "R"); r && *r == "N") s.responds = false;
        s.ttl = ttl_of("U1");
        s.df = personality_->text("U1", "DF").value_or("N") == "Y";
        return s;
    }

    HoneyNode node_;
    std::optional<Personality> personality_;
    std::mt19937_64 rng_;
    std::map<std::string, ReplyShape> shapes_;
    ReplyShape echo_, unreachable_;
    std::string echo_dfi_ = "N";
    std::uint64_t dropped_ = 0;
};

} // namespace scada::honeypot

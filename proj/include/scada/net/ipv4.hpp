#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace scada::net {

class Ipv4 {
public:
    constexpr Ipv4() = default;
    constexpr explicit Ipv4(std::uint32_t v) : v_(v) {}
    constexpr Ipv4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d)
        : v_(std::uint32_t(a) << 24 | std::uint32_t(b) << 16 | std::uint32_t(c) << 8 | d) {}

    constexpr std::uint32_t value() const { return v_; }
    constexpr std::uint8_t octet(int i) const { return static_cast<std::uint8_t>(v_ >> (24 - 8 * i)); }

    static std::optional<Ipv4> parse(std::string_view s)
    {
        std::uint32_t v = 0;
        int parts = 0;
        std::size_t i = 0;
        while (parts < 4) {
            if (i >= s.size() || s[i] < '0' || s[i] > '9') return std::nullopt;
            unsigned o = 0;
            std::size_t digits = 0;
            while (i < s.size() && s[i] >= '0' && s[i] <= '9') {
                o = o * 10 + unsigned(s[i] - '0');
                ++i;
                if (++digits > 3) return std::nullopt;
            }
            if (o > 255) return std::nullopt;
            v = v << 8 | o;
            ++parts;
            if (parts < 4) {
                if (i >= s.size() || s[i] != '.') return std::nullopt;
                ++i;
            }
        }
        if (i != s.size()) return std::nullopt;
        return Ipv4(v);
    }
    static Ipv4 must(std::string_view s)
    {
        auto a = parse(s);
        if (!a) throw std::invalid_argument("bad IPv4 address '" + std::string(s) + "'");
        return *a;
    }

    std::string str() const
    {
        return std::to_string(octet(0)) + "." + std::to_string(octet(1)) + "." + std::to_string(octet(2)) + "."
               + std::to_string(octet(3));
    }

    friend constexpr auto operator<=>(const Ipv4&, const Ipv4&) = default;

private:
    std::uint32_t v_ = 0;
};

struct Cidr {
    Ipv4 base;
    int prefix = 32;

    bool contains(Ipv4 a) const
    {
        if (prefix == 0) return true;
        std::uint32_t mask = prefix == 32 ? 0xFFFFFFFFu : ~((1u << (32 - prefix)) - 1);
        return (a.value() & mask) == (base.value() & mask);
    }

    static std::optional<Cidr> parse(std::string_view s)
    {
        auto slash = s.find('/');
        auto ip = Ipv4::parse(s.substr(0, slash));
        if (!ip) return std::nullopt;
        int p = 32;
        if (slash != std::string_view::npos) {
            auto rest = s.substr(slash + 1);
            if (rest.empty() || rest.size() > 2) return std::nullopt;
            p = 0;
            for (char c : rest) {
                if (c < '0' || c > '9') return std::nullopt;
                p = p * 10 + (c - '0');
            }
            if (p > 32) return std::nullopt;
        }
        return Cidr{*ip, p};
    }

    std::string str() const { return base.str() + "/" + std::to_string(prefix); }
};

/// Union of CIDR blocks; `any` matches everything.
struct AddressSet {
    bool any = false;
    std::vector<Cidr> blocks;

    bool contains(Ipv4 a) const
    {
        if (any) return true;
        for (auto& b : blocks)
            if (b.contains(a)) return true;
        return false;
    }
    bool empty() const { return !any && blocks.empty(); }

    static AddressSet all() { return {true, {}}; }
    static AddressSet of(std::initializer_list<const char*> cidrs)
    {
        AddressSet s;
        for (auto* c : cidrs) {
            auto b = Cidr::parse(c);
            if (!b) throw std::invalid_argument(std::string("bad CIDR '") + c + "'");
            s.blocks.push_back(*b);
        }
        return s;
    }
};

struct Endpoint {
    Ipv4 ip;
    std::uint16_t port = 0;

    std::string str() const { return ip.str() + ":" + std::to_string(port); }
    friend auto operator<=>(const Endpoint&, const Endpoint&) = default;

    /// "host:port"
    static std::optional<Endpoint> parse(std::string_view s)
    {
        auto colon = s.rfind(':');
        if (colon == std::string_view::npos) return std::nullopt;
        auto ip = Ipv4::parse(s.substr(0, colon));
        if (!ip) return std::nullopt;
        auto ps = s.substr(colon + 1);
        if (ps.empty() || ps.size() > 5) return std::nullopt;
        unsigned p = 0;
        for (char c : ps) {
            if (c < '0' || c > '9') return std::nullopt;
            p = p * 10 + unsigned(c - '0');
        }
        if (p > 65535) return std::nullopt;
        return Endpoint{*ip, static_cast<std::uint16_t>(p)};
    }
};

} // namespace scada::net

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace scada {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline std::uint16_t read_be16(ByteView b, std::size_t at)
{
    return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}

inline void put_be16(Bytes& out, std::uint16_t v)
{
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

inline void put_be32(Bytes& out, std::uint32_t v)
{
    put_be16(out, static_cast<std::uint16_t>(v >> 16));
    put_be16(out, static_cast<std::uint16_t>(v & 0xFFFF));
}

inline void put_le16(Bytes& out, std::uint16_t v)
{
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_le32(Bytes& out, std::uint32_t v)
{
    put_le16(out, static_cast<std::uint16_t>(v & 0xFFFF));
    put_le16(out, static_cast<std::uint16_t>(v >> 16));
}

/// Parses whitespace-separated hex pairs ("00 01 0A") or a packed string
/// ("00010A"). Throws std::invalid_argument on odd digit counts or non-hex.
inline Bytes from_hex(std::string_view text)
{
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    Bytes out;
    int pending = -1;
    for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            if (pending >= 0) throw std::invalid_argument("hex: dangling nibble");
            continue;
        }
        int n = nibble(c);
        if (n < 0) throw std::invalid_argument(std::string("hex: bad digit '") + c + "'");
        if (pending < 0) {
            pending = n;
        } else {
            out.push_back(static_cast<std::uint8_t>(pending << 4 | n));
            pending = -1;
        }
    }
    if (pending >= 0) throw std::invalid_argument("hex: dangling nibble");
    return out;
}

inline std::string to_hex(ByteView b, char sep = ' ')
{
    static constexpr char digits[] = "0123456789ABCDEF";
    std::string s;
    s.reserve(b.size() * 3);
    for (std::size_t i = 0; i < b.size(); ++i) {
        if (i && sep) s.push_back(sep);
        s.push_back(digits[b[i] >> 4]);
        s.push_back(digits[b[i] & 0xF]);
    }
    return s;
}

inline std::int16_t as_signed(std::uint16_t v) { return static_cast<std::int16_t>(v); }
inline std::uint16_t as_unsigned(std::int16_t v) { return static_cast<std::uint16_t>(v); }

} // namespace scada

#pragma once

#include <chrono>
#include <cstdint>
#include <string>

#include "scada/bytes.hpp"
#include "scada/net/ipv4.hpp"

namespace scada::net {

using Timestamp = std::chrono::microseconds;

enum class Transport : std::uint8_t { tcp = 6, udp = 17, icmp = 1 };

inline const char* transport_name(Transport t)
{
    switch (t) {
    case Transport::tcp: return "TCP";
    case Transport::udp: return "UDP";
    case Transport::icmp: return "ICMP";
    }
    return "?";
}

namespace tcp {
inline constexpr std::uint8_t FIN = 0x01;
inline constexpr std::uint8_t SYN = 0x02;
inline constexpr std::uint8_t RST = 0x04;
inline constexpr std::uint8_t PSH = 0x08;
inline constexpr std::uint8_t ACK = 0x10;
inline constexpr std::uint8_t URG = 0x20;
inline constexpr std::uint8_t ECE = 0x40;
inline constexpr std::uint8_t CWR = 0x80;
} // namespace tcp

namespace icmp {
inline constexpr std::uint8_t echo_reply = 0;
inline constexpr std::uint8_t unreachable = 3;
inline constexpr std::uint8_t echo_request = 8;
inline constexpr std::uint8_t port_unreachable = 3;
} // namespace icmp

/// One packet as seen on the wire between two simulated endpoints.
struct PacketRecord {
    Timestamp ts{0};
    Endpoint src;
    Endpoint dst;
    Transport transport = Transport::tcp;

    // tcp
    std::uint8_t flags = 0;
    std::uint32_t seq = 0;
    std::uint32_t ack = 0;
    std::uint16_t window = 64240;
    Bytes tcp_options;

    // icmp
    std::uint8_t icmp_type = 0;
    std::uint8_t icmp_code = 0;

    // ip
    std::uint8_t ttl = 64;
    bool df = true;

    // connection tracking
    bool new_connection = false; // first packet of a flow (iptables state NEW)
    bool established = false;    // after the three-way handshake
    bool from_client = true;     // sent by the side that opened the flow

    Bytes payload;

    std::string summary() const { return src.str() + " -> " + dst.str(); }
};

} // namespace scada::net

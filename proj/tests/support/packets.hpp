#pragma once

// Hand-built packet records for feeding the signature engine directly.

#include <string>

#include "scada/bytes.hpp"
#include "scada/net/packet.hpp"

namespace testpk {

using scada::Bytes;
using scada::net::Endpoint;
using scada::net::Ipv4;
using scada::net::PacketRecord;

inline Endpoint ep(const char* ip, std::uint16_t port) { return {Ipv4::must(ip), port}; }

/// Established TCP data segment. `from_client` tells the flow tracker who
/// opened the connection.
inline PacketRecord segment(Endpoint src, Endpoint dst, Bytes payload, bool from_client, long long ts_us = 0)
{
    PacketRecord p;
    p.ts = std::chrono::microseconds(ts_us);
    p.src = src;
    p.dst = dst;
    p.transport = scada::net::Transport::tcp;
    p.flags = scada::net::tcp::PSH | scada::net::tcp::ACK;
    p.established = true;
    p.from_client = from_client;
    p.payload = std::move(payload);
    return p;
}

inline const Endpoint master_ep = ep("10.0.0.3", 40100);
inline const Endpoint slave_ep = ep("10.0.0.4", 502);
inline const Endpoint stranger_ep = ep("172.16.0.9", 40200);

inline PacketRecord to_slave(std::string_view hex, Endpoint from = master_ep, long long ts = 0)
{
    return segment(from, slave_ep, scada::from_hex(hex), true, ts);
}

inline PacketRecord from_slave(std::string_view hex, Endpoint to = master_ep, long long ts = 0)
{
    return segment(slave_ep, to, scada::from_hex(hex), false, ts);
}

} // namespace testpk

#pragma once

// Classic libpcap capture files with synthesized Ethernet/IPv4/TCP|UDP|ICMP
// headers around each simulated packet.

#include <algorithm>
#include <array>
#include <exception>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "scada/bytes.hpp"
#include "scada/net/packet.hpp"
#include "scada/util/bounded_queue.hpp"

namespace scada::net {

inline constexpr std::uint32_t kPcapMagic = 0xA1B2C3D4;
inline constexpr std::uint32_t kPcapSnaplen = 65535;
inline constexpr std::uint32_t kLinktypeEthernet = 1;

/// 2015-07-16T00:00:00Z, the epoch simulated timestamps are offset from.
inline constexpr std::int64_t kCaptureEpochSeconds = 1437004800;

using Mac = std::array<std::uint8_t, 6>;

/// Locally administered MAC derived from the address.
inline Mac mac_for(Ipv4 ip) { return {0x02, 0x00, ip.octet(0), ip.octet(1), ip.octet(2), ip.octet(3)}; }

inline std::uint16_t inet_checksum(ByteView data, std::uint32_t sum = 0)
{
    for (std::size_t i = 0; i + 1 < data.size(); i += 2) sum += std::uint32_t(data[i]) << 8 | data[i + 1];
    if (data.size() % 2) sum += std::uint32_t(data.back()) << 8;
    while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
    return static_cast<std::uint16_t>(~sum);
}

inline std::uint32_t pseudo_header_sum(Ipv4 src, Ipv4 dst, std::uint8_t proto, std::size_t len)
{
    std::uint32_t s = 0;
    s += src.value() >> 16;
    s += src.value() & 0xFFFF;
    s += dst.value() >> 16;
    s += dst.value() & 0xFFFF;
    s += proto;
    s += static_cast<std::uint32_t>(len);
    return s;
}

/// Ethernet frame for one record. `ip_id` fills the IPv4 identification field.
inline Bytes encode_frame(const PacketRecord& r, std::uint16_t ip_id, const Mac& src_mac, const Mac& dst_mac)
{
    Bytes l4;
    switch (r.transport) {
    case Transport::tcp: {
        Bytes opts = r.tcp_options;
        while (opts.size() % 4) opts.push_back(0x00);
        std::size_t hlen = 20 + opts.size();
        put_be16(l4, r.src.port);
        put_be16(l4, r.dst.port);
        put_be32(l4, r.seq);
        put_be32(l4, r.ack);
        l4.push_back(static_cast<std::uint8_t>((hlen / 4) << 4));
        l4.push_back(r.flags);
        put_be16(l4, r.window);
        put_be16(l4, 0); // checksum
        put_be16(l4, 0); // urgent
        l4.insert(l4.end(), opts.begin(), opts.end());
        l4.insert(l4.end(), r.payload.begin(), r.payload.end());
        auto ck = inet_checksum(l4, pseudo_header_sum(r.src.ip, r.dst.ip, 6, l4.size()));
        l4[16] = static_cast<std::uint8_t>(ck >> 8);
        l4[17] = static_cast<std::uint8_t>(ck);
        break;
    }
    case Transport::udp: {
        put_be16(l4, r.src.port);
        put_be16(l4, r.dst.port);
        put_be16(l4, static_cast<std::uint16_t>(8 + r.payload.size()));
        put_be16(l4, 0);
        l4.insert(l4.end(), r.payload.begin(), r.payload.end());
        auto ck = inet_checksum(l4, pseudo_header_sum(r.src.ip, r.dst.ip, 17, l4.size()));
        if (ck == 0) ck = 0xFFFF;
        l4[6] = static_cast<std::uint8_t>(ck >> 8);
        l4[7] = static_cast<std::uint8_t>(ck);
        break;
    }
    case Transport::icmp: {
        l4.push_back(r.icmp_type);
        l4.push_back(r.icmp_code);
        put_be16(l4, 0);
        put_be16(l4, r.src.port); // identifier
        put_be16(l4, r.dst.port); // sequence
        l4.insert(l4.end(), r.payload.begin(), r.payload.end());
        auto ck = inet_checksum(l4);
        l4[2] = static_cast<std::uint8_t>(ck >> 8);
        l4[3] = static_cast<std::uint8_t>(ck);
        break;
    }
    }

    Bytes ip;
    ip.push_back(0x45);
    ip.push_back(0x00);
    put_be16(ip, static_cast<std::uint16_t>(20 + l4.size()));
    put_be16(ip, ip_id);
    put_be16(ip, r.df ? 0x4000 : 0x0000);
    ip.push_back(r.ttl);
    ip.push_back(static_cast<std::uint8_t>(r.transport));
    put_be16(ip, 0);
    put_be32(ip, r.src.ip.value());
    put_be32(ip, r.dst.ip.value());
    auto ck = inet_checksum(ip);
    ip[10] = static_cast<std::uint8_t>(ck >> 8);
    ip[11] = static_cast<std::uint8_t>(ck);

    Bytes frame(dst_mac.begin(), dst_mac.end());
    frame.insert(frame.end(), src_mac.begin(), src_mac.end());
    put_be16(frame, 0x0800);
    frame.insert(frame.end(), ip.begin(), ip.end());
    frame.insert(frame.end(), l4.begin(), l4.end());
    return frame;
}

inline Bytes pcap_global_header()
{
    Bytes h;
    put_le32(h, kPcapMagic);
    put_le16(h, 2);
    put_le16(h, 4);
    put_le32(h, 0); // thiszone
    put_le32(h, 0); // sigfigs
    put_le32(h, kPcapSnaplen);
    put_le32(h, kLinktypeEthernet);
    return h;
}

/// Synchronous writer; owns the file.
class PcapFile {
public:
    explicit PcapFile(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc)
    {
        if (!out_) throw std::runtime_error("cannot open capture file " + path);
        auto h = pcap_global_header();
        out_.write(reinterpret_cast<const char*>(h.data()), std::streamsize(h.size()));
    }

    void set_mac(Ipv4 ip, const Mac& mac) { macs_[ip] = mac; }

    void write(const PacketRecord& r)
    {
        auto frame = encode_frame(r, ip_id_++, mac(r.src.ip), mac(r.dst.ip));
        std::uint32_t incl = std::min<std::uint32_t>(static_cast<std::uint32_t>(frame.size()), kPcapSnaplen);
        std::int64_t us = r.ts.count();
        Bytes rec;
        put_le32(rec, static_cast<std::uint32_t>(kCaptureEpochSeconds + us / 1000000));
        put_le32(rec, static_cast<std::uint32_t>(us % 1000000));
        put_le32(rec, incl);
        put_le32(rec, static_cast<std::uint32_t>(frame.size()));
        out_.write(reinterpret_cast<const char*>(rec.data()), std::streamsize(rec.size()));
        out_.write(reinterpret_cast<const char*>(frame.data()), incl);
        if (!out_) throw std::runtime_error("capture write failed");
        ++count_;
    }

    void flush() { out_.flush(); }
    std::size_t count() const { return count_; }

private:
    Mac mac(Ipv4 ip) const
    {
        auto it = macs_.find(ip);
        return it == macs_.end() ? mac_for(ip) : it->second;
    }

    std::ofstream out_;
    std::map<Ipv4, Mac> macs_;
    std::uint16_t ip_id_ = 1;
    std::size_t count_ = 0;
};

/// Capture writer running on its own thread, fed through a bounded queue.
class PcapWriter {
public:
    explicit PcapWriter(const std::string& path, std::size_t capacity = 4096)
        : file_(path), queue_(capacity), worker_([this] { drain(); }) {}

    PcapWriter(const PcapWriter&) = delete;
    PcapWriter& operator=(const PcapWriter&) = delete;
    ~PcapWriter()
    {
        try {
            close();
        } catch (...) {
        }
    }

    /// Call before the first write().
    void set_mac(Ipv4 ip, const Mac& mac) { file_.set_mac(ip, mac); }

    void write(PacketRecord r) { queue_.push(std::move(r)); }

    /// Drains pending records and closes the file. Rethrows a writer error.
    void close()
    {
        if (!worker_.joinable()) return;
        queue_.close();
        worker_.join();
        file_.flush();
        if (error_) std::rethrow_exception(std::exchange(error_, nullptr));
    }

    std::size_t count() const { return file_.count(); }

private:
    void drain()
    {
        try {
            while (auto r = queue_.pop()) file_.write(*r);
        } catch (...) {
            error_ = std::current_exception();
            queue_.close();
        }
    }

    PcapFile file_;
    util::BoundedQueue<PacketRecord> queue_;
    std::exception_ptr error_;
    std::thread worker_;
};

struct PcapRecord {
    std::uint32_t ts_sec = 0;
    std::uint32_t ts_usec = 0;
    std::uint32_t orig_len = 0;
    Bytes data;
};

struct PcapContents {
    std::uint32_t magic = 0;
    std::uint16_t version_major = 0;
    std::uint16_t version_minor = 0;
    std::uint32_t snaplen = 0;
    std::uint32_t linktype = 0;
    std::vector<PcapRecord> records;
};

inline PcapContents read_pcap(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    Bytes buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto le32 = [&](std::size_t at) {
        return std::uint32_t(buf[at]) | std::uint32_t(buf[at + 1]) << 8 | std::uint32_t(buf[at + 2]) << 16
               | std::uint32_t(buf[at + 3]) << 24;
    };
    auto le16 = [&](std::size_t at) { return static_cast<std::uint16_t>(buf[at] | buf[at + 1] << 8); };
    if (buf.size() < 24) throw std::runtime_error(path + ": truncated pcap header");
    PcapContents c;
    c.magic = le32(0);
    c.version_major = le16(4);
    c.version_minor = le16(6);
    c.snaplen = le32(16);
    c.linktype = le32(20);
    std::size_t at = 24;
    while (at < buf.size()) {
        if (at + 16 > buf.size()) throw std::runtime_error(path + ": truncated record header");
        PcapRecord r;
        r.ts_sec = le32(at);
        r.ts_usec = le32(at + 4);
        std::uint32_t incl = le32(at + 8);
        r.orig_len = le32(at + 12);
        at += 16;
        if (at + incl > buf.size()) throw std::runtime_error(path + ": truncated record");
        r.data.assign(buf.begin() + std::ptrdiff_t(at), buf.begin() + std::ptrdiff_t(at + incl));
        at += incl;
        c.records.push_back(std::move(r));
    }
    return c;
}

} // namespace scada::net

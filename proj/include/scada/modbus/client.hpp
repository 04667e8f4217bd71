#pragma once

// Request builders, response readers and a request/response exchange over a
// simulated TCP stream.

#include <optional>
#include <vector>

#include "scada/modbus/codec.hpp"
#include "scada/sim/network.hpp"

namespace scada::modbus {

inline Pdu read_request(std::uint8_t function, std::uint16_t addr, std::uint16_t qty)
{
    Pdu p{function, {}};
    put_be16(p.payload, addr);
    put_be16(p.payload, qty);
    return p;
}

inline Pdu write_registers_request(std::uint16_t addr, const std::vector<std::uint16_t>& values)
{
    Pdu p{fc::write_multiple_registers, {}};
    put_be16(p.payload, addr);
    put_be16(p.payload, static_cast<std::uint16_t>(values.size()));
    p.payload.push_back(static_cast<std::uint8_t>(values.size() * 2));
    for (auto v : values) put_be16(p.payload, v);
    return p;
}

inline Pdu write_register_request(std::uint16_t addr, std::uint16_t value)
{
    Pdu p{fc::write_single_register, {}};
    put_be16(p.payload, addr);
    put_be16(p.payload, value);
    return p;
}

inline Pdu write_coil_request(std::uint16_t addr, bool on)
{
    Pdu p{fc::write_single_coil, {}};
    put_be16(p.payload, addr);
    put_be16(p.payload, on ? 0xFF00 : 0x0000);
    return p;
}

inline Pdu write_coils_request(std::uint16_t addr, const std::vector<std::uint16_t>& bits)
{
    Pdu p{fc::write_multiple_coils, {}};
    put_be16(p.payload, addr);
    put_be16(p.payload, static_cast<std::uint16_t>(bits.size()));
    Bytes packed((bits.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    p.payload.push_back(static_cast<std::uint8_t>(packed.size()));
    p.payload.insert(p.payload.end(), packed.begin(), packed.end());
    return p;
}

/// Values from a read response (bits as 0/1), or nothing if the response
/// does not fit the request.
inline std::optional<std::vector<std::uint16_t>> read_values(const Pdu& resp, std::uint8_t function, std::uint16_t qty)
{
    if (resp.function_code != function || resp.payload.empty()) return std::nullopt;
    std::size_t n = resp.payload[0];
    if (resp.payload.size() != 1 + n) return std::nullopt;
    std::vector<std::uint16_t> out;
    bool bits = function == fc::read_coils || function == fc::read_discrete_inputs;
    if (bits) {
        if (n != (qty + 7u) / 8) return std::nullopt;
        for (std::uint16_t i = 0; i < qty; ++i) out.push_back((resp.payload[1 + i / 8] >> (i % 8)) & 1);
    } else {
        if (n != qty * 2u) return std::nullopt;
        for (std::uint16_t i = 0; i < qty; ++i) out.push_back(read_be16(resp.payload, 1 + 2u * i));
    }
    return out;
}

struct Exchange {
    enum class Status { ok, exception, timeout, closed };
    Status status = Status::timeout;
    std::optional<Pdu> response;
    std::uint8_t exception_code = 0;
    bool ok() const { return status == Status::ok; }
};

inline const char* exchange_name(Exchange::Status s)
{
    switch (s) {
    case Exchange::Status::ok: return "ok";
    case Exchange::Status::exception: return "exception";
    case Exchange::Status::timeout: return "timeout";
    case Exchange::Status::closed: return "closed";
    }
    return "?";
}

/// Client side of one Modbus/TCP connection: keeps a receive buffer across
/// exchanges and skips responses whose transaction id does not match.
class ClientChannel {
public:
    ClientChannel(sim::Scheduler& sched, sim::Stream s) : sched_(sched), stream_(std::move(s)) {}

    bool open() const { return stream_.open(); }
    sim::Stream& stream() { return stream_; }
    void close() { stream_.close(); }

    sim::Task<Exchange> exchange(std::uint8_t unit, Pdu req, sim::Duration timeout)
    {
        std::uint16_t tid = next_tid_++;
        stream_.send(encode_adu(make_adu(tid, unit, std::move(req))));
        co_return co_await await_reply(tid, timeout);
    }

    /// Sends raw bytes as one segment.
    void send_raw(Bytes b) { stream_.send(std::move(b)); }

    sim::Task<Exchange> await_reply(std::optional<std::uint16_t> tid, sim::Duration timeout)
    {
        auto& sched = sched_;
        sim::Time deadline = sched.now() + timeout;
        while (true) {
            while (buf_.size() >= 6) {
                std::size_t frame = 6 + std::size_t(read_be16(buf_, 4));
                if (buf_.size() < frame) break;
                auto d = decode_adu(ByteView(buf_).first(frame));
                buf_.erase(buf_.begin(), buf_.begin() + std::ptrdiff_t(frame));
                if (!d.adu || (tid && d.adu->header.transaction_id != *tid)) continue;
                Exchange e;
                e.response = d.adu->pdu;
                if (d.adu->pdu.is_exception()) {
                    e.status = Exchange::Status::exception;
                    e.exception_code = d.adu->pdu.payload.empty() ? 0 : d.adu->pdu.payload[0];
                } else {
                    e.status = Exchange::Status::ok;
                }
                co_return e;
            }
            if (sched.now() >= deadline) co_return Exchange{Exchange::Status::timeout, std::nullopt, 0};
            auto m = co_await stream_.recv(deadline - sched.now());
            if (m.status == sim::Mailbox<Bytes>::Status::timeout) co_return Exchange{Exchange::Status::timeout, std::nullopt, 0};
            if (m.status == sim::Mailbox<Bytes>::Status::closed) co_return Exchange{Exchange::Status::closed, std::nullopt, 0};
            buf_.insert(buf_.end(), m.item->begin(), m.item->end());
        }
    }

    /// Next raw segment, for callers that speak something other than MBAP.
    auto recv_raw(sim::Duration timeout) { return stream_.recv(timeout); }

    std::uint16_t next_transaction() const { return next_tid_; }
    void set_next_transaction(std::uint16_t t) { next_tid_ = t; }

private:
    sim::Scheduler& sched_;
    sim::Stream stream_;
    Bytes buf_;
    std::uint16_t next_tid_ = 1;
};

} // namespace scada::modbus

#pragma once

// Modbus server logic over a DataTable: function dispatch, diagnostics,
// listen-only mode, device identity. Transport-free; the simulated network
// and the TCP server both feed it raw segments.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scada/data_table.hpp"
#include "scada/modbus/codec.hpp"

namespace scada::slave {

using modbus::Adu;
using modbus::Pdu;

struct Identity {
    std::string vendor = "Testbed Automation";
    std::string product = "SoftPLC-MB";
    std::string revision = "1.0.4";
    Bytes server_info = {'T', 'A', '-', 'M', 'B', '1', 0x00, 0xFF};
};

struct Counters {
    std::uint32_t bus_messages = 0;
    std::uint32_t exceptions = 0;
    std::uint32_t no_response = 0;
};

struct SlaveState {
    bool listen_only = false;
    Counters counters;
    Identity identity;
};

/// What to do with one received segment.
struct SegmentOutcome {
    std::vector<Bytes> replies;
    bool close = false;
    std::size_t requests = 0;  // frames accepted as requests
    std::size_t dropped = 0;   // frames ignored (bad CRC, bad length, ...)
};

inline constexpr std::uint16_t kMaxReadRegisters = 125;
inline constexpr std::uint16_t kMaxReadBits = 2000;
inline constexpr std::uint16_t kMaxWriteRegisters = 123;
inline constexpr std::uint16_t kMaxWriteBits = 1968;

class SlaveNode {
public:
    explicit SlaveNode(DataTable& table, Identity id = {}) : table_(table) { state_.identity = std::move(id); }

    SlaveState& state() { return state_; }
    const SlaveState& state() const { return state_; }
    DataTable& table() { return table_; }

    /// Function dispatch without the listen-only filter. nullopt means the
    /// request produces no response at all.
    std::optional<Pdu> handle_pdu(const Pdu& req)
    {
        namespace fc = modbus::fc;
        auto& p = req.payload;
        auto ex = [&](std::uint8_t code) {
            ++state_.counters.exceptions;
            return modbus::make_exception(req.function_code, code);
        };

        switch (req.function_code) {
        case fc::read_coils:
        case fc::read_discrete_inputs:
        case fc::read_holding_registers:
        case fc::read_input_registers: {
            if (p.size() != 4) return ex(modbus::exc::illegal_data_value);
            auto addr = read_be16(p, 0), qty = read_be16(p, 2);
            bool bits = req.function_code <= fc::read_discrete_inputs;
            if (qty < 1 || qty > (bits ? kMaxReadBits : kMaxReadRegisters)) return ex(modbus::exc::illegal_data_value);
            if (std::size_t(addr) + qty > DataTable::kSize) return ex(modbus::exc::illegal_data_address);
            Space space = req.function_code == fc::read_coils             ? Space::coils
                          : req.function_code == fc::read_discrete_inputs ? Space::discrete_inputs
                          : req.function_code == fc::read_holding_registers ? Space::holding_registers
                                                                            : Space::input_registers;
            auto values = table_.read(space, addr, qty);
            Pdu resp{req.function_code, {}};
            if (bits) {
                Bytes packed((qty + 7) / 8, 0);
                for (std::size_t i = 0; i < qty; ++i)
                    if (values[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
                resp.payload.push_back(static_cast<std::uint8_t>(packed.size()));
                resp.payload.insert(resp.payload.end(), packed.begin(), packed.end());
            } else {
                resp.payload.push_back(static_cast<std::uint8_t>(qty * 2));
                for (auto v : values) put_be16(resp.payload, v);
            }
            return resp;
        }
        case fc::write_single_coil: {
            if (p.size() != 4) return ex(modbus::exc::illegal_data_value);
            auto addr = read_be16(p, 0), v = read_be16(p, 2);
            if (v != 0xFF00 && v != 0x0000) return ex(modbus::exc::illegal_data_value);
            table_.write(Space::coils, addr, {static_cast<std::uint16_t>(v ? 1 : 0)}, Access::modbus);
            return req;
        }
        case fc::write_single_register: {
            if (p.size() != 4) return ex(modbus::exc::illegal_data_value);
            table_.write(Space::holding_registers, read_be16(p, 0), {read_be16(p, 2)}, Access::modbus);
            return req;
        }
        case fc::write_multiple_coils: {
            if (p.size() < 5) return ex(modbus::exc::illegal_data_value);
            auto addr = read_be16(p, 0), qty = read_be16(p, 2);
            std::size_t count = p[4];
            if (qty < 1 || qty > kMaxWriteBits || count != (qty + 7u) / 8 || p.size() != 5 + count)
                return ex(modbus::exc::illegal_data_value);
            if (std::size_t(addr) + qty > DataTable::kSize) return ex(modbus::exc::illegal_data_address);
            std::vector<std::uint16_t> values(qty);
            for (std::size_t i = 0; i < qty; ++i) values[i] = (p[5 + i / 8] >> (i % 8)) & 1;
            table_.write(Space::coils, addr, values, Access::modbus);
            return Pdu{req.function_code, Bytes(p.begin(), p.begin() + 4)};
        }
        case fc::write_multiple_registers: {
            if (p.size() < 5) return ex(modbus::exc::illegal_data_value);
            auto addr = read_be16(p, 0), qty = read_be16(p, 2);
            std::size_t count = p[4];
            if (qty < 1 || qty > kMaxWriteRegisters || count != qty * 2u || p.size() != 5 + count)
                return ex(modbus::exc::illegal_data_value);
            if (std::size_t(addr) + qty > DataTable::kSize) return ex(modbus::exc::illegal_data_address);
            std::vector<std::uint16_t> values(qty);
            for (std::size_t i = 0; i < qty; ++i) values[i] = read_be16(p, 5 + 2 * i);
            table_.write(Space::holding_registers, addr, values, Access::modbus);
            return Pdu{req.function_code, Bytes(p.begin(), p.begin() + 4)};
        }
        case fc::diagnostics: {
            if (p.size() < 2) return ex(modbus::exc::illegal_data_value);
            switch (read_be16(p, 0)) {
            case modbus::diag::restart_communications:
                state_.listen_only = false;
                return req;
            case modbus::diag::force_listen_only:
                state_.listen_only = true;
                return std::nullopt;
            case modbus::diag::clear_counters:
                state_.counters = {};
                return req;
            default:
                return ex(modbus::exc::illegal_function);
            }
        }
        case fc::report_server_id: {
            auto& info = state_.identity.server_info;
            Pdu resp{req.function_code, {static_cast<std::uint8_t>(info.size())}};
            resp.payload.insert(resp.payload.end(), info.begin(), info.end());
            return resp;
        }
        case fc::encapsulated_interface: {
            if (p.size() != 3 || p[0] != 0x0E) return ex(modbus::exc::illegal_function);
            if (p[1] < 1 || p[1] > 4) return ex(modbus::exc::illegal_data_value);
            auto& id = state_.identity;
            const std::string* objs[] = {&id.vendor, &id.product, &id.revision};
            Pdu resp{req.function_code, {0x0E, p[1], 0x01, 0x00, 0x00, 0x03}};
            for (std::uint8_t i = 0; i < 3; ++i) {
                resp.payload.push_back(i);
                resp.payload.push_back(static_cast<std::uint8_t>(objs[i]->size()));
                resp.payload.insert(resp.payload.end(), objs[i]->begin(), objs[i]->end());
            }
            return resp;
        }
        default:
            return ex(modbus::exc::illegal_function);
        }
    }

    /// Full request handling: counters, listen-only, echoing transaction and
    /// unit ids. Requests carrying an exception-range function code are not
    /// requests and are ignored.
    std::optional<Adu> handle_request(const Adu& req)
    {
        ++state_.counters.bus_messages;
        if (req.pdu.function_code >= 0x80) {
            ++state_.counters.no_response;
            return std::nullopt;
        }
        if (state_.listen_only) {
            // Only a restart leaves listen-only mode, and even that stays silent.
            auto& p = req.pdu.payload;
            if (req.pdu.function_code == modbus::fc::diagnostics && p.size() >= 2
                && read_be16(p, 0) == modbus::diag::restart_communications)
                state_.listen_only = false;
            ++state_.counters.no_response;
            return std::nullopt;
        }
        auto resp = handle_pdu(req.pdu);
        if (!resp) {
            ++state_.counters.no_response;
            return std::nullopt;
        }
        return modbus::make_adu(req.header.transaction_id, req.header.unit_id, std::move(*resp));
    }

    /// Busy reply for a request that could not be queued.
    static std::optional<Bytes> busy_reply(ByteView segment)
    {
        auto d = modbus::decode_adu(segment);
        if (!d.ok() || d.nonzero_protocol || d.adu->pdu.function_code >= 0x80) return std::nullopt;
        return modbus::encode_adu(modbus::make_adu(d.adu->header.transaction_id, d.adu->header.unit_id,
                                                   modbus::make_exception(d.adu->pdu.function_code,
                                                                          modbus::exc::server_busy)));
    }

    /// One received TCP segment. Several well-formed ADUs back to back are
    /// split; MBAP frames with a wrong length are dropped; RTU-encapsulated
    /// frames are recognised by shape and dropped on a bad CRC; anything else
    /// closes the connection.
    SegmentOutcome handle_segment(ByteView seg)
    {
        SegmentOutcome out;
        while (!seg.empty()) {
            if (seg.size() >= modbus::kMbapSize + 1 && read_be16(seg, 2) == 0) {
                std::size_t frame = 6 + std::size_t(read_be16(seg, 4));
                if (frame < seg.size() && frame >= modbus::kMbapSize + 1 && looks_like_adu(seg.subspan(frame))) {
                    handle_one(seg.first(frame), out);
                    seg = seg.subspan(frame);
                    continue;
                }
            }
            handle_one(seg, out);
            break;
        }
        return out;
    }

private:
    static bool looks_like_adu(ByteView rest)
    {
        return rest.size() >= modbus::kMbapSize + 1 && read_be16(rest, 2) == 0;
    }

    void handle_one(ByteView seg, SegmentOutcome& out)
    {
        auto d = modbus::decode_adu(seg);
        if (d.ok() && !d.nonzero_protocol) {
            ++out.requests;
            if (auto r = handle_request(*d.adu)) out.replies.push_back(modbus::encode_adu(*r));
            return;
        }
        if (modbus::looks_like_rtu(seg)) {
            auto rtu = modbus::decode_rtu(seg);
            if (!rtu->crc_ok) {
                ++out.dropped;
                return;
            }
            ++out.requests;
            Adu as_adu = modbus::make_adu(0, rtu->frame.unit_id, rtu->frame.pdu);
            if (auto r = handle_request(as_adu)) out.replies.push_back(modbus::encode_rtu(r->header.unit_id, r->pdu));
            return;
        }
        if (d.status == modbus::DecodeStatus::length_mismatch && !d.nonzero_protocol) {
            ++out.dropped;
            return;
        }
        out.close = true;
    }

    DataTable& table_;
    SlaveState state_;
};

} // namespace scada::slave

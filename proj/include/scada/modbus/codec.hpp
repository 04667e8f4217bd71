#pragma once

// Modbus TCP application data units, exception PDUs and the RTU-encapsulated
// framing (unit + PDU + CRC-16, no MBAP) carried over the same TCP port.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>

#include "scada/bytes.hpp"

namespace scada::modbus {

inline constexpr std::size_t kMbapSize = 7;
inline constexpr std::size_t kMaxPduSize = 253;
inline constexpr std::size_t kMaxPayload = kMaxPduSize - 1;

namespace fc {
inline constexpr std::uint8_t read_coils = 0x01;
inline constexpr std::uint8_t read_discrete_inputs = 0x02;
inline constexpr std::uint8_t read_holding_registers = 0x03;
inline constexpr std::uint8_t read_input_registers = 0x04;
inline constexpr std::uint8_t write_single_coil = 0x05;
inline constexpr std::uint8_t write_single_register = 0x06;
inline constexpr std::uint8_t diagnostics = 0x08;
inline constexpr std::uint8_t write_multiple_coils = 0x0F;
inline constexpr std::uint8_t write_multiple_registers = 0x10;
inline constexpr std::uint8_t report_server_id = 0x11;
inline constexpr std::uint8_t encapsulated_interface = 0x2B;
} // namespace fc

namespace diag {
inline constexpr std::uint16_t restart_communications = 0x0001;
inline constexpr std::uint16_t force_listen_only = 0x0004;
inline constexpr std::uint16_t clear_counters = 0x000A;
} // namespace diag

namespace exc {
inline constexpr std::uint8_t illegal_function = 0x01;
inline constexpr std::uint8_t illegal_data_address = 0x02;
inline constexpr std::uint8_t illegal_data_value = 0x03;
inline constexpr std::uint8_t acknowledge = 0x05;
inline constexpr std::uint8_t server_busy = 0x06;
} // namespace exc

/// Functions the slave answers without an exception.
inline constexpr std::array<std::uint8_t, 11> kSupportedFunctions{
    0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x08, 0x0F, 0x10, 0x11, 0x2B};

inline constexpr bool is_supported_function(std::uint8_t f)
{
    for (auto s : kSupportedFunctions)
        if (s == f) return true;
    return false;
}

/// 0x00 and anything with the exception bit set can never be a request.
inline constexpr bool is_valid_request_function(std::uint8_t f) { return f != 0 && f < 0x80; }

struct MbapHeader {
    std::uint16_t transaction_id = 0;
    std::uint16_t protocol_id = 0;
    std::uint16_t length = 0;
    std::uint8_t unit_id = 0;

    friend bool operator==(const MbapHeader&, const MbapHeader&) = default;
};

struct Pdu {
    std::uint8_t function_code = 0;
    Bytes payload;

    std::size_t size() const { return 1 + payload.size(); }
    bool is_exception() const { return function_code & 0x80; }

    friend bool operator==(const Pdu&, const Pdu&) = default;
};

struct Adu {
    MbapHeader header;
    Pdu pdu;

    friend bool operator==(const Adu&, const Adu&) = default;
};

class CodecError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline Adu make_adu(std::uint16_t transaction_id, std::uint8_t unit_id, Pdu pdu)
{
    Adu a;
    a.header.transaction_id = transaction_id;
    a.header.unit_id = unit_id;
    a.header.length = static_cast<std::uint16_t>(1 + pdu.size());
    a.pdu = std::move(pdu);
    return a;
}

/// Lays out transaction, protocol, length, unit, function, payload. The
/// length field is recomputed from the PDU.
inline Bytes encode_adu(const Adu& adu)
{
    if (adu.pdu.payload.size() > kMaxPayload)
        throw CodecError("payload-too-long: " + std::to_string(adu.pdu.payload.size()) + " bytes");
    if (adu.header.protocol_id != 0)
        throw CodecError("protocol_id must be 0");
    Bytes out;
    out.reserve(kMbapSize + adu.pdu.size());
    put_be16(out, adu.header.transaction_id);
    put_be16(out, 0);
    put_be16(out, static_cast<std::uint16_t>(1 + adu.pdu.size()));
    out.push_back(adu.header.unit_id);
    out.push_back(adu.pdu.function_code);
    out.insert(out.end(), adu.pdu.payload.begin(), adu.pdu.payload.end());
    return out;
}

enum class DecodeStatus { ok, too_short, length_mismatch };

/// Outcome of decoding one TCP segment as an ADU. Malformed-but-parseable
/// frames keep their parsed ADU: the IDS and the slave both need them.
struct DecodeResult {
    DecodeStatus status = DecodeStatus::too_short;
    std::optional<Adu> adu;
    std::uint16_t declared_length = 0;
    std::size_t actual_length = 0; // bytes after the length field
    bool nonzero_protocol = false;
    bool invalid_function = false;
    bool oversize = false;

    bool ok() const { return status == DecodeStatus::ok; }
};

inline DecodeResult decode_adu(ByteView bytes)
{
    DecodeResult r;
    if (bytes.size() < kMbapSize + 1) return r;

    Adu a;
    a.header.transaction_id = read_be16(bytes, 0);
    a.header.protocol_id = read_be16(bytes, 2);
    a.header.length = read_be16(bytes, 4);
    a.header.unit_id = bytes[6];
    a.pdu.function_code = bytes[7];
    a.pdu.payload.assign(bytes.begin() + 8, bytes.end());

    r.declared_length = a.header.length;
    r.actual_length = bytes.size() - 6;
    r.nonzero_protocol = a.header.protocol_id != 0;
    r.invalid_function = !is_valid_request_function(a.pdu.function_code);
    r.oversize = a.pdu.size() > kMaxPduSize;
    r.status = r.declared_length == r.actual_length ? DecodeStatus::ok : DecodeStatus::length_mismatch;
    r.adu = std::move(a);
    return r;
}

inline Pdu make_exception(std::uint8_t request_function, std::uint8_t exception_code)
{
    if (request_function >= 0x80) throw CodecError("exception for a function code >= 0x80");
    return Pdu{static_cast<std::uint8_t>(request_function + 0x80), {exception_code}};
}

/// CRC-16/MODBUS: init 0xFFFF, reflected poly 0xA001, no final xor.
inline std::uint16_t crc16_modbus(ByteView bytes)
{
    static const auto table = [] {
        std::array<std::uint16_t, 256> t{};
        for (unsigned i = 0; i < 256; ++i) {
            std::uint16_t c = static_cast<std::uint16_t>(i);
            for (int k = 0; k < 8; ++k) c = (c & 1) ? static_cast<std::uint16_t>((c >> 1) ^ 0xA001) : static_cast<std::uint16_t>(c >> 1);
            t[i] = c;
        }
        return t;
    }();
    std::uint16_t crc = 0xFFFF;
    for (auto b : bytes) crc = static_cast<std::uint16_t>((crc >> 8) ^ table[(crc ^ b) & 0xFF]);
    return crc;
}

struct RtuFrame {
    std::uint8_t unit_id = 0;
    Pdu pdu;
    std::uint16_t crc = 0;

    friend bool operator==(const RtuFrame&, const RtuFrame&) = default;
};

/// unit + PDU + CRC (low byte first). `corrupt_crc` flips every CRC bit.
inline Bytes encode_rtu(std::uint8_t unit_id, const Pdu& pdu, bool corrupt_crc = false)
{
    Bytes out;
    out.push_back(unit_id);
    out.push_back(pdu.function_code);
    out.insert(out.end(), pdu.payload.begin(), pdu.payload.end());
    std::uint16_t crc = crc16_modbus(out);
    if (corrupt_crc) crc ^= 0xFFFF;
    put_le16(out, crc);
    return out;
}

/// Expected total length of an RTU request frame from its first bytes, or
/// nullopt when the function code gives no way to know.
inline std::optional<std::size_t> rtu_request_length(ByteView b)
{
    if (b.size() < 2) return std::nullopt;
    switch (b[1]) {
    case fc::read_coils:
    case fc::read_discrete_inputs:
    case fc::read_holding_registers:
    case fc::read_input_registers:
    case fc::write_single_coil:
    case fc::write_single_register:
    case fc::diagnostics:
        return 8;
    case fc::write_multiple_coils:
    case fc::write_multiple_registers:
        if (b.size() < 7) return std::nullopt;
        return 9 + static_cast<std::size_t>(b[6]);
    case fc::report_server_id:
        return 4;
    default:
        return std::nullopt;
    }
}

struct RtuDecode {
    RtuFrame frame;
    bool crc_ok = false;
};

inline std::optional<RtuDecode> decode_rtu(ByteView b)
{
    if (b.size() < 4) return std::nullopt;
    RtuDecode d;
    d.frame.unit_id = b[0];
    d.frame.pdu.function_code = b[1];
    d.frame.pdu.payload.assign(b.begin() + 2, b.end() - 2);
    d.frame.crc = static_cast<std::uint16_t>(b[b.size() - 2] | (b[b.size() - 1] << 8));
    d.crc_ok = crc16_modbus(b.first(b.size() - 2)) == d.frame.crc;
    return d;
}

/// A segment whose MBAP length does not fit but whose size matches a known
/// RTU request shape.
inline bool looks_like_rtu(ByteView b)
{
    if (b.size() >= kMbapSize + 1 && read_be16(b, 2) == 0 && read_be16(b, 4) == b.size() - 6)
        return false;
    auto len = rtu_request_length(b);
    return len && *len == b.size();
}

} // namespace scada::modbus

#include <gtest/gtest.h>

#include <random>

#include "../support/oracles.hpp"
#include "scada/modbus/client.hpp"
#include "scada/modbus/codec.hpp"

using namespace scada;
using namespace scada::modbus;

TEST(Codec, EncodesReadHoldingRequest)
{
    auto bytes = encode_adu(make_adu(1, 1, read_request(fc::read_holding_registers, 42210, 1)));
    EXPECT_EQ(to_hex(bytes), "00 01 00 00 00 06 01 03 A4 E2 00 01");
}

TEST(Codec, EncodesWriteMultipleRegisters)
{
    auto bytes = encode_adu(make_adu(7, 1, write_registers_request(32210, {0xFFFB})));
    EXPECT_EQ(to_hex(bytes), "00 07 00 00 00 09 01 10 7D D2 00 01 02 FF FB");
}

TEST(Codec, RejectsOversizePayload)
{
    Pdu big{fc::write_multiple_registers, Bytes(kMaxPayload + 1, 0)};
    EXPECT_THROW(encode_adu(make_adu(1, 1, big)), CodecError);
    Pdu fits{fc::write_multiple_registers, Bytes(kMaxPayload, 0)};
    EXPECT_NO_THROW(encode_adu(make_adu(1, 1, fits)));
}

TEST(Codec, RejectsNonzeroProtocolOnEncode)
{
    auto a = make_adu(1, 1, read_request(fc::read_coils, 0, 1));
    a.header.protocol_id = 5;
    EXPECT_THROW(encode_adu(a), CodecError);
}

TEST(Codec, ShortInputIsTooShort)
{
    EXPECT_EQ(decode_adu(from_hex("00 01 00 00 00 02 01")).status, DecodeStatus::too_short);
    EXPECT_EQ(decode_adu(Bytes{}).status, DecodeStatus::too_short);
}

TEST(Codec, FlagsNonzeroProtocolAndBadFunction)
{
    auto r = decode_adu(from_hex("00 01 12 34 00 02 01 00"));
    ASSERT_TRUE(r.ok());
    EXPECT_TRUE(r.nonzero_protocol);
    EXPECT_TRUE(r.invalid_function);
    auto e = decode_adu(from_hex("00 01 00 00 00 03 01 83 02"));
    EXPECT_TRUE(e.invalid_function);
}

TEST(Codec, LengthMismatchKeepsParsedFrame)
{
    auto r = decode_adu(from_hex("00 01 00 00 00 08 01 10 7D D2 00 01 02 FF FB"));
    EXPECT_EQ(r.status, DecodeStatus::length_mismatch);
    EXPECT_EQ(r.declared_length, 8);
    EXPECT_EQ(r.actual_length, 9u);
    ASSERT_TRUE(r.adu);
    EXPECT_EQ(r.adu->pdu.function_code, fc::write_multiple_registers);
}

TEST(Codec, ExceptionResponse)
{
    auto p = make_exception(fc::read_holding_registers, exc::illegal_data_address);
    EXPECT_EQ(p.function_code, 0x83);
    EXPECT_EQ(p.payload, Bytes{0x02});
    EXPECT_THROW(make_exception(0x83, 1), CodecError);
}

TEST(Codec, CrcKnownVector)
{
    // 01 03 00 00 00 0A -> C5 CD on the wire
    auto msg = from_hex("01 03 00 00 00 0A");
    EXPECT_EQ(crc16_modbus(msg), 0xCDC5);
    auto rtu = encode_rtu(1, Pdu{0x03, from_hex("00 00 00 0A")});
    EXPECT_EQ(to_hex(rtu), "01 03 00 00 00 0A C5 CD");
}

TEST(Codec, CrcMatchesBitSerialReference)
{
    std::mt19937_64 rng(11);
    for (int i = 0; i < 2000; ++i) {
        Bytes m(std::uniform_int_distribution<std::size_t>(0, 64)(rng));
        for (auto& b : m) b = static_cast<std::uint8_t>(rng());
        ASSERT_EQ(crc16_modbus(m), oracle::crc16_modbus(m)) << to_hex(m);
    }
}

TEST(Codec, RtuRoundTripAndCorruption)
{
    Pdu p{fc::write_multiple_registers, from_hex("7D D2 00 01 02 00 03")};
    auto good = encode_rtu(1, p);
    auto d = decode_rtu(good);
    ASSERT_TRUE(d);
    EXPECT_TRUE(d->crc_ok);
    EXPECT_EQ(d->frame.pdu.payload, p.payload);
    EXPECT_TRUE(looks_like_rtu(good));

    auto bad = encode_rtu(1, p, true);
    auto db = decode_rtu(bad);
    ASSERT_TRUE(db);
    EXPECT_FALSE(db->crc_ok);
}

TEST(Codec, RtuRequestLengthByShape)
{
    EXPECT_EQ(rtu_request_length(from_hex("01 03 00 00 00 01 84 0A")), 8u);
    EXPECT_EQ(rtu_request_length(from_hex("01 10 7D D2 00 01 02 00 03 AA BB")), 11u);
    EXPECT_FALSE(looks_like_rtu(from_hex("00 01 00 00 00 06 01 03 A4 E2 00 01")));
}

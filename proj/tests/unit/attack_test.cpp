#include <gtest/gtest.h>

#include <set>

#include "scada/attack/modpoll.hpp"
#include "scada/attack/scenarios.hpp"

using namespace scada;
using namespace scada::attack;

TEST(Modpoll, ZeroBasedWriteOfSignedValue)
{
    auto a = parse_modpoll("-0 -r 32210 10.0.0.5 -- -200");
    EXPECT_TRUE(a.zero_based);
    EXPECT_EQ(a.address(), 32210);
    ASSERT_EQ(a.values, std::vector<long>{-200});
    auto pdu = a.request();
    EXPECT_EQ(pdu.function_code, modbus::fc::write_multiple_registers);
    EXPECT_EQ(to_hex(pdu.payload), "7D D2 00 01 02 FF 38");
}

TEST(Modpoll, OneBasedReadDefaults)
{
    auto a = parse_modpoll("-r 42211 -c 2 10.0.0.5");
    EXPECT_EQ(a.address(), 42210);
    EXPECT_FALSE(a.writing());
    EXPECT_EQ(to_hex(a.request().payload), "A4 E2 00 02");
    EXPECT_EQ(a.host, "10.0.0.5");
}

TEST(Modpoll, NegativeValueNeedsSeparator)
{
    EXPECT_THROW(parse_modpoll("-0 -r 32210 10.0.0.5 -1x"), ModpollError);
    auto a = parse_modpoll("-0 -r 32210 10.0.0.5 -1");
    EXPECT_TRUE(a.single_poll); // "-1" is the single-poll flag, not a value
    EXPECT_FALSE(a.writing());
}

TEST(Modpoll, CoilWriteAndLimits)
{
    auto a = parse_modpoll("-0 -t 0 -r 30 10.0.0.5 1");
    EXPECT_EQ(a.request().function_code, modbus::fc::write_single_coil);
    EXPECT_THROW(parse_modpoll("-t 0 -r 30 10.0.0.5 2"), ModpollError);
    EXPECT_THROW(parse_modpoll("-t 3 -r 1 10.0.0.5 5"), ModpollError);
    EXPECT_THROW(parse_modpoll("-r 0 10.0.0.5"), ModpollError);
    EXPECT_THROW(parse_modpoll("-0 -r 65535 -c 2 10.0.0.5"), ModpollError);
    EXPECT_THROW(parse_modpoll("-m rtu 10.0.0.5"), ModpollError);
    EXPECT_THROW(parse_modpoll("-r 1"), ModpollError);
    EXPECT_THROW(parse_modpoll("-0 -r 1 10.0.0.5 70000"), ModpollError);
}

TEST(Modpoll, EncapsulatedFraming)
{
    auto a = parse_modpoll("-m enc -t 3 -0 -r 32210 -1 -o 0.01 --bad-crc 10.0.0.5");
    EXPECT_EQ(a.framing, Framing::enc);
    EXPECT_TRUE(a.bad_crc);
    EXPECT_EQ(a.timeout, std::chrono::milliseconds(10));
    EXPECT_EQ(a.request().function_code, modbus::fc::read_input_registers);
}

TEST(Catalog, FifteenScenariosWithAlarmColumn)
{
    auto& cat = scenario_catalog();
    ASSERT_EQ(cat.size(), 15u);
    std::set<std::string> yes;
    std::set<std::string> codes;
    for (auto& s : cat) {
        codes.insert(s.code);
        if (s.expected_alarm) yes.insert(s.code);
        EXPECT_GT(s.window.count(), 0);
        EXPECT_FALSE(s.command.empty());
    }
    EXPECT_EQ(codes.size(), 15u);
    EXPECT_EQ(yes, (std::set<std::string>{"CI-03", "CI-04", "CI-05", "CI-06"}));
    EXPECT_TRUE(find_scenario("DOS-02"));
    EXPECT_FALSE(find_scenario("CI-10"));
}

TEST(Catalog, SplitsTestCenterHex)
{
    auto frames = detail::split_frames("00 01 00 00 00 09 11 11 11 11 11 11 11 11 11 00 01 00 00 00 09 FF", 15);
    ASSERT_EQ(frames.size(), 2u);
    EXPECT_EQ(frames[0].size(), 15u);
    EXPECT_EQ(frames[1].size(), 7u);
}

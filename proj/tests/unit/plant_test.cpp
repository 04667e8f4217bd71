// Data table, address map, ladder interpreter, tank physics.

#include <gtest/gtest.h>

#include <random>

#include "../support/oracles.hpp"
#include "scada/data_table.hpp"
#include "scada/logic_engine.hpp"
#include "scada/tank_process.hpp"

using namespace scada;
using namespace std::chrono_literals;

TEST(DataTable, BoundsAndReadOnly)
{
    DataTable t;
    t.write(Space::holding_registers, 65535, {7});
    EXPECT_EQ(t.holding(65535), 7);
    try {
        t.read(Space::holding_registers, 65535, 2);
        FAIL();
    } catch (const TableError& e) {
        EXPECT_EQ(e.kind, TableError::Kind::out_of_bounds);
    }
    try {
        t.write(Space::input_registers, 0, {1}, Access::modbus);
        FAIL();
    } catch (const TableError& e) {
        EXPECT_EQ(e.kind, TableError::Kind::read_only);
    }
    EXPECT_NO_THROW(t.write(Space::input_registers, 0, {1}, Access::internal));
    EXPECT_EQ(t.reg(Space::input_registers, 0), 1);
}

TEST(DataTable, BitsNormalise)
{
    DataTable t;
    t.write(Space::coils, 10, {0, 5, 0xFFFF});
    EXPECT_EQ(t.read(Space::coils, 10, 3), (std::vector<std::uint16_t>{0, 1, 1}));
}

TEST(AddressMap, BindsConsecutiveOffsets)
{
    auto m = parse_address_map("[Tanks]\naction = read\naddrtype = holdingreg\nbase = 42210\nlogictable = YS10,YS11\n"
                               "[Info]\nnote = ignored\n");
    ASSERT_EQ(m.entries.size(), 2u);
    EXPECT_EQ(m.entries[1].offset, 42211);
    EXPECT_EQ(m.entries[1].logic.str(), "YS11");
}

TEST(AddressMap, RejectsDuplicateBinding)
{
    EXPECT_THROW(parse_address_map("[A]\naction = write\naddrtype = coil\nbase = 30\nlogictable = Y30\n"
                                   "[B]\naction = write\naddrtype = coil\nbase = 30\nlogictable = Y31\n"),
                 ini::ConfigError);
}

TEST(AddressMap, RejectsKindMismatchAndOverflow)
{
    EXPECT_THROW(parse_address_map("[A]\naction = read\naddrtype = coil\nbase = 1\nlogictable = DS1\n"), ini::ConfigError);
    EXPECT_THROW(parse_address_map("[A]\naction = read\naddrtype = holdingreg\nbase = 65535\nlogictable = DS1,DS2\n"),
                 ini::ConfigError);
}

TEST(AddressMap, TransferIsSigned)
{
    auto m = parse_address_map("[P]\naction = read\naddrtype = holdingreg\nbase = 32210\nlogictable = DS1\n"
                               "[Q]\naction = write\naddrtype = holdingreg\nbase = 100\nlogictable = DS1\n");
    DataTable sys;
    LogicTable lt;
    sys.set_holding(32210, 0xFFFB);
    transfer(m, sys, lt);
    EXPECT_EQ(lt.reg("DS1"), -5);
    EXPECT_EQ(sys.holding(100), 0xFFFB);
}

TEST(Logic, SpecialBitIsAlwaysOn)
{
    LogicTable t;
    t.set_bit("SC1", false);
    EXPECT_TRUE(t.bit("SC1"));
}

TEST(Logic, RejectsMissingStarter)
{
    EXPECT_THROW(logic::parse_program("NETWORK 1\nOUT Y20\n"), logic::ParseError);
}

TEST(Logic, RejectsBadPrograms)
{
    EXPECT_THROW(logic::parse_program("NETWORK 1\nSTR SC1\nCALL Nowhere\n"), logic::ParseError);
    EXPECT_THROW(logic::parse_program("NETWORK 1\nSTR SC1\nCALL A\nSBR A\nNETWORK 1\nSTR SC1\nCALL A\n"),
                 logic::ParseError);
    EXPECT_THROW(logic::parse_program("NETWORK 1\nSTR DS1\n"), logic::ParseError);
    EXPECT_THROW(logic::parse_program("NETWORK 1\nSTRGE DS1 40000\n"), logic::ParseError);
    EXPECT_THROW(logic::parse_program("NETWORK 1\nJMP 3\n"), logic::ParseError);
    EXPECT_THROW(logic::parse_program("OUT Y1\n"), logic::ParseError);
}

TEST(Logic, RungRulesCopyCallReturn)
{
    auto p = logic::parse_program(R"(
NETWORK 1
STRE DS1 3
COPY 9 DS2
OUT Y1
NETWORK 2
STR SC1
CALL Side
NETWORK 3
RT
NETWORK 4
STR SC1
COPY 1 DS9
SBR Side
NETWORK 1
STRNE DS1 3
RT
NETWORK 2
STR SC1
COPY 77 DS3
)");
    LogicTable t;
    t.set_reg("DS1", 3);
    logic::scan_cycle(p, t);
    EXPECT_EQ(t.reg("DS2"), 9);
    EXPECT_TRUE(t.bit("Y1"));
    EXPECT_EQ(t.reg("DS3"), 77);
    EXPECT_EQ(t.reg("DS9"), 0); // main ended at the bare RT

    LogicTable u;
    u.set_reg("DS1", 4);
    u.set_reg("DS2", 5);
    logic::scan_cycle(p, u);
    EXPECT_EQ(u.reg("DS2"), 5); // COPY skipped on a false rung
    EXPECT_FALSE(u.bit("Y1"));
    EXPECT_EQ(u.reg("DS3"), 0); // subroutine returned early
}

TEST(Logic, MatchesTreeWalkOnGeneratedPrograms)
{
    namespace lad = oracle::ladder;
    for (std::uint64_t seed = 1; seed <= 300; ++seed) {
        lad::Generator gen(seed);
        auto prog = gen.program();
        auto text = lad::render(prog);
        auto parsed = logic::parse_program(text);

        std::mt19937_64 rng(seed * 31);
        lad::Memory mem;
        LogicTable table;
        for (auto& r : lad::reg_names()) {
            int v = std::uniform_int_distribution<int>(-4, 4)(rng);
            mem.regs[r] = v;
            table.set_reg(r, static_cast<std::int16_t>(v));
        }
        for (auto& b : lad::bit_names()) {
            bool v = rng() & 1;
            mem.bits[b] = v;
            table.set_bit(b, v);
        }
        lad::Evaluator ev(prog, mem);
        for (int scan = 0; scan < 3; ++scan) {
            ev.scan();
            logic::scan_cycle(parsed, table);
        }
        for (auto& r : lad::reg_names()) ASSERT_EQ(table.reg(r), mem.reg(r)) << r << "\n" << text;
        for (auto& b : lad::bit_names()) ASSERT_EQ(table.bit(b), mem.bit(b)) << b << "\n" << text;
    }
}

TEST(Tank, RegisterRoundsHalfUp)
{
    EXPECT_EQ(process::level_register(44499), 44);
    EXPECT_EQ(process::level_register(44500), 45);
}

TEST(Tank, SpeedFiveForOneSecond)
{
    DataTable t;
    t.set_holding(process::reg::pump_speed, 5);
    auto s = process::TankState::at(45, 55);
    for (int i = 0; i < 10; ++i) {
        s = process::step(s, 100ms, t);
        EXPECT_EQ(s.level1_milli, 45000 - 500 * (i + 1));
    }
    EXPECT_EQ(s.level1_milli, 40000);
    EXPECT_EQ(s.level2_milli, 60000);
    EXPECT_EQ(t.holding(process::reg::level1), 40);
}

TEST(Tank, ReferenceSteps)
{
    DataTable t;
    auto run = [&](double l1, double l2, int speed) {
        t.set_holding(process::reg::pump_speed, as_unsigned(static_cast<std::int16_t>(speed)));
        return process::step(process::TankState::at(l1, l2), 1000ms, t);
    };
    auto fwd = run(50, 50, 5);
    EXPECT_EQ(fwd.level1(), 45);
    EXPECT_EQ(fwd.level2(), 55);
    auto stopped = run(50, 50, 0);
    EXPECT_EQ(stopped.level1(), 50);
    EXPECT_EQ(stopped.level2(), 50);
    // source-limited: min(2, 9, 50)
    auto s = run(2, 50, 9);
    auto ref = oracle::pump({2000, 50000}, 9, 1'000'000);
    EXPECT_EQ(s.level1_milli, ref.t1);
    EXPECT_EQ(s.level2_milli, ref.t2);
    EXPECT_EQ(s.level1_milli, 0);
    EXPECT_EQ(s.level2_milli, 52000);
}

TEST(Tank, PositiveSpeedRaisesTankTwo)
{
    DataTable t;
    t.set_holding(process::reg::pump_speed, 3);
    auto s = process::TankState::at(60, 10);
    for (int i = 0; i < 100; ++i) {
        auto next = process::step(s, 100ms, t);
        EXPECT_GT(next.level2_milli, s.level2_milli);
        EXPECT_EQ(next.level1_milli + next.level2_milli, 70000);
        s = next;
    }
}

TEST(Tank, NegativeSpeedFromRegister)
{
    DataTable t;
    t.set_holding(process::reg::pump_speed, as_unsigned(-1));
    auto s = process::step(process::TankState::at(50, 50), 1000ms, t);
    EXPECT_EQ(s.level1_milli, 51000);
    EXPECT_EQ(s.pump_speed, -1);
}

TEST(Tank, ClampsAtEmptyAndFull)
{
    DataTable t;
    t.set_holding(process::reg::pump_speed, 200);
    auto s = process::step(process::TankState::at(50, 50), 1000ms, t);
    EXPECT_EQ(s.level1_milli, 0);
    EXPECT_EQ(s.level2_milli, 100000);
    s = process::step(process::TankState::at(10, 95), 1000ms, t);
    EXPECT_EQ(s.level1_milli, 5000);
    EXPECT_EQ(s.level2_milli, 100000);
}

TEST(Tank, RandomScheduleMatchesReference)
{
    std::mt19937_64 rng(5);
    for (int run = 0; run < 50; ++run) {
        DataTable t;
        auto s = process::TankState::at(std::uniform_int_distribution<int>(0, 100)(rng),
                                        std::uniform_int_distribution<int>(0, 100)(rng));
        oracle::Tanks ref{s.level1_milli, s.level2_milli};
        for (int i = 0; i < 200; ++i) {
            int speed = std::uniform_int_distribution<int>(-300, 300)(rng);
            long long dt = std::uniform_int_distribution<long long>(0, 2'000'000)(rng);
            t.set_holding(process::reg::pump_speed, as_unsigned(static_cast<std::int16_t>(speed)));
            s = process::step(s, std::chrono::microseconds(dt), t);
            ref = oracle::pump(ref, speed, dt);
            ASSERT_EQ(s.level1_milli, ref.t1);
            ASSERT_EQ(s.level2_milli, ref.t2);
        }
    }
}

TEST(Tank, BandsAtBoundaries)
{
    using process::Band;
    EXPECT_EQ(process::classify_level(95), Band::HH);
    EXPECT_EQ(process::classify_level(94), Band::H);
    EXPECT_EQ(process::classify_level(80), Band::H);
    EXPECT_EQ(process::classify_level(79), Band::NORMAL);
    EXPECT_EQ(process::classify_level(21), Band::NORMAL);
    EXPECT_EQ(process::classify_level(20), Band::L);
    EXPECT_EQ(process::classify_level(5), Band::LL);
    EXPECT_EQ(process::classify_level(0), Band::LL);
}

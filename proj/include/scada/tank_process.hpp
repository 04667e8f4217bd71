#pragma once

// Two tanks joined by a reversible pump. Levels are kept in thousandths of
// a unit so transfers are exact; the registers carry the rounded value.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <string_view>

#include "scada/data_table.hpp"

namespace scada::process {

namespace reg {
inline constexpr std::uint16_t pump_speed = 32210;
inline constexpr std::uint16_t level1 = 42210;
inline constexpr std::uint16_t level2 = 42211;
inline constexpr std::uint16_t threshold_h = 42212;
inline constexpr std::uint16_t threshold_l = 42213;
inline constexpr std::uint16_t threshold_hh = 42214;
inline constexpr std::uint16_t threshold_ll = 42215;
} // namespace reg

inline constexpr std::int64_t kMilli = 1000;
inline constexpr std::int64_t kCapacity = 100 * kMilli;

struct TankState {
    std::int64_t level1_milli = 50 * kMilli;
    std::int64_t level2_milli = 50 * kMilli;
    std::int16_t pump_speed = 0; // last speed read from the table

    double level1() const { return static_cast<double>(level1_milli) / kMilli; }
    double level2() const { return static_cast<double>(level2_milli) / kMilli; }

    static TankState at(double l1, double l2)
    {
        TankState s;
        s.level1_milli = static_cast<std::int64_t>(l1 * kMilli + 0.5);
        s.level2_milli = static_cast<std::int64_t>(l2 * kMilli + 0.5);
        return s;
    }
    friend bool operator==(const TankState&, const TankState&) = default;
};

/// Nearest whole unit, halves rounded up.
inline std::uint16_t level_register(std::int64_t milli)
{
    return static_cast<std::uint16_t>((milli + kMilli / 2) / kMilli);
}

/// Amount moved from tank 1 to tank 2 (negative moves the other way) for a
/// given speed over dt: min(requested, source, destination headroom).
inline std::int64_t transfer_amount(const TankState& s, std::int64_t speed, std::chrono::microseconds dt)
{
    std::int64_t requested = speed * dt.count() / 1000; // units/s * us -> milli-units
    if (requested >= 0)
        return std::min({requested, s.level1_milli, kCapacity - s.level2_milli});
    return -std::min({-requested, s.level2_milli, kCapacity - s.level1_milli});
}

/// Reads the signed pump speed from the table, moves water, writes the
/// rounded levels back to the level registers.
inline TankState step(TankState s, std::chrono::microseconds dt, DataTable& table)
{
    s.pump_speed = as_signed(table.holding(reg::pump_speed));
    auto moved = transfer_amount(s, s.pump_speed, dt);
    s.level1_milli -= moved;
    s.level2_milli += moved;
    table.set_holding(reg::level1, level_register(s.level1_milli));
    table.set_holding(reg::level2, level_register(s.level2_milli));
    return s;
}

struct Thresholds {
    int hh = 95;
    int h = 80;
    int l = 20;
    int ll = 5;

    bool well_formed() const { return ll < l && l < h && h < hh; }
};

enum class Band { LL, L, NORMAL, H, HH };

inline std::string_view band_name(Band b)
{
    switch (b) {
    case Band::LL: return "LL";
    case Band::L: return "L";
    case Band::NORMAL: return "NORMAL";
    case Band::H: return "H";
    case Band::HH: return "HH";
    }
    return "?";
}

inline Band classify_level(double level, const Thresholds& t = {})
{
    if (level >= t.hh) return Band::HH;
    if (level >= t.h) return Band::H;
    if (level <= t.ll) return Band::LL;
    if (level <= t.l) return Band::L;
    return Band::NORMAL;
}

} // namespace scada::process

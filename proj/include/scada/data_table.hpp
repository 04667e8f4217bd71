#pragma once

// The four Modbus address spaces plus the PLC's symbolic logic table and
// the system<->logic address map (mblogic.config).

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "scada/bytes.hpp"
#include "scada/ini.hpp"

namespace scada {

enum class Space { discrete_inputs, coils, input_registers, holding_registers };

inline constexpr bool is_bit_space(Space s) { return s == Space::discrete_inputs || s == Space::coils; }
inline constexpr bool is_modbus_writable(Space s) { return s == Space::coils || s == Space::holding_registers; }

inline std::string_view space_name(Space s)
{
    switch (s) {
    case Space::discrete_inputs: return "discrete";
    case Space::coils: return "coil";
    case Space::input_registers: return "inputreg";
    case Space::holding_registers: return "holdingreg";
    }
    return "?";
}

inline Space parse_space(std::string_view name)
{
    if (name == "holdingreg") return Space::holding_registers;
    if (name == "inputreg") return Space::input_registers;
    if (name == "coil") return Space::coils;
    if (name == "discrete") return Space::discrete_inputs;
    throw ini::ConfigError("unknown addrtype '" + std::string(name) + "'");
}

/// Who is touching the table. Only the Modbus path is subject to the
/// read-only rule for inputs.
enum class Access { internal, modbus };

class TableError : public std::runtime_error {
public:
    enum class Kind { out_of_bounds, read_only };
    TableError(Kind k, std::string what) : std::runtime_error(std::move(what)), kind(k) {}
    Kind kind;
};

class DataTable {
public:
    static constexpr std::size_t kSize = 65536;

    DataTable() : bits_{std::vector<std::uint8_t>(kSize), std::vector<std::uint8_t>(kSize)},
                  regs_{std::vector<std::uint16_t>(kSize), std::vector<std::uint16_t>(kSize)} {}

    /// Bits come back as 0/1.
    std::vector<std::uint16_t> read(Space s, std::size_t addr, std::size_t qty) const
    {
        check_range(s, addr, qty);
        std::vector<std::uint16_t> out(qty);
        for (std::size_t i = 0; i < qty; ++i)
            out[i] = is_bit_space(s) ? bits(s)[addr + i] : regs(s)[addr + i];
        return out;
    }

    void write(Space s, std::size_t addr, const std::vector<std::uint16_t>& values, Access via = Access::internal)
    {
        if (values.empty()) return;
        check_range(s, addr, values.size());
        if (via == Access::modbus && !is_modbus_writable(s))
            throw TableError(TableError::Kind::read_only, std::string(space_name(s)) + " is read-only");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (is_bit_space(s))
                bits(s)[addr + i] = values[i] ? 1 : 0;
            else
                regs(s)[addr + i] = values[i];
        }
    }

    std::uint16_t reg(Space s, std::uint16_t addr) const { return regs(s)[addr]; }
    bool bit(Space s, std::uint16_t addr) const { return bits(s)[addr]; }
    void set_reg(Space s, std::uint16_t addr, std::uint16_t v) { regs(s)[addr] = v; }
    void set_bit(Space s, std::uint16_t addr, bool v) { bits(s)[addr] = v; }

    std::uint16_t holding(std::uint16_t addr) const { return reg(Space::holding_registers, addr); }
    void set_holding(std::uint16_t addr, std::uint16_t v) { set_reg(Space::holding_registers, addr, v); }
    bool coil(std::uint16_t addr) const { return bit(Space::coils, addr); }
    void set_coil(std::uint16_t addr, bool v) { set_bit(Space::coils, addr, v); }

private:
    static void check_range(Space s, std::size_t addr, std::size_t qty)
    {
        if (qty == 0 || addr + qty > kSize)
            throw TableError(TableError::Kind::out_of_bounds,
                             std::string(space_name(s)) + " " + std::to_string(addr) + "+" + std::to_string(qty));
    }
    std::vector<std::uint8_t>& bits(Space s) { return bits_[s == Space::coils]; }
    const std::vector<std::uint8_t>& bits(Space s) const { return bits_[s == Space::coils]; }
    std::vector<std::uint16_t>& regs(Space s) { return regs_[s == Space::holding_registers]; }
    const std::vector<std::uint16_t>& regs(Space s) const { return regs_[s == Space::holding_registers]; }

    std::vector<std::uint8_t> bits_[2];
    std::vector<std::uint16_t> regs_[2];
};

// ---- logic side ----

/// A symbolic PLC address such as DS10, YS14, Y30 or SC1.
struct LogicAddress {
    enum class Kind { reg, bit };
    Kind kind = Kind::reg;
    std::string prefix;
    int index = 0;

    std::string str() const { return prefix + std::to_string(index); }
    friend auto operator<=>(const LogicAddress&, const LogicAddress&) = default;

    static std::optional<LogicAddress> parse(std::string_view s)
    {
        std::size_t i = 0;
        while (i < s.size() && s[i] >= 'A' && s[i] <= 'Z') ++i;
        if (i == 0 || i == s.size()) return std::nullopt;
        auto prefix = s.substr(0, i);
        int idx = 0;
        for (std::size_t j = i; j < s.size(); ++j) {
            if (s[j] < '0' || s[j] > '9') return std::nullopt;
            idx = idx * 10 + (s[j] - '0');
            if (idx > 99999) return std::nullopt;
        }
        if (idx == 0) return std::nullopt;
        LogicAddress a;
        a.prefix = std::string(prefix);
        a.index = idx;
        if (prefix == "DS" || prefix == "YS" || prefix == "XS")
            a.kind = Kind::reg;
        else if (prefix == "X" || prefix == "Y" || prefix == "C" || prefix == "SC")
            a.kind = Kind::bit;
        else
            return std::nullopt;
        return a;
    }
};

class LogicTable {
public:
    std::int16_t reg(const LogicAddress& a) const
    {
        auto it = regs_.find(a.str());
        return it == regs_.end() ? 0 : it->second;
    }
    void set_reg(const LogicAddress& a, std::int16_t v) { regs_[a.str()] = v; }

    bool bit(const LogicAddress& a) const
    {
        if (a.prefix == "SC" && a.index == 1) return true;
        auto it = bits_.find(a.str());
        return it != bits_.end() && it->second;
    }
    void set_bit(const LogicAddress& a, bool v)
    {
        if (a.prefix == "SC" && a.index == 1) return;
        bits_[a.str()] = v;
    }

    std::int16_t reg(std::string_view name) const { return reg(must(name)); }
    bool bit(std::string_view name) const { return bit(must(name)); }
    void set_reg(std::string_view name, std::int16_t v) { set_reg(must(name), v); }
    void set_bit(std::string_view name, bool v) { set_bit(must(name), v); }

    friend bool operator==(const LogicTable&, const LogicTable&) = default;

private:
    static LogicAddress must(std::string_view name)
    {
        auto a = LogicAddress::parse(name);
        if (!a) throw std::invalid_argument("bad logic address '" + std::string(name) + "'");
        return *a;
    }
    std::map<std::string, std::int16_t> regs_;
    std::map<std::string, bool> bits_;
};

enum class Direction { read, write };

struct MapEntry {
    LogicAddress logic;
    Space space;
    std::uint16_t offset;
    Direction direction;
};

struct AddressMap {
    std::vector<MapEntry> entries;
};

/// Sections with action/addrtype/base/logictable; the k-th logic name is
/// bound to base+k. Sections lacking `action` are ignored.
inline AddressMap parse_address_map(std::string_view text)
{
    auto doc = ini::parse(text);
    AddressMap map;
    for (auto& sec : doc.sections) {
        auto* action = sec.find("action");
        if (!action) continue;
        Direction dir;
        if (*action == "read")
            dir = Direction::read;
        else if (*action == "write")
            dir = Direction::write;
        else
            throw ini::ConfigError("[" + sec.name + "] unknown action '" + *action + "'");
        Space space = parse_space(sec.require("addrtype"));
        long base = ini::parse_int(sec.require("base"), "base");
        auto* lt = sec.find("logictable");
        auto names = lt ? ini::split_list(*lt) : std::vector<std::string>{};
        if (base < 0 || base + static_cast<long>(names.size()) > 65536)
            throw ini::ConfigError("[" + sec.name + "] base " + std::to_string(base) + " with "
                                   + std::to_string(names.size()) + " names overflows the address space");
        for (std::size_t k = 0; k < names.size(); ++k) {
            auto a = LogicAddress::parse(names[k]);
            if (!a) throw ini::ConfigError("[" + sec.name + "] bad logic address '" + names[k] + "'");
            if ((a->kind == LogicAddress::Kind::bit) != is_bit_space(space))
                throw ini::ConfigError("[" + sec.name + "] " + names[k] + " does not fit " + std::string(space_name(space)));
            auto off = static_cast<std::uint16_t>(base + static_cast<long>(k));
            for (auto& e : map.entries)
                if (e.direction == dir && e.space == space && e.offset == off)
                    throw ini::ConfigError("[" + sec.name + "] offset " + std::to_string(off) + " mapped twice");
            map.entries.push_back({*a, space, off, dir});
        }
    }
    return map;
}

/// Moves values across the map: read entries copy system->logic with signed
/// reinterpretation of registers, write entries copy logic->system.
inline void transfer(const AddressMap& map, DataTable& system, LogicTable& logic)
{
    for (auto& e : map.entries) {
        bool bit = is_bit_space(e.space);
        if (e.direction == Direction::read) {
            if (bit)
                logic.set_bit(e.logic, system.bit(e.space, e.offset));
            else
                logic.set_reg(e.logic, as_signed(system.reg(e.space, e.offset)));
        } else {
            if (bit)
                system.set_bit(e.space, e.offset, logic.bit(e.logic));
            else
                system.set_reg(e.space, e.offset, as_unsigned(logic.reg(e.logic)));
        }
    }
}

} // namespace scada

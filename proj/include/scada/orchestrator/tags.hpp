#pragma once

// Operator tag table: each HMI tag names exactly one table address, with an
// optional legal range and a linear scale (offset, factor).

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "scada/bytes.hpp"
#include "scada/data_table.hpp"
#include "scada/ini.hpp"

namespace scada::orchestrator {

enum class TagType { integer, boolean };

struct Tag {
    std::string name;
    TagType type = TagType::integer;
    Space space = Space::holding_registers;
    std::uint16_t address = 0;
    std::optional<std::pair<double, double>> range;
    double offset = 0;
    double factor = 1;

    bool in_range(double v) const { return !range || (v >= range->first && v <= range->second); }

    double read(const DataTable& t) const
    {
        if (type == TagType::boolean) return t.bit(space, address) ? 1 : 0;
        return as_signed(t.reg(space, address)) * factor + offset;
    }

    std::uint16_t encode(double v) const
    {
        if (type == TagType::boolean) return v != 0;
        auto raw = static_cast<long>(std::lround((v - offset) / factor));
        return as_unsigned(static_cast<std::int16_t>(raw));
    }
};

struct TagConfig {
    std::vector<Tag> tags;

    const Tag* find(std::string_view name) const
    {
        for (auto& t : tags)
            if (t.name == name) return &t;
        return nullptr;
    }
};

inline TagConfig parse_tag_config(std::string_view text)
{
    auto doc = ini::parse(text);
    TagConfig cfg;
    for (auto& sec : doc.sections) {
        Tag t;
        t.name = sec.name;
        auto& dt = sec.require("datatype");
        if (dt == "integer") t.type = TagType::integer;
        else if (dt == "boolean") t.type = TagType::boolean;
        else throw ini::ConfigError("[" + sec.name + "] unknown datatype '" + dt + "'");
        t.space = parse_space(sec.require("addrtype"));
        if ((t.type == TagType::boolean) != is_bit_space(t.space))
            throw ini::ConfigError("[" + sec.name + "] datatype does not fit addrtype");
        long addr = ini::parse_int(sec.require("memaddr"), "memaddr");
        if (addr < 0 || addr > 65535) throw ini::ConfigError("[" + sec.name + "] memaddr outside 0..65535");
        t.address = static_cast<std::uint16_t>(addr);
        if (auto* r = sec.find("range")) {
            auto v = ini::split_list(*r);
            if (v.size() != 2) throw ini::ConfigError("[" + sec.name + "] range needs two values");
            t.range = std::pair{double(ini::parse_int(v[0], "range")), double(ini::parse_int(v[1], "range"))};
            if (t.range->first > t.range->second) throw ini::ConfigError("[" + sec.name + "] empty range");
        }
        if (auto* s = sec.find("scale")) {
            auto v = ini::split_list(*s);
            if (v.size() != 2) throw ini::ConfigError("[" + sec.name + "] scale needs offset and factor");
            t.offset = double(ini::parse_int(v[0], "scale"));
            t.factor = double(ini::parse_int(v[1], "scale"));
            if (t.factor == 0) throw ini::ConfigError("[" + sec.name + "] zero scale factor");
        }
        for (auto& other : cfg.tags)
            if (other.space == t.space && other.address == t.address)
                throw ini::ConfigError("[" + sec.name + "] shares its address with [" + other.name + "]");
        cfg.tags.push_back(std::move(t));
    }
    return cfg;
}

} // namespace scada::orchestrator

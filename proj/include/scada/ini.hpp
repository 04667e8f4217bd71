#pragma once

// Section/key grammar shared by mbhmi.config, mblogic.config and
// mbclient.config. Parsing is delegated to boost::property_tree.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace scada::ini {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string trim(std::string_view s)
{
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

struct Section {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;

    const std::string* find(std::string_view key) const
    {
        for (auto& [k, v] : entries)
            if (k == key) return &v;
        return nullptr;
    }

    const std::string& require(std::string_view key) const
    {
        if (auto* v = find(key)) return *v;
        throw ConfigError("[" + name + "] missing key '" + std::string(key) + "'");
    }
};

struct Document {
    std::vector<Section> sections;

    const Section* find(std::string_view name) const
    {
        for (auto& s : sections)
            if (s.name == name) return &s;
        return nullptr;
    }
};

inline Document parse(std::string_view text)
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in{std::string(text)};
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("ini: ") + e.what());
    }
    Document doc;
    for (auto& [name, body] : tree) {
        if (body.empty()) throw ConfigError("ini: key '" + name + "' outside any section");
        Section s{name, {}};
        for (auto& [k, v] : body) s.entries.emplace_back(k, trim(v.data()));
        doc.sections.push_back(std::move(s));
    }
    return doc;
}

/// "a, b ,c" -> {"a","b","c"}; empty input gives an empty list.
inline std::vector<std::string> split_list(std::string_view v, char sep = ',')
{
    std::vector<std::string> out;
    if (trim(v).empty()) return out;
    std::size_t start = 0;
    while (true) {
        auto pos = v.find(sep, start);
        auto item = trim(v.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (item.empty()) throw ConfigError("ini: empty element in list '" + std::string(v) + "'");
        out.push_back(std::move(item));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline long parse_int(std::string_view s, std::string_view what = "value")
{
    auto t = trim(s);
    long v = 0;
    int base = 10;
    std::string_view digits = t;
    bool neg = false;
    if (!digits.empty() && (digits[0] == '-' || digits[0] == '+')) {
        neg = digits[0] == '-';
        digits.remove_prefix(1);
    }
    if (digits.size() > 2 && digits[0] == '0' && (digits[1] == 'x' || digits[1] == 'X')) {
        base = 16;
        digits.remove_prefix(2);
    }
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v, base);
    if (digits.empty() || ec != std::errc{} || p != digits.data() + digits.size())
        throw ConfigError("bad " + std::string(what) + " '" + t + "'");
    return neg ? -v : v;
}

} // namespace scada::ini

#pragma once

// Instruction-list PLC program: parser and scan-cycle interpreter.
//
//   NETWORK 1
//   STRGE DS10 YS14
//   OUT Y30
//
// Main networks come first; `SBR name` opens a subroutine whose networks
// run when a rung with `CALL name` is true. `RT` returns.

#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "scada/data_table.hpp"

namespace scada::logic {

enum class Opcode { STR, STRE, STRNE, STRGE, OUT, COPY, CALL, RT };

inline std::string_view opcode_name(Opcode op)
{
    switch (op) {
    case Opcode::STR: return "STR";
    case Opcode::STRE: return "STRE";
    case Opcode::STRNE: return "STRNE";
    case Opcode::STRGE: return "STRGE";
    case Opcode::OUT: return "OUT";
    case Opcode::COPY: return "COPY";
    case Opcode::CALL: return "CALL";
    case Opcode::RT: return "RT";
    }
    return "?";
}

inline bool is_starter(Opcode op)
{
    return op == Opcode::STR || op == Opcode::STRE || op == Opcode::STRNE || op == Opcode::STRGE;
}

struct SubroutineName {
    std::string name;
    friend bool operator==(const SubroutineName&, const SubroutineName&) = default;
};

using Operand = std::variant<LogicAddress, std::int16_t, SubroutineName>;

struct Instruction {
    Opcode op;
    std::vector<Operand> operands;
    int line = 0;
};

struct Network {
    int index = 0;
    std::vector<Instruction> instructions;
};

struct LogicProgram {
    std::vector<Network> main;
    std::map<std::string, std::vector<Network>> subroutines;
};

class ParseError : public std::runtime_error {
public:
    ParseError(int line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line(line) {}
    int line;
};

namespace detail {

inline std::vector<std::string> tokens(std::string_view line)
{
    std::vector<std::string> out;
    std::istringstream in{std::string(line)};
    for (std::string t; in >> t;) out.push_back(t);
    return out;
}

inline bool parse_literal(std::string_view s, std::int16_t& out)
{
    if (s.empty()) return false;
    std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
    if (i == s.size()) return false;
    long v = 0;
    for (; i < s.size(); ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
        v = v * 10 + (s[i] - '0');
        if (v > 40000) return false;
    }
    if (s[0] == '-') v = -v;
    if (v < -32768 || v > 32767) return false;
    out = static_cast<std::int16_t>(v);
    return true;
}

inline Operand value_operand(const std::string& tok, int line)
{
    std::int16_t lit;
    if (parse_literal(tok, lit)) return lit;
    auto a = LogicAddress::parse(tok);
    if (!a || a->kind != LogicAddress::Kind::reg) throw ParseError(line, "expected register or literal, got '" + tok + "'");
    return *a;
}

inline Operand address_operand(const std::string& tok, LogicAddress::Kind kind, int line)
{
    auto a = LogicAddress::parse(tok);
    if (!a || a->kind != kind)
        throw ParseError(line, std::string("expected ") + (kind == LogicAddress::Kind::bit ? "bit" : "register")
                                   + " address, got '" + tok + "'");
    return *a;
}

inline void check_calls(const LogicProgram& p, const std::string& routine, const std::vector<Network>& nets,
                        std::set<std::string>& stack)
{
    for (auto& n : nets)
        for (auto& ins : n.instructions) {
            if (ins.op != Opcode::CALL) continue;
            auto& target = std::get<SubroutineName>(ins.operands[0]).name;
            auto it = p.subroutines.find(target);
            if (it == p.subroutines.end()) throw ParseError(ins.line, "CALL to unknown subroutine '" + target + "'");
            if (stack.count(target)) throw ParseError(ins.line, "recursive CALL of '" + target + "' from " + routine);
            stack.insert(target);
            check_calls(p, target, it->second, stack);
            stack.erase(target);
        }
}

} // namespace detail

inline LogicProgram parse_program(std::string_view text)
{
    static const std::map<std::string, Opcode, std::less<>> opcodes{
        {"STR", Opcode::STR},   {"STRE", Opcode::STRE}, {"STRNE", Opcode::STRNE}, {"STRGE", Opcode::STRGE},
        {"OUT", Opcode::OUT},   {"COPY", Opcode::COPY}, {"CALL", Opcode::CALL},   {"RT", Opcode::RT}};

    LogicProgram prog;
    std::vector<Network>* routine = &prog.main;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line = 0;

    auto close_network = [&](int at) {
        if (routine->empty()) return;
        auto& n = routine->back();
        if (n.instructions.empty()) throw ParseError(at, "NETWORK " + std::to_string(n.index) + " is empty");
        auto first = n.instructions.front().op;
        bool only_rt = n.instructions.size() == 1 && first == Opcode::RT;
        if (!is_starter(first) && !only_rt)
            throw ParseError(n.instructions.front().line,
                             "NETWORK " + std::to_string(n.index) + " does not begin with a rung condition");
    };

    while (std::getline(in, raw)) {
        ++line;
        std::string_view sv = raw;
        if (auto c = sv.find("//"); c != std::string_view::npos) sv = sv.substr(0, c);
        auto tok = detail::tokens(sv);
        if (tok.empty()) continue;

        if (tok[0] == "NETWORK") {
            if (tok.size() != 2) throw ParseError(line, "NETWORK takes one number");
            std::int16_t idx;
            if (!detail::parse_literal(tok[1], idx) || idx < 1) throw ParseError(line, "bad network number '" + tok[1] + "'");
            close_network(line);
            routine->push_back(Network{idx, {}});
            continue;
        }
        if (tok[0] == "SBR") {
            if (tok.size() != 2) throw ParseError(line, "SBR takes one name");
            close_network(line);
            if (prog.subroutines.count(tok[1])) throw ParseError(line, "subroutine '" + tok[1] + "' defined twice");
            routine = &prog.subroutines[tok[1]];
            continue;
        }

        auto it = opcodes.find(tok[0]);
        if (it == opcodes.end()) throw ParseError(line, "unknown opcode '" + tok[0] + "'");
        if (routine->empty()) throw ParseError(line, tok[0] + " outside any NETWORK");

        Instruction ins{it->second, {}, line};
        std::size_t arity = 0;
        switch (ins.op) {
        case Opcode::STR: case Opcode::OUT: case Opcode::CALL: arity = 1; break;
        case Opcode::STRE: case Opcode::STRNE: case Opcode::STRGE: case Opcode::COPY: arity = 2; break;
        case Opcode::RT: arity = 0; break;
        }
        if (tok.size() - 1 != arity)
            throw ParseError(line, tok[0] + " takes " + std::to_string(arity) + " operand(s), got " + std::to_string(tok.size() - 1));

        using K = LogicAddress::Kind;
        switch (ins.op) {
        case Opcode::STR: ins.operands.push_back(detail::address_operand(tok[1], K::bit, line)); break;
        case Opcode::OUT: ins.operands.push_back(detail::address_operand(tok[1], K::bit, line)); break;
        case Opcode::STRE:
        case Opcode::STRNE:
        case Opcode::STRGE:
            ins.operands.push_back(detail::value_operand(tok[1], line));
            ins.operands.push_back(detail::value_operand(tok[2], line));
            break;
        case Opcode::COPY:
            ins.operands.push_back(detail::value_operand(tok[1], line));
            ins.operands.push_back(detail::address_operand(tok[2], K::reg, line));
            break;
        case Opcode::CALL: ins.operands.push_back(SubroutineName{tok[1]}); break;
        case Opcode::RT: break;
        }
        routine->back().instructions.push_back(std::move(ins));
    }
    close_network(line);

    std::set<std::string> stack;
    detail::check_calls(prog, "main", prog.main, stack);
    return prog;
}

inline std::int16_t operand_value(const Operand& o, const LogicTable& t)
{
    if (auto* lit = std::get_if<std::int16_t>(&o)) return *lit;
    return t.reg(std::get<LogicAddress>(o));
}

inline bool eval_starter(Opcode op, const std::vector<Operand>& ops, const LogicTable& t)
{
    switch (op) {
    case Opcode::STR: return t.bit(std::get<LogicAddress>(ops[0]));
    case Opcode::STRE: return operand_value(ops[0], t) == operand_value(ops[1], t);
    case Opcode::STRNE: return operand_value(ops[0], t) != operand_value(ops[1], t);
    case Opcode::STRGE: return operand_value(ops[0], t) >= operand_value(ops[1], t);
    default: throw std::logic_error("not a rung condition");
    }
}

namespace detail {

/// Returns false once RT has been executed.
inline bool run_routine(const LogicProgram& p, const std::vector<Network>& nets, LogicTable& t)
{
    for (auto& n : nets) {
        bool rung = false;
        bool has_starter = false;
        for (auto& ins : n.instructions) {
            switch (ins.op) {
            case Opcode::STR:
            case Opcode::STRE:
            case Opcode::STRNE:
            case Opcode::STRGE:
                rung = eval_starter(ins.op, ins.operands, t);
                has_starter = true;
                break;
            case Opcode::OUT:
                t.set_bit(std::get<LogicAddress>(ins.operands[0]), rung);
                break;
            case Opcode::COPY:
                if (rung) t.set_reg(std::get<LogicAddress>(ins.operands[1]), operand_value(ins.operands[0], t));
                break;
            case Opcode::CALL:
                if (rung) run_routine(p, p.subroutines.at(std::get<SubroutineName>(ins.operands[0]).name), t);
                break;
            case Opcode::RT:
                if (rung || !has_starter) return false;
                break;
            }
        }
    }
    return true;
}

} // namespace detail

/// One full pass of the main routine.
inline void scan_cycle(const LogicProgram& p, LogicTable& t) { detail::run_routine(p, p.main, t); }

} // namespace scada::logic

#pragma once

// Rule DSL: a small propositional language over named concepts.
//
//   expr    := iff
//   iff     := implies ( "<->" implies )*       left-assoc, binary
//   implies := or ( "->" implies )?             right-assoc
//   or      := and ( "|" and )*                 flattened to one n-ary node
//   and     := unary ( "&" unary )*             flattened to one n-ary node
//   unary   := "!" unary | atom | "(" expr ")"
//
// Negation is never a node: it lives on the edge from a child to its parent.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rulegate {

enum class OpCode : std::uint8_t { None = 0, Iff = 1, Implies = 2, And = 3, Or = 4 };

inline const char* op_name(OpCode op) {
    switch (op) {
    case OpCode::Iff: return "IFF";
    case OpCode::Implies: return "IMPLIES";
    case OpCode::And: return "AND";
    case OpCode::Or: return "OR";
    default: return "NONE";
    }
}

inline bool is_commutative(OpCode op) { return op == OpCode::Iff || op == OpCode::And || op == OpCode::Or; }

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at byte " + std::to_string(offset)), reason_(what), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::string reason_;
    std::size_t offset_;
};

struct Formula;

struct FormulaEdge {
    std::shared_ptr<const Formula> child;
    bool negated = false;
};

struct Formula {
    OpCode op = OpCode::None;  // None marks a leaf
    std::string concept_name;  // leaves only
    std::vector<FormulaEdge> children;

    bool is_leaf() const { return op == OpCode::None; }

    static Formula leaf(std::string name) {
        Formula f;
        f.concept_name = std::move(name);
        return f;
    }
    static Formula node(OpCode op, std::vector<std::pair<Formula, bool>> kids) {
        Formula f;
        f.op = op;
        for (auto& [k, neg] : kids)
            f.children.push_back({std::make_shared<const Formula>(std::move(k)), neg});
        return f;
    }
};

inline bool operator==(const Formula& a, const Formula& b) {
    if (a.op != b.op || a.concept_name != b.concept_name || a.children.size() != b.children.size())
        return false;
    for (std::size_t i = 0; i < a.children.size(); ++i) {
        if (a.children[i].negated != b.children[i].negated) return false;
        if (!(*a.children[i].child == *b.children[i].child)) return false;
    }
    return true;
}

namespace detail {

inline bool is_atom_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
           c == ':' || c == '.' || c == '-';
}

class Parser {
public:
    explicit Parser(std::string_view text) : s_(text) {}

    Formula parse_top() {
        skip_ws();
        if (pos_ >= s_.size()) throw ParseError("empty input", pos_);
        auto [f, neg] = parse_iff();
        skip_ws();
        if (pos_ < s_.size()) throw ParseError(std::string("unexpected '") + s_[pos_] + "'", pos_);
        if (neg) return Formula::node(OpCode::And, {{std::move(f), true}});
        return f;
    }

private:
    using Operand = std::pair<Formula, bool>;  // subexpression + pending negation

    void skip_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\r' || s_[pos_] == '\n'))
            ++pos_;
    }

    bool accept(std::string_view tok) {
        skip_ws();
        if (s_.substr(pos_, tok.size()) == tok) {
            pos_ += tok.size();
            return true;
        }
        return false;
    }

    // '-' is an atom character, so "->" must be matched before atoms swallow it.
    bool at_arrow() {
        skip_ws();
        return s_.substr(pos_, 2) == "->";
    }

    Operand parse_iff() {
        Operand lhs = parse_implies();
        while (true) {
            skip_ws();
            if (!accept("<->")) break;
            Operand rhs = parse_implies();
            lhs = {Formula::node(OpCode::Iff, {std::move(lhs), std::move(rhs)}), false};
        }
        return lhs;
    }

    Operand parse_implies() {
        Operand lhs = parse_nary(OpCode::Or);
        if (at_arrow()) {
            pos_ += 2;
            Operand rhs = parse_implies();
            return {Formula::node(OpCode::Implies, {std::move(lhs), std::move(rhs)}), false};
        }
        return lhs;
    }

    Operand parse_nary(OpCode op) {
        const char sym = op == OpCode::Or ? '|' : '&';
        auto next = [&] { return op == OpCode::Or ? parse_nary(OpCode::And) : parse_unary(); };
        std::vector<Operand> items;
        items.push_back(next());
        while (true) {
            skip_ws();
            if (pos_ < s_.size() && s_[pos_] == sym) {
                ++pos_;
                items.push_back(next());
            } else {
                break;
            }
        }
        if (items.size() == 1) return std::move(items.front());
        return {Formula::node(op, std::move(items)), false};
    }

    Operand parse_unary() {
        skip_ws();
        if (pos_ >= s_.size()) throw ParseError("unexpected end of input", pos_);
        const char c = s_[pos_];
        if (c == '!') {
            ++pos_;
            Operand inner = parse_unary();
            inner.second = !inner.second;
            return inner;
        }
        if (c == '(') {
            ++pos_;
            Operand inner = parse_iff();
            skip_ws();
            if (pos_ >= s_.size() || s_[pos_] != ')') throw ParseError("expected ')'", pos_);
            ++pos_;
            return inner;
        }
        if (c == '-' && s_.substr(pos_, 2) == "->") throw ParseError("expected operand before '->'", pos_);
        const std::size_t start = pos_;
        while (pos_ < s_.size() && is_atom_char(s_[pos_])) {
            if (s_[pos_] == '-' && pos_ + 1 < s_.size() && s_[pos_ + 1] == '>') break;
            ++pos_;
        }
        if (pos_ == start) throw ParseError(std::string("unexpected '") + c + "'", pos_);
        return {Formula::leaf(std::string(s_.substr(start, pos_ - start))), false};
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

inline int precedence(OpCode op) {
    switch (op) {
    case OpCode::Iff: return 1;
    case OpCode::Implies: return 2;
    case OpCode::Or: return 3;
    case OpCode::And: return 4;
    default: return 5;
    }
}

inline void format_into(const Formula& f, std::string& out);

inline void format_child(const FormulaEdge& e, OpCode parent, std::size_t index, std::string& out) {
    const Formula& c = *e.child;
    if (e.negated) out += '!';
    bool paren = false;
    if (!c.is_leaf()) {
        if (e.negated || precedence(c.op) <= precedence(parent)) paren = true;
        // right-assoc: "a -> b -> c" already nests to the right
        if (!e.negated && parent == OpCode::Implies && c.op == OpCode::Implies && index == 1) paren = false;
    }
    if (paren) out += '(';
    format_into(c, out);
    if (paren) out += ')';
}

inline void format_into(const Formula& f, std::string& out) {
    if (f.is_leaf()) {
        out += f.concept_name;
        return;
    }
    if (f.children.size() == 1) {
        // top-level negation wrapper
        format_child(f.children.front(), f.op, 0, out);
        return;
    }
    const char* sym = f.op == OpCode::Iff ? " <-> " : f.op == OpCode::Implies ? " -> " : f.op == OpCode::And ? " & " : " | ";
    for (std::size_t i = 0; i < f.children.size(); ++i) {
        if (i) out += sym;
        format_child(f.children[i], f.op, i, out);
    }
}

inline void collect_concepts(const Formula& f, std::vector<std::string>& out) {
    if (f.is_leaf()) {
        for (const auto& s : out)
            if (s == f.concept_name) return;
        out.push_back(f.concept_name);
        return;
    }
    for (const auto& e : f.children) collect_concepts(*e.child, out);
}

}  // namespace detail

inline Formula parse(std::string_view text) { return detail::Parser(text).parse_top(); }

inline std::string format(const Formula& f) {
    std::string out;
    detail::format_into(f, out);
    return out;
}

/// Distinct concept names in first-occurrence order.
inline std::vector<std::string> concepts(const Formula& f) {
    std::vector<std::string> out;
    detail::collect_concepts(f, out);
    return out;
}

/// One rule per line; '#' starts a comment, blank lines are skipped.
inline std::vector<Formula> parse_rules(std::string_view text) {
    std::vector<Formula> rules;
    std::size_t line_start = 0;
    while (line_start <= text.size()) {
        std::size_t line_end = text.find('\n', line_start);
        if (line_end == std::string_view::npos) line_end = text.size();
        std::string_view line = text.substr(line_start, line_end - line_start);
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        bool blank = true;
        for (char c : line)
            if (c != ' ' && c != '\t' && c != '\r') blank = false;
        if (!blank) {
            try {
                rules.push_back(parse(line));
            } catch (const ParseError& e) {
                throw ParseError("rule line: " + e.reason(), line_start + e.offset());
            }
        }
        if (line_end == text.size()) break;
        line_start = line_end + 1;
    }
    return rules;
}

}  // namespace rulegate

#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "rulegate/rulegraph.hpp"

namespace rulegate {

/// Hard label vector; index c-1 holds concept c.
using TruthAssignment = std::vector<std::uint8_t>;

/// Exact operator semantics over any arity. Total: degenerate arities fall back
/// to fixed values instead of failing.
inline int hard_op(int op_code, const std::vector<int>& vals) {
    switch (op_code) {
    case 1:  // IFF
        for (std::size_t j = 1; j < vals.size(); ++j)
            if (vals[j] != vals[0]) return 0;
        return 1;
    case 2:  // IMPLIES
        if (vals.size() != 2) return 1;
        return (1 - vals[0]) | vals[1];
    case 3:  // AND
        for (int v : vals)
            if (!v) return 0;
        return 1;
    case 4:  // OR
        for (int v : vals)
            if (v) return 1;
        return 0;
    default:
        return 0;
    }
}

inline int hard_op(OpCode op, const std::vector<int>& vals) { return hard_op(static_cast<int>(op), vals); }

inline int hard_op(OpCode op, int a, int b) { return hard_op(static_cast<int>(op), std::vector<int>{a, b}); }

/// Truth of every node, bottom-up.
inline std::vector<int> propagate_hard_truths(const RuleGraph& g, const TruthAssignment& y) {
    std::vector<int> truth(g.size(), 0);
    for (const auto& level : topo_levels(g)) {
        for (int v : level) {
            const GraphNode& n = g.nodes[static_cast<std::size_t>(v)];
            if (n.mask == 1) {
                truth[static_cast<std::size_t>(v)] = y.at(static_cast<std::size_t>(n.concept_id - 1)) ? 1 : 0;
                continue;
            }
            std::vector<int> vals;
            for (const auto& e : g.in_edges(v)) {
                int t = truth[static_cast<std::size_t>(e.src)];
                vals.push_back(e.neg == -1 ? 1 - t : t);
            }
            truth[static_cast<std::size_t>(v)] = hard_op(n.op, vals);
        }
    }
    return truth;
}

inline int rule_truth(const RuleGraph& g, const TruthAssignment& y) {
    return propagate_hard_truths(g, y)[static_cast<std::size_t>(g.root())];
}

/// 1 when any rule is violated.
inline int anomaly_label(const std::vector<RuleGraph>& rules, const TruthAssignment& y) {
    if (rules.empty()) throw std::invalid_argument("anomaly_label: empty rule list");
    for (const auto& g : rules)
        if (rule_truth(g, y) == 0) return 1;
    return 0;
}

}  // namespace rulegate

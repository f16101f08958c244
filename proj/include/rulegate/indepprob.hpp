#pragma once

#include <algorithm>
#include <set>
#include <stdexcept>
#include <vector>

#include "rulegate/boolsem.hpp"

namespace rulegate {

/// Soft operator under leaf independence.
inline double soft_op(OpCode op, double a, double b) {
    switch (op) {
    case OpCode::And: return a * b;
    case OpCode::Or: return a + b - a * b;
    case OpCode::Implies: return 1.0 - a * (1.0 - b);
    case OpCode::Iff: return a * b + (1.0 - a) * (1.0 - b);
    default: return 0.0;
    }
}

/// Probability of every node with p[c-1] for concept c. Shared concepts are treated
/// as independent occurrences, so this is exact only on tree-shaped rules.
inline std::vector<double> soft_eval_nodes(const RuleGraph& g, const std::vector<double>& p) {
    std::vector<double> q(g.size(), 0.0);
    for (const auto& level : topo_levels(g)) {
        for (int v : level) {
            const GraphNode& n = g.nodes[static_cast<std::size_t>(v)];
            if (n.mask == 1) {
                q[static_cast<std::size_t>(v)] = p.at(static_cast<std::size_t>(n.concept_id - 1));
                continue;
            }
            auto in = g.in_edges(v);
            if (in.size() != 2) throw std::logic_error("soft_eval: non-binary node");
            auto val = [&](const GraphEdge& e) {
                double x = q[static_cast<std::size_t>(e.src)];
                return e.neg == -1 ? 1.0 - x : x;
            };
            q[static_cast<std::size_t>(v)] = std::clamp(soft_op(n.op, val(in[0]), val(in[1])), 0.0, 1.0);
        }
    }
    return q;
}

/// Root probability under leaf independence.
inline double soft_eval(const RuleGraph& g, const std::vector<double>& p) {
    return soft_eval_nodes(g, p)[static_cast<std::size_t>(g.root())];
}

/// Brute-force expectation of the rule truth over independent concepts.
inline double exact_independent_prob(const RuleGraph& g, const std::vector<double>& p) {
    std::set<int> ids;
    for (const auto& n : g.nodes)
        if (n.mask == 1) ids.insert(n.concept_id);
    if (ids.size() > 16) throw std::invalid_argument("exact_independent_prob: more than 16 concepts");
    const std::vector<int> used(ids.begin(), ids.end());
    TruthAssignment y(p.size(), 0);
    double total = 0.0;
    for (unsigned mask = 0; mask < (1u << used.size()); ++mask) {
        double w = 1.0;
        for (std::size_t k = 0; k < used.size(); ++k) {
            const bool on = (mask >> k) & 1u;
            const double pc = p.at(static_cast<std::size_t>(used[k] - 1));
            y[static_cast<std::size_t>(used[k] - 1)] = on;
            w *= on ? pc : 1.0 - pc;
        }
        if (w != 0.0 && rule_truth(g, y)) total += w;
    }
    return total;
}

inline double indep_anomaly_score(const RuleGraph& g, const std::vector<double>& p) { return 1.0 - soft_eval(g, p); }

}  // namespace rulegate

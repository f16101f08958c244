#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rulegate/boolsem.hpp"
#include "rulegate/formula.hpp"

namespace rulegate {

struct MiningConfig {
    double support_thresh = 0.05;
    double confidence_pos = 0.995;
    double confidence_neg = 0.005;
    std::size_t max_rules = 25;
    double compound_conf = 0.995;
    std::size_t per_parent_pair_limit = 5;
    std::size_t consequent_pool = 8;
};

struct MinedRule {
    Formula formula;
    std::string text;
    long support = 0;         // rows where the antecedent holds
    double confidence = 0.0;  // fraction of those rows where the rule holds
    double lift = 0.0;
    std::string provenance;   // pairwise-pos | pairwise-neg | compound | handwritten
};

/// Rule text followed by its statistics as a trailing comment.
inline std::string to_rules_line(const MinedRule& r) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "  # sup=%ld, conf=%.3f, lift=%.2f, %s", r.support, r.confidence, r.lift, r.provenance.c_str());
    return r.text + buf;
}

namespace detail {

inline void check_labels(const std::vector<TruthAssignment>& y, std::size_t N) {
    for (const auto& row : y)
        if (row.size() != N) throw std::invalid_argument("mining: label width != vocabulary size");
}

inline void rank_rules(std::vector<MinedRule>& rules) {
    std::sort(rules.begin(), rules.end(), [](const MinedRule& a, const MinedRule& b) {
        const double da = std::abs(a.confidence - 0.5), db = std::abs(b.confidence - 0.5);
        if (da != db) return da > db;
        if (a.support != b.support) return a.support > b.support;
        return a.text < b.text;
    });
}

}  // namespace detail

/// Ordered pairs A != B: A -> B when P(B|A) >= confidence_pos, A -> !B when
/// P(B|A) <= confidence_neg, both subject to P(A) >= support_thresh.
inline std::vector<MinedRule> mine_pairwise(const std::vector<TruthAssignment>& y, const std::vector<std::string>& names,
                                            const MiningConfig& cfg = {}) {
    const std::size_t N = names.size();
    detail::check_labels(y, N);
    const double M = static_cast<double>(y.size());
    std::vector<MinedRule> out;
    if (y.empty()) return out;
    std::vector<long> count(N, 0);
    std::vector<std::vector<long>> both(N, std::vector<long>(N, 0));
    for (const auto& row : y) {
        for (std::size_t a = 0; a < N; ++a) {
            if (!row[a]) continue;
            ++count[a];
            for (std::size_t b = 0; b < N; ++b) both[a][b] += row[b] != 0;
        }
    }
    for (std::size_t a = 0; a < N; ++a) {
        if (static_cast<double>(count[a]) / M < cfg.support_thresh || count[a] == 0) continue;
        for (std::size_t b = 0; b < N; ++b) {
            if (a == b) continue;
            const double conf = static_cast<double>(both[a][b]) / static_cast<double>(count[a]);
            const double pb = static_cast<double>(count[b]) / M;
            MinedRule r;
            r.support = count[a];
            if (conf >= cfg.confidence_pos) {
                r.formula = Formula::node(OpCode::Implies, {{Formula::leaf(names[a]), false}, {Formula::leaf(names[b]), false}});
                r.confidence = conf;
                r.lift = pb > 0 ? conf / pb : 0.0;
                r.provenance = "pairwise-pos";
            } else if (conf <= cfg.confidence_neg) {
                r.formula = Formula::node(OpCode::Implies, {{Formula::leaf(names[a]), false}, {Formula::leaf(names[b]), true}});
                r.confidence = 1.0 - conf;
                r.lift = pb < 1 ? (1.0 - conf) / (1.0 - pb) : 0.0;
                r.provenance = "pairwise-neg";
            } else {
                continue;
            }
            r.text = format(r.formula);
            out.push_back(std::move(r));
        }
    }
    detail::rank_rules(out);
    if (out.size() > cfg.max_rules) out.resize(cfg.max_rules);
    return out;
}

/// Depth-2 consequents A -> (B & C), A -> (B | C), A -> (B -> C) over the most
/// confident singleton consequents of each antecedent. OR and IMP candidates already
/// implied by a single-literal rule are skipped.
inline std::vector<MinedRule> mine_compound(const std::vector<TruthAssignment>& y, const std::vector<std::string>& names,
                                            const MiningConfig& cfg = {}) {
    const std::size_t N = names.size();
    detail::check_labels(y, N);
    std::vector<MinedRule> out;
    if (y.empty()) return out;
    const double M = static_cast<double>(y.size());
    for (std::size_t a = 0; a < N; ++a) {
        std::vector<const TruthAssignment*> rows;
        for (const auto& row : y)
            if (row[a]) rows.push_back(&row);
        if (rows.empty() || static_cast<double>(rows.size()) / M < cfg.support_thresh) continue;
        const double na = static_cast<double>(rows.size());
        auto cond = [&](const std::function<bool(const TruthAssignment&)>& pred) {
            double k = 0;
            for (const auto* r : rows) k += pred(*r);
            return k / na;
        };
        auto marginal = [&](const std::function<bool(const TruthAssignment&)>& pred) {
            double k = 0;
            for (const auto& r : y) k += pred(r);
            return k / M;
        };
        std::vector<std::pair<double, std::size_t>> single;
        for (std::size_t b = 0; b < N; ++b)
            if (b != a) single.push_back({cond([b](const TruthAssignment& r) { return r[b] != 0; }), b});
        std::stable_sort(single.begin(), single.end(), [](const auto& p, const auto& q) { return p.first > q.first; });
        if (single.size() > cfg.consequent_pool) single.resize(cfg.consequent_pool);
        std::vector<double> pconf(N, 0.0);
        for (std::size_t b = 0; b < N; ++b)
            if (b != a) pconf[b] = cond([b](const TruthAssignment& r) { return r[b] != 0; });

        std::vector<MinedRule> local;
        auto emit = [&](OpCode inner, std::size_t b, std::size_t c, const std::function<bool(const TruthAssignment&)>& pred) {
            const double conf = cond(pred);
            if (conf < cfg.compound_conf) return;
            const double pm = marginal(pred);
            MinedRule r;
            r.formula = Formula::node(OpCode::Implies,
                                      {{Formula::leaf(names[a]), false},
                                       {Formula::node(inner, {{Formula::leaf(names[b]), false}, {Formula::leaf(names[c]), false}}), false}});
            r.text = format(r.formula);
            r.support = static_cast<long>(rows.size());
            r.confidence = conf;
            r.lift = pm > 0 ? conf / pm : 0.0;
            r.provenance = "compound";
            local.push_back(std::move(r));
        };
        for (std::size_t i = 0; i < single.size(); ++i) {
            for (std::size_t j = 0; j < single.size(); ++j) {
                if (i == j) continue;
                const std::size_t b = single[i].second, c = single[j].second;
                if (i < j) {
                    emit(OpCode::And, b, c, [b, c](const TruthAssignment& r) { return r[b] && r[c]; });
                    if (pconf[b] < cfg.confidence_pos && pconf[c] < cfg.confidence_pos)
                        emit(OpCode::Or, b, c, [b, c](const TruthAssignment& r) { return r[b] || r[c]; });
                }
                if (pconf[c] < cfg.confidence_pos && pconf[b] > cfg.confidence_neg)
                    emit(OpCode::Implies, b, c, [b, c](const TruthAssignment& r) { return !r[b] || r[c]; });
            }
        }
        detail::rank_rules(local);
        if (local.size() > cfg.per_parent_pair_limit) local.resize(cfg.per_parent_pair_limit);
        out.insert(out.end(), local.begin(), local.end());
    }
    detail::rank_rules(out);
    return out;
}

/// Marks every ancestor present whenever a descendant is. `parents[c]` lists the
/// direct parents of concept c (0-based).
inline std::vector<TruthAssignment> upward_closure(std::vector<TruthAssignment> y, const std::map<int, std::vector<int>>& parents) {
    std::map<int, std::vector<int>> ancestors;
    std::map<int, int> state;  // 1 = on stack, 2 = done
    std::function<const std::vector<int>&(int)> visit = [&](int c) -> const std::vector<int>& {
        auto& st = state[c];
        if (st == 1) throw std::invalid_argument("hierarchy contains a cycle through concept " + std::to_string(c));
        if (st == 2) return ancestors[c];
        st = 1;
        std::vector<int> acc;
        if (auto it = parents.find(c); it != parents.end()) {
            for (int p : it->second) {
                acc.push_back(p);
                const auto& up = visit(p);
                acc.insert(acc.end(), up.begin(), up.end());
            }
        }
        std::sort(acc.begin(), acc.end());
        acc.erase(std::unique(acc.begin(), acc.end()), acc.end());
        state[c] = 2;
        return ancestors[c] = std::move(acc);
    };
    for (const auto& [c, ps] : parents) visit(c);
    for (auto& row : y) {
        const TruthAssignment orig = row;
        for (const auto& [c, anc] : ancestors) {
            if (c < 0 || static_cast<std::size_t>(c) >= row.size() || !orig[static_cast<std::size_t>(c)]) continue;
            for (int p : anc) {
                if (p < 0 || static_cast<std::size_t>(p) >= row.size()) throw std::out_of_range("hierarchy concept out of range");
                row[static_cast<std::size_t>(p)] = 1;
            }
        }
    }
    return y;
}

}  // namespace rulegate

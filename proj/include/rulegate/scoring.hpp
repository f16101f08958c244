#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rulegate/gates.hpp"

namespace rulegate {

struct RuleScore {
    int rule_id = 0;
    double satisfaction = 0.5;           // root truth estimate
    double violation = 0.5;              // s_r
    std::optional<double> antecedent;    // present for implication roots
    bool gated = false;
};

/// max(0, a - tau) / (1 - tau).
inline double antecedent_gate(double a, double tau) {
    if (!(tau >= 0.0 && tau < 1.0)) throw std::invalid_argument("tau must be in [0, 1)");
    return std::max(0.0, a - tau) / (1.0 - tau);
}

/// Violation 1 - t, weighted by the antecedent gate when an antecedent is given.
inline RuleScore violation_score(int rule_id, double t_root, std::optional<double> antecedent, double tau, bool gate) {
    if (!(tau >= 0.0 && tau < 1.0)) throw std::invalid_argument("tau must be in [0, 1)");
    RuleScore s{rule_id, t_root, 1.0 - t_root, antecedent, false};
    if (gate && antecedent) {
        s.violation = antecedent_gate(*antecedent, tau) * (1.0 - t_root);
        s.gated = true;
    }
    return s;
}

/// Antecedent estimate per row for an implication root (its pos=0 operand, negation
/// applied); nullopt for other operators.
inline std::optional<Vector> antecedent_probs(const RuleGraph& g, const NodeTable& nt) {
    const int root = g.root();
    if (g.is_leaf(root) || g.nodes[static_cast<std::size_t>(root)].op != OpCode::Implies) return std::nullopt;
    const GraphEdge e = g.in_edges(root).front();
    Vector a = nt.soft[static_cast<std::size_t>(e.src)];
    if (e.neg == -1) a = (1.0 - a.array()).matrix();
    return a;
}

/// Root truth from leaf features and probabilities with trained gates.
inline double predict_root(const RuleGraph& g, const Vector& z, const Vector& p, const GateSet& gates) {
    NodeTable nt = propagate_gates(g, z, p, gates);
    return nt.soft[static_cast<std::size_t>(g.root())](0);
}

enum class Aggregation { Max, Mean, Geo, Min };

inline Aggregation parse_aggregation(const std::string& s) {
    if (s == "max") return Aggregation::Max;
    if (s == "mean") return Aggregation::Mean;
    if (s == "geo") return Aggregation::Geo;
    if (s == "min") return Aggregation::Min;
    throw std::invalid_argument("unknown aggregation: " + s);
}

inline const char* aggregation_name(Aggregation a) {
    switch (a) {
    case Aggregation::Max: return "max";
    case Aggregation::Mean: return "mean";
    case Aggregation::Geo: return "geo";
    case Aggregation::Min: return "min";
    }
    return "?";
}

/// Sample anomaly score. Min is 1 - min satisfaction; the others summarize violations.
inline double aggregate(const std::vector<RuleScore>& scores, Aggregation mode) {
    if (scores.empty()) throw std::invalid_argument("aggregate: no scores");
    switch (mode) {
    case Aggregation::Max: {
        double m = 0.0;
        for (const auto& s : scores) m = std::max(m, s.violation);
        return m;
    }
    case Aggregation::Mean: {
        double t = 0.0;
        for (const auto& s : scores) t += s.violation;
        return t / static_cast<double>(scores.size());
    }
    case Aggregation::Geo: {
        double t = 0.0;
        for (const auto& s : scores) {
            if (s.violation <= 0.0) return 0.0;
            t += std::log(s.violation);
        }
        return std::exp(t / static_cast<double>(scores.size()));
    }
    case Aggregation::Min: {
        double m = 1.0;
        for (const auto& s : scores) m = std::min(m, s.satisfaction);
        return 1.0 - m;
    }
    }
    return 0.0;
}

/// Rule ids by descending violation; ties go to the lower id.
inline std::vector<int> attribute_topk(const std::vector<RuleScore>& scores, std::size_t k) {
    std::vector<RuleScore> s = scores;
    std::stable_sort(s.begin(), s.end(), [](const RuleScore& a, const RuleScore& b) {
        if (a.violation != b.violation) return a.violation > b.violation;
        return a.rule_id < b.rule_id;
    });
    std::vector<int> out;
    for (std::size_t i = 0; i < s.size() && i < k; ++i) out.push_back(s[i].rule_id);
    return out;
}

// ---- metrics: label 1 is the positive (anomalous) class, higher score = more anomalous

namespace detail {

inline std::pair<std::size_t, std::size_t> class_counts(const std::vector<int>& labels) {
    std::size_t pos = 0;
    for (int l : labels) pos += l != 0;
    return {pos, labels.size() - pos};
}

/// Indices sorted by descending score.
inline std::vector<std::size_t> order_desc(const std::vector<double>& s) {
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    return idx;
}

}  // namespace detail

/// Mann-Whitney AUROC with midranks; undefined for single-class labels.
inline std::optional<double> auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auroc: size mismatch");
    const auto [P, N] = detail::class_counts(labels);
    if (P == 0 || N == 0) return std::nullopt;
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k)
            if (labels[idx[k]]) rank_sum += mid;
        i = j;
    }
    const double p = static_cast<double>(P), n = static_cast<double>(N);
    return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

/// Step-wise area under the precision-recall curve; tied scores form one threshold.
inline std::optional<double> average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("average_precision: size mismatch");
    const auto [P, N] = detail::class_counts(labels);
    (void)N;
    if (P == 0) return std::nullopt;
    const auto idx = detail::order_desc(scores);
    double ap = 0.0, tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        double gained = 0.0;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            if (labels[idx[j]]) {
                tp += 1.0;
                gained += 1.0;
            } else {
                fp += 1.0;
            }
            ++j;
        }
        if (gained > 0) ap += (gained / static_cast<double>(P)) * (tp / (tp + fp));
        i = j;
    }
    return ap;
}

/// False positive rate at the highest threshold reaching 95% recall.
inline std::optional<double> fpr_at_95tpr(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("fpr_at_95tpr: size mismatch");
    const auto [P, N] = detail::class_counts(labels);
    if (P == 0 || N == 0) return std::nullopt;
    const auto idx = detail::order_desc(scores);
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            (labels[idx[j]] ? tp : fp) += 1.0;
            ++j;
        }
        if (tp / static_cast<double>(P) >= 0.95) return fp / static_cast<double>(N);
        i = j;
    }
    return 1.0;
}

inline double accuracy_at_half(const std::vector<double>& probs, const std::vector<int>& labels) {
    if (probs.empty()) return 0.0;
    std::size_t ok = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) ok += (probs[i] > 0.5) == (labels[i] != 0);
    return static_cast<double>(ok) / static_cast<double>(probs.size());
}

}  // namespace rulegate

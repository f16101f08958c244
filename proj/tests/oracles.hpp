#pragma once
// Reference implementations used as independent oracles by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <rulegate/rulegate.hpp>

namespace oracle {

using rulegate::Formula;
using rulegate::OpCode;

/// Direct recursive evaluation over the formula tree, n-ary operators included.
inline bool eval(const Formula& f, const std::map<std::string, bool>& v) {
    if (f.is_leaf()) return v.at(f.concept_name);
    std::vector<bool> xs;
    for (const auto& e : f.children) xs.push_back(eval(*e.child, v) != e.negated);
    switch (f.op) {
    case OpCode::And: return std::all_of(xs.begin(), xs.end(), [](bool x) { return x; });
    case OpCode::Or: return std::any_of(xs.begin(), xs.end(), [](bool x) { return x; });
    case OpCode::Implies: return !xs.at(0) || xs.at(1);
    case OpCode::Iff: return std::all_of(xs.begin(), xs.end(), [&](bool x) { return x == xs[0]; });
    default: throw std::logic_error("oracle: bad op");
    }
}

inline std::vector<std::string> atom_names(int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back("a" + std::to_string(i));
    return out;
}

/// Random formula over the given atoms. AND/OR get 2..3 operands, IFF/IMPLIES 2.
/// With a `pool`, atoms are consumed from it so every atom occurs at most once.
inline Formula random_formula(std::mt19937_64& rng, const std::vector<std::string>& atoms, int depth,
                              std::vector<std::string>* pool = nullptr) {
    std::uniform_real_distribution<double> U(0, 1);
    auto leaf = [&] {
        if (pool) {
            std::uniform_int_distribution<std::size_t> P(0, pool->size() - 1);
            const std::size_t k = P(rng);
            std::string name = (*pool)[k];
            pool->erase(pool->begin() + static_cast<std::ptrdiff_t>(k));
            return Formula::leaf(name);
        }
        std::uniform_int_distribution<std::size_t> A(0, atoms.size() - 1);
        return Formula::leaf(atoms[A(rng)]);
    };
    if (depth == 0 || U(rng) < 0.25 || (pool && pool->size() < 4)) return leaf();
    const OpCode ops[] = {OpCode::Iff, OpCode::Implies, OpCode::And, OpCode::Or};
    const OpCode op = ops[std::uniform_int_distribution<int>(0, 3)(rng)];
    int arity = 2;
    if (op == OpCode::And || op == OpCode::Or) arity = std::uniform_int_distribution<int>(2, 3)(rng);
    std::vector<std::pair<Formula, bool>> kids;
    for (int i = 0; i < arity; ++i) {
        if (pool && pool->empty()) break;
        kids.push_back({random_formula(rng, atoms, depth - 1, pool), U(rng) < 0.3});
    }
    if (kids.size() == 1) return kids.front().first;
    return Formula::node(op, std::move(kids));
}

inline int formula_depth(const Formula& f) {
    int d = 0;
    for (const auto& e : f.children) d = std::max(d, formula_depth(*e.child) + 1);
    return d;
}

/// Mann-Whitney by counting every positive/negative pair; ties count one half.
inline std::optional<double> auroc_pairs(const std::vector<double>& s, const std::vector<int>& y) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!y[i]) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j]) continue;
            den += 1;
            num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    }
    if (den == 0) return std::nullopt;
    return num / den;
}

/// Average precision from the full precision-recall curve, one point per distinct
/// threshold: sum over thresholds of (recall gain) * precision.
inline std::optional<double> ap_curve(const std::vector<double>& s, const std::vector<int>& y) {
    const double P = static_cast<double>(std::count(y.begin(), y.end(), 1));
    if (P == 0) return std::nullopt;
    std::vector<double> th = s;
    std::sort(th.begin(), th.end(), std::greater<>());
    th.erase(std::unique(th.begin(), th.end()), th.end());
    double ap = 0, prev_recall = 0;
    for (double t : th) {
        double tp = 0, fp = 0;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (s[i] >= t) (y[i] ? tp : fp) += 1;
        const double recall = tp / P;
        ap += (recall - prev_recall) * (tp / (tp + fp));
        prev_recall = recall;
    }
    return ap;
}

/// Labels with planted implications (conf 1.0) and exclusions on top of independent noise.
struct PlantedData {
    std::vector<rulegate::TruthAssignment> y;
    std::vector<std::string> names;
    std::vector<std::string> implications;  // "a -> b"
    std::vector<std::string> exclusions;    // "a -> !b"
};

inline PlantedData planted_labels(std::size_t M, std::uint64_t seed) {
    PlantedData d;
    d.names = {"c0", "c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8", "c9", "c10", "c11"};
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution base(0.3), ante(0.1);
    for (std::size_t i = 0; i < M; ++i) {
        rulegate::TruthAssignment y(12);
        for (int c = 4; c < 12; ++c) y[static_cast<std::size_t>(c)] = base(rng);
        // c0 -> c4, c1 -> c5 (antecedents with support 0.1)
        y[0] = ante(rng);
        y[1] = ante(rng);
        if (y[0]) y[4] = 1;
        if (y[1]) y[5] = 1;
        // c2 -> !c6, c3 -> !c7
        y[2] = ante(rng);
        y[3] = ante(rng);
        if (y[2]) y[6] = 0;
        if (y[3]) y[7] = 0;
        d.y.push_back(std::move(y));
    }
    d.implications = {"c0 -> c4", "c1 -> c5"};
    d.exclusions = {"c2 -> !c6", "c3 -> !c7"};
    return d;
}

/// True when every assignment satisfying all of `premises` satisfies `rule`.
inline bool entailed(const std::string& rule, const std::vector<std::string>& premises, const std::vector<std::string>& names) {
    std::vector<Formula> ps;
    for (const auto& p : premises) ps.push_back(rulegate::parse(p));
    const Formula r = rulegate::parse(rule);
    for (unsigned m = 0; m < (1u << names.size()); ++m) {
        std::map<std::string, bool> v;
        for (std::size_t c = 0; c < names.size(); ++c) v[names[c]] = (m >> c) & 1u;
        bool ok = true;
        for (const auto& p : ps) ok = ok && eval(p, v);
        if (ok && !eval(r, v)) return false;
    }
    return true;
}

/// Logits and labels with labels drawn from sigmoid(logit / T_true).
inline void miscalibrated(std::size_t M, double T_true, std::uint64_t seed, rulegate::Matrix& L, rulegate::Matrix& Y) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> G(0.0, 3.0);
    std::uniform_real_distribution<double> U(0, 1);
    L.resize(1, static_cast<Eigen::Index>(M));
    Y.resize(1, static_cast<Eigen::Index>(M));
    for (Eigen::Index i = 0; i < L.cols(); ++i) {
        L(0, i) = G(rng);
        Y(0, i) = U(rng) < rulegate::sigmoid(L(0, i) / T_true) ? 1.0 : 0.0;
    }
}

}  // namespace oracle

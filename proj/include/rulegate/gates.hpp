#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "rulegate/boolsem.hpp"
#include "rulegate/cache.hpp"
#include "rulegate/leafbank.hpp"
#include "rulegate/neural.hpp"
#include "rulegate/rulegraph.hpp"

namespace rulegate {

enum class TrainMode { Sem, ChimerasOnly, Mixed, AdStrictMixed };

inline const char* mode_name(TrainMode m) {
    switch (m) {
    case TrainMode::Sem: return "sem";
    case TrainMode::ChimerasOnly: return "chimeras_only";
    case TrainMode::Mixed: return "mixed";
    case TrainMode::AdStrictMixed: return "ad_strict_mixed";
    }
    return "?";
}

inline TrainMode parse_mode(const std::string& s) {
    if (s == "sem") return TrainMode::Sem;
    if (s == "chimeras_only") return TrainMode::ChimerasOnly;
    if (s == "mixed") return TrainMode::Mixed;
    if (s == "ad_strict_mixed") return TrainMode::AdStrictMixed;
    throw std::invalid_argument("unknown negatives mode: " + s);
}

inline bool uses_same_image(TrainMode m) { return m != TrainMode::ChimerasOnly; }
inline bool uses_chimeras(TrainMode m) { return m != TrainMode::Sem; }

struct GateConfig {
    int epochs_level = 2;
    int batch = 64;
    double lr = 1e-3;
    int hidden_layers = 2;
    TrainMode mode = TrainMode::ChimerasOnly;
    int chimera_count = 1;  // derangements drawn per batch
    std::uint64_t seed = 123;
    int threads = 1;
    bool train_missing_only = true;  // reuse cached gates when the key matches
};

/// Internal node id -> gate.
using GateSet = std::map<int, Mlp>;

inline std::vector<int> gate_sizes(int F, int hidden_layers) {
    std::vector<int> s{2 * (F + 1)};
    for (int i = 0; i < hidden_layers; ++i) s.push_back(F);
    s.push_back(1);
    return s;
}

inline std::string gate_arch(int F, int hidden_layers) { return "gate:" + arch_tag(gate_sizes(F, hidden_layers)); }

/// Architecture plus training recipe, so gates trained differently never share a key.
/// The seed is deliberately left out.
inline std::string gate_lineage_tag(const GateConfig& cfg, int F) {
    std::ostringstream os;
    os << gate_arch(F, cfg.hidden_layers) << "+neg=" << mode_name(cfg.mode) << "+ep=" << cfg.epochs_level << "+bs=" << cfg.batch
       << "+lr=" << cfg.lr << "+k=" << cfg.chimera_count;
    return os.str();
}

inline Mlp make_gate(int F, int hidden_layers, std::mt19937_64& rng) {
    Mlp m = make_mlp(gate_sizes(F, hidden_layers), rng);
    m.arch = gate_arch(F, hidden_layers);
    return m;
}

/// One operand stream: features per row, hard truth per row (negation already
/// applied), and the edge negation bit (-1 when the input has no bit slot).
struct Operand {
    const Matrix* H = nullptr;
    const std::vector<int>* truth = nullptr;
    int bit = 0;
};

/// Columns [h_l(li[k]) ; b_l ; h_r(ri[k]) ; b_r].
inline Matrix pair_inputs(const Operand& l, const Operand& r, const std::vector<Eigen::Index>& li,
                          const std::vector<Eigen::Index>& ri) {
    const Eigen::Index F = l.H->rows();
    const Eigen::Index wl = F + (l.bit >= 0), wr = r.H->rows() + (r.bit >= 0);
    Matrix U(wl + wr, static_cast<Eigen::Index>(li.size()));
    for (std::size_t k = 0; k < li.size(); ++k) {
        const auto col = static_cast<Eigen::Index>(k);
        U.block(0, col, F, 1) = l.H->col(li[k]);
        if (l.bit >= 0) U(F, col) = l.bit;
        U.block(wl, col, r.H->rows(), 1) = r.H->col(ri[k]);
        if (r.bit >= 0) U(wl + r.H->rows(), col) = r.bit;
    }
    return U;
}

struct GateOutput {
    Vector h;
    double t = 0.5;
};

inline GateOutput gate_forward(const Mlp& gate, const Vector& hl, bool nl, const Vector& hr, bool nr) {
    if (hl.size() != hr.size()) throw std::invalid_argument("gate_forward: operand dims differ");
    Vector u(2 * hl.size() + 2);
    u << hl, (nl ? 1.0 : 0.0), hr, (nr ? 1.0 : 0.0);
    auto r = forward(gate, u);
    return {r.h, sigmoid(r.logits(0))};
}

struct PairBatch {
    Matrix inputs;
    Matrix targets;  // 1 x B
};

/// Operand-level mixing: left operand of row i, right operand of row perm[i]; the
/// target is the operator applied to the truths each operand carries.
inline PairBatch build_chimera_batch(const Operand& l, const Operand& r, const std::vector<Eigen::Index>& rows,
                                     const std::vector<std::size_t>& perm, OpCode op) {
    if (rows.size() < 2) throw std::invalid_argument("chimera batch needs at least 2 rows");
    if (perm.size() != rows.size()) throw std::invalid_argument("permutation size mismatch");
    std::vector<Eigen::Index> ri(rows.size());
    PairBatch b;
    b.targets.resize(1, static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (perm[i] == i || perm[i] >= rows.size()) throw std::invalid_argument("permutation is not a derangement");
        ri[i] = rows[perm[i]];
        b.targets(0, static_cast<Eigen::Index>(i)) =
            hard_op(op, (*l.truth)[static_cast<std::size_t>(rows[i])], (*r.truth)[static_cast<std::size_t>(ri[i])]);
    }
    b.inputs = pair_inputs(l, r, rows, ri);
    return b;
}

inline PairBatch build_same_batch(const Operand& l, const Operand& r, const std::vector<Eigen::Index>& rows, OpCode op) {
    PairBatch b;
    b.targets.resize(1, static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto s = static_cast<std::size_t>(rows[i]);
        b.targets(0, static_cast<Eigen::Index>(i)) = hard_op(op, (*l.truth)[s], (*r.truth)[s]);
    }
    b.inputs = pair_inputs(l, r, rows, rows);
    return b;
}

/// Random nontrivial cyclic shift of 0..B-1.
inline std::vector<std::size_t> cyclic_derangement(std::size_t B, std::mt19937_64& rng) {
    if (B < 2) throw std::invalid_argument("no derangement of a single row");
    std::uniform_int_distribution<std::size_t> K(1, B - 1);
    const std::size_t k = K(rng);
    std::vector<std::size_t> p(B);
    for (std::size_t i = 0; i < B; ++i) p[i] = (i + k) % B;
    return p;
}

/// Minibatch Adam on same-image and/or chimera pairs. `same_ok` restricts the rows
/// that may form same-image pairs (empty = all). Returns the number of steps.
inline long train_pairs(Mlp& net, const Operand& l, const Operand& r, OpCode op, TrainMode mode, int epochs, int batch,
                        double lr, int chimera_count, const std::vector<bool>& same_ok, std::mt19937_64& rng) {
    const std::size_t M = l.truth->size();
    if (M == 0) throw std::invalid_argument("train: empty data");
    AdamState opt = make_adam(net, lr);
    std::vector<Eigen::Index> order(M);
    std::iota(order.begin(), order.end(), 0);
    Grads g;
    long steps = 0;
    for (int ep = 0; ep < epochs; ++ep) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t s = 0; s < M; s += static_cast<std::size_t>(batch)) {
            const std::size_t e = std::min(M, s + static_cast<std::size_t>(batch));
            std::vector<Eigen::Index> rows(order.begin() + static_cast<std::ptrdiff_t>(s), order.begin() + static_cast<std::ptrdiff_t>(e));
            std::vector<PairBatch> parts;
            if (uses_same_image(mode)) {
                std::vector<Eigen::Index> keep;
                for (auto i : rows)
                    if (same_ok.empty() || same_ok[static_cast<std::size_t>(i)]) keep.push_back(i);
                if (!keep.empty()) parts.push_back(build_same_batch(l, r, keep, op));
            }
            if (uses_chimeras(mode) && rows.size() >= 2)
                for (int c = 0; c < chimera_count; ++c) parts.push_back(build_chimera_batch(l, r, rows, cyclic_derangement(rows.size(), rng), op));
            if (parts.empty()) continue;
            Eigen::Index cols = 0;
            for (const auto& p : parts) cols += p.inputs.cols();
            Matrix U(parts.front().inputs.rows(), cols), T(1, cols);
            Eigen::Index at = 0;
            for (const auto& p : parts) {
                U.middleCols(at, p.inputs.cols()) = p.inputs;
                T.middleCols(at, p.inputs.cols()) = p.targets;
                at += p.inputs.cols();
            }
            backward(net, U, T, g);
            adam_step(opt, net, g);
            ++steps;
        }
    }
    return steps;
}

/// Per-node state over a dataset: features (F x M), hard truths, soft truths.
struct NodeTable {
    std::vector<Matrix> H;
    std::vector<std::vector<int>> hard;
    std::vector<Vector> soft;
};

inline std::vector<std::vector<int>> hard_truth_table(const RuleGraph& g, const std::vector<TruthAssignment>& y) {
    std::vector<std::vector<int>> out(g.size(), std::vector<int>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i) {
        auto t = propagate_hard_truths(g, y[i]);
        for (std::size_t v = 0; v < g.size(); ++v) out[v][i] = t[v];
    }
    return out;
}

inline int child_bit(const GraphEdge& e) { return e.neg == -1 ? 1 : 0; }

inline std::vector<int> folded(const std::vector<int>& t, const GraphEdge& e) {
    if (e.neg != -1) return t;
    std::vector<int> f(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) f[i] = 1 - t[i];
    return f;
}

/// Applies a gate to every row (same-image operands); fills H and soft of v.
inline void apply_gate(const RuleGraph& g, int v, const Mlp& gate, NodeTable& nt) {
    auto in = g.in_edges(v);
    const auto& Hl = nt.H[static_cast<std::size_t>(in[0].src)];
    const auto& Hr = nt.H[static_cast<std::size_t>(in[1].src)];
    const Eigen::Index F = Hl.rows(), M = Hl.cols();
    Matrix U(2 * F + 2, M);
    U.topRows(F) = Hl;
    U.row(F).setConstant(child_bit(in[0]));
    U.middleRows(F + 1, F) = Hr;
    U.row(2 * F + 1).setConstant(child_bit(in[1]));
    Matrix h;
    Matrix logits = forward_batch(gate, U, &h);
    nt.H[static_cast<std::size_t>(v)] = std::move(h);
    nt.soft[static_cast<std::size_t>(v)] = logits.row(0).transpose().unaryExpr([](double x) { return sigmoid(x); });
}

/// Leaf rows of the table; internal rows are filled level by level.
inline NodeTable init_table(const RuleGraph& g, const Matrix& Z, const Matrix& P, const std::vector<TruthAssignment>* y) {
    NodeTable nt;
    nt.H.resize(g.size());
    nt.soft.resize(g.size());
    if (y) nt.hard = hard_truth_table(g, *y);
    for (std::size_t v = 0; v < g.size(); ++v) {
        if (g.nodes[v].mask != 1) continue;
        nt.H[v] = Z;
        nt.soft[v] = P.row(g.nodes[v].concept_id - 1).transpose();
    }
    return nt;
}

struct TrainStats {
    long gates_trained = 0;
    long cache_hits = 0;
    long steps = 0;
};

/// Shared state for training the gates of one rule on one dataset.
struct RuleTrainer {
    const RuleGraph& g;
    const GateConfig& cfg;
    std::string encoder_fp;
    int F;
    GateCache* cache;
    NodeTable table;
    std::vector<bool> rule_holds;  // per row, for AD-strict pairs
    std::vector<int> depth;

    RuleTrainer(const RuleGraph& graph, const GateConfig& c, const LeafBank& bank, const Matrix& Z, const Matrix& P,
                const std::vector<TruthAssignment>& y, GateCache* cache_)
        : g(graph), cfg(c), encoder_fp(fingerprint(bank)), F(bank.feature_dim()), cache(cache_),
          table(init_table(graph, Z, P, &y)), depth(depths(graph)) {
        const auto& root = table.hard[static_cast<std::size_t>(g.root())];
        rule_holds.resize(root.size());
        for (std::size_t i = 0; i < root.size(); ++i) rule_holds[i] = root[i] == 1;
    }

    CacheKey key(int v) const { return make_cache_key(g, v, encoder_fp, gate_lineage_tag(cfg, F), F); }

    Mlp train_node(int v, TrainStats& st, std::mutex& mu) const {
        const CacheKey k = key(v);
        if (cache && cfg.train_missing_only) {
            if (auto hit = cache->load(k)) {
                std::lock_guard<std::mutex> lock(mu);
                ++st.cache_hits;
                return *hit;
            }
        }
        // one stream per gate: results do not depend on thread scheduling
        std::mt19937_64 rng(cfg.seed ^ sha256_u64(k.key + "|mode=" + mode_name(cfg.mode)));
        Mlp gate = make_gate(F, cfg.hidden_layers, rng);
        auto in = g.in_edges(v);
        const auto tl = folded(table.hard[static_cast<std::size_t>(in[0].src)], in[0]);
        const auto tr = folded(table.hard[static_cast<std::size_t>(in[1].src)], in[1]);
        Operand l{&table.H[static_cast<std::size_t>(in[0].src)], &tl, child_bit(in[0])};
        Operand r{&table.H[static_cast<std::size_t>(in[1].src)], &tr, child_bit(in[1])};
        const std::vector<bool> none;
        const long steps = train_pairs(gate, l, r, g.nodes[static_cast<std::size_t>(v)].op, cfg.mode, cfg.epochs_level, cfg.batch,
                                       cfg.lr, cfg.chimera_count, cfg.mode == TrainMode::AdStrictMixed ? rule_holds : none, rng);
        if (cache) cache->store(k, gate);
        std::lock_guard<std::mutex> lock(mu);
        ++st.gates_trained;
        st.steps += steps;
        return gate;
    }

    /// Trains (or loads) every gate at depth d; lower gates must already be applied.
    GateSet train_level(int d, const GateSet& lower, TrainStats& st) {
        std::vector<int> nodes;
        for (std::size_t v = 0; v < g.size(); ++v) {
            if (depth[v] == d && g.nodes[v].mask == 0) nodes.push_back(static_cast<int>(v));
            if (depth[v] < d && g.nodes[v].mask == 0) {
                if (!lower.count(static_cast<int>(v))) throw std::logic_error("train_level: missing lower gate for node " + std::to_string(v));
                if (table.H[v].size() == 0) apply_gate(g, static_cast<int>(v), lower.at(static_cast<int>(v)), table);
            }
        }
        std::vector<Mlp> out(nodes.size());
        std::mutex mu;
        const int threads = std::max(1, std::min<int>(cfg.threads, static_cast<int>(nodes.size())));
        if (threads == 1) {
            for (std::size_t i = 0; i < nodes.size(); ++i) out[i] = train_node(nodes[i], st, mu);
        } else {
            std::atomic<std::size_t> next{0};
            std::vector<std::exception_ptr> errs(static_cast<std::size_t>(threads));
            std::vector<std::thread> pool;
            for (int t = 0; t < threads; ++t) {
                pool.emplace_back([&, t] {
                    try {
                        for (std::size_t i; (i = next++) < nodes.size();) out[i] = train_node(nodes[i], st, mu);
                    } catch (...) {
                        errs[static_cast<std::size_t>(t)] = std::current_exception();
                    }
                });
            }
            for (auto& th : pool) th.join();
            for (auto& e : errs)
                if (e) std::rethrow_exception(e);
        }
        GateSet level;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            level[nodes[i]] = out[i];
            apply_gate(g, nodes[i], out[i], table);
        }
        return level;
    }
};

/// All gates of a rule, bottom-up by depth, reusing cached subtrees.
inline GateSet train_rule(const RuleGraph& g, const LeafBank& bank, const Matrix& Z, const Matrix& P,
                          const std::vector<TruthAssignment>& y, const GateConfig& cfg, GateCache* cache = nullptr,
                          TrainStats* stats = nullptr) {
    if (y.empty()) throw std::invalid_argument("train_rule: empty data");
    RuleTrainer tr(g, cfg, bank, Z, P, y, cache);
    TrainStats st;
    GateSet all;
    const int dmax = max_depth(g);
    for (int d = 1; d <= dmax; ++d) {
        GateSet level = tr.train_level(d, all, st);
        all.insert(level.begin(), level.end());
    }
    if (stats) *stats = st;
    return all;
}

/// Gate propagation over a batch; returns the full node table.
inline NodeTable propagate_gates(const RuleGraph& g, const Matrix& Z, const Matrix& P, const GateSet& gates) {
    NodeTable nt = init_table(g, Z, P, nullptr);
    for (const auto& level : topo_levels(g)) {
        for (int v : level) {
            if (g.is_leaf(v)) continue;
            auto it = gates.find(v);
            if (it == gates.end()) throw std::logic_error("missing gate for node " + std::to_string(v));
            apply_gate(g, v, it->second, nt);
        }
    }
    return nt;
}

/// Single MLP from leaf-bank features to the root truth.
struct MonoModel {
    Mlp net;
    bool chimeras = false;
};

/// Mono-N sees [z_i ; z_i] with the row's own root truth. Mono-C additionally sees
/// [z_i ; z_pi(i)] whose target applies the root operator to the left child truth of
/// row i and the right child truth of row pi(i). Budget: epochs_level per rule depth.
inline MonoModel train_monolithic(const RuleGraph& g, const Matrix& Z, const std::vector<TruthAssignment>& y, bool with_chimeras,
                                  const GateConfig& cfg) {
    if (y.empty()) throw std::invalid_argument("train_monolithic: empty data");
    const int root = g.root();
    if (g.is_leaf(root)) throw std::invalid_argument("train_monolithic: rule has no operator");
    const auto hard = hard_truth_table(g, y);
    auto in = g.in_edges(root);
    const auto tl = folded(hard[static_cast<std::size_t>(in[0].src)], in[0]);
    const auto tr = folded(hard[static_cast<std::size_t>(in[1].src)], in[1]);
    const int F = static_cast<int>(Z.rows());
    std::mt19937_64 rng(cfg.seed ^ sha256_u64(std::string("mono|") + (with_chimeras ? "C|" : "N|") + g.serialize()));
    std::vector<int> sizes{2 * F};
    for (int i = 0; i < cfg.hidden_layers; ++i) sizes.push_back(F);
    sizes.push_back(1);
    MonoModel mm{make_mlp(sizes, rng), with_chimeras};
    mm.net.arch = (with_chimeras ? "mono-c:" : "mono-n:") + mm.net.arch;
    Operand l{&Z, &tl, -1}, r{&Z, &tr, -1};
    const TrainMode mode = with_chimeras ? (cfg.mode == TrainMode::Sem ? TrainMode::Mixed : cfg.mode) : TrainMode::Sem;
    train_pairs(mm.net, l, r, g.nodes[static_cast<std::size_t>(root)].op, mode, cfg.epochs_level * max_depth(g), cfg.batch, cfg.lr,
                cfg.chimera_count, {}, rng);
    return mm;
}

inline Vector predict_monolithic(const MonoModel& mm, const Matrix& Z) {
    Matrix U(2 * Z.rows(), Z.cols());
    U.topRows(Z.rows()) = Z;
    U.bottomRows(Z.rows()) = Z;
    return forward_batch(mm.net, U).row(0).transpose().unaryExpr([](double x) { return sigmoid(x); });
}

}  // namespace rulegate

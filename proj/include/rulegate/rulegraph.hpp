#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rulegate/formula.hpp"

namespace rulegate {

class CompileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Concept names with contiguous ids 1..N.
class ConceptVocab {
public:
    ConceptVocab() = default;
    explicit ConceptVocab(std::vector<std::string> names) : names_(std::move(names)) {
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (names_[i].empty()) throw std::invalid_argument("empty concept name");
            if (!ids_.emplace(names_[i], static_cast<int>(i) + 1).second)
                throw std::invalid_argument("duplicate concept name: " + names_[i]);
        }
    }

    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id - 1)); }

    bool contains(const std::string& name) const { return ids_.count(name) != 0; }
    int id(const std::string& name) const {
        auto it = ids_.find(name);
        if (it == ids_.end()) throw CompileError("unknown atom: " + name);
        return it->second;
    }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, int> ids_;
};

struct GraphNode {
    int mask = 0;        // 1 for leaves
    int concept_id = 0;  // 1..N for leaves, 0 otherwise
    OpCode op = OpCode::None;
};

struct GraphEdge {
    int src = 0;  // child
    int dst = 0;  // parent
    int neg = 1;  // -1 when negated
    int pos = 0;  // operand slot at the parent
};

/// What a trained gate depends on besides the symbolic subtree.
struct Lineage {
    std::string encoder_fp;
    std::string arch;
    int feature_dim = 0;
};

struct RuleGraph {
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;

    std::size_t size() const { return nodes.size(); }
    bool is_leaf(int v) const { return nodes[static_cast<std::size_t>(v)].mask == 1; }

    /// In-edges of v ordered by operand slot (antecedent first for IMPLIES).
    std::vector<GraphEdge> in_edges(int v) const {
        std::vector<GraphEdge> out;
        for (const auto& e : edges)
            if (e.dst == v) out.push_back(e);
        std::stable_sort(out.begin(), out.end(), [](const GraphEdge& a, const GraphEdge& b) { return a.pos < b.pos; });
        return out;
    }

    /// The unique node with out-degree 0.
    int root() const {
        std::vector<int> outdeg(nodes.size(), 0);
        for (const auto& e : edges) ++outdeg[static_cast<std::size_t>(e.src)];
        int root = -1;
        for (std::size_t v = 0; v < nodes.size(); ++v) {
            if (outdeg[v] == 0) {
                if (root != -1) throw std::logic_error("rule graph has more than one root");
                root = static_cast<int>(v);
            }
        }
        if (root == -1) throw std::logic_error("rule graph has no root");
        return root;
    }

    std::vector<int> internal_nodes() const {
        std::vector<int> out;
        for (std::size_t v = 0; v < nodes.size(); ++v)
            if (nodes[v].mask == 0) out.push_back(static_cast<int>(v));
        return out;
    }

    /// Stable text form: node table then edge table.
    std::string serialize() const {
        std::ostringstream os;
        os << "nodes " << nodes.size() << '\n';
        for (std::size_t v = 0; v < nodes.size(); ++v)
            os << v << ' ' << nodes[v].mask << ' ' << nodes[v].concept_id << ' ' << static_cast<int>(nodes[v].op) << '\n';
        os << "edges " << edges.size() << '\n';
        for (const auto& e : edges) os << e.src << ' ' << e.dst << ' ' << e.neg << ' ' << e.pos << '\n';
        return os.str();
    }
};

/// Recursive lineage key of the subtree rooted at `node`. Commutative operators sort
/// their child keys; IMPLIES keeps operand order.
inline std::string subtree_key(const RuleGraph& g, int node, const Lineage& lin) {
    const GraphNode& n = g.nodes.at(static_cast<std::size_t>(node));
    if (n.mask == 1) return "LEAF(" + std::to_string(n.concept_id) + "|enc=" + lin.encoder_fp + ")";
    std::vector<std::string> kids;
    for (const auto& e : g.in_edges(node)) kids.push_back((e.neg == -1 ? "!" : "") + subtree_key(g, e.src, lin));
    if (is_commutative(n.op)) std::sort(kids.begin(), kids.end());
    std::string key = std::string("OP_") + op_name(n.op) + "(";
    for (std::size_t i = 0; i < kids.size(); ++i) key += (i ? "," : "") + kids[i];
    key += ")|" + lin.arch + "|" + std::to_string(lin.feature_dim);
    return key;
}

namespace detail {

class Compiler {
public:
    Compiler(const ConceptVocab& vocab, RuleGraph& g) : vocab_(vocab), g_(g) {}

    int build(const Formula& f) {
        if (f.is_leaf()) {
            g_.nodes.push_back({1, vocab_.id(f.concept_name), OpCode::None});
            return static_cast<int>(g_.nodes.size()) - 1;
        }
        const auto& kids = f.children;
        switch (f.op) {
        case OpCode::Implies:
            if (kids.size() != 2) throw CompileError("IMPLIES needs exactly 2 operands");
            {
                auto a = operand(kids[0]);  // sequenced: node ids follow operand order
                auto b = operand(kids[1]);
                return binary(OpCode::Implies, a, b);
            }
        case OpCode::Iff:
            if (kids.empty() || kids.size() > 2) throw CompileError("IFF needs 1 or 2 operands");
            break;
        case OpCode::And:
        case OpCode::Or:
            if (kids.empty()) throw CompileError(std::string(op_name(f.op)) + " needs at least 1 operand");
            break;
        default:
            throw CompileError("unknown operator");
        }
        if (kids.size() == 1) {
            // op(x) == op(x, x) for IFF/AND/OR under exact semantics
            auto a = operand(kids[0]);
            auto b = operand(kids[0]);
            return binary(f.op, a, b);
        }
        auto acc = operand(kids[0]);
        for (std::size_t i = 1; i < kids.size(); ++i) {
            auto rhs = operand(kids[i]);
            acc = {binary(f.op, acc, rhs), false};
        }
        return acc.first;
    }

private:
    using Operand = std::pair<int, bool>;  // node id, negated edge

    Operand operand(const FormulaEdge& e) { return {build(*e.child), e.negated}; }

    int binary(OpCode op, Operand a, Operand b) {
        if (is_commutative(op)) {
            auto skey = [&](const Operand& o) { return (o.second ? "!" : "") + subtree_key(g_, o.first, Lineage{}); };
            if (skey(b) < skey(a)) std::swap(a, b);
        }
        g_.nodes.push_back({0, 0, op});
        const int v = static_cast<int>(g_.nodes.size()) - 1;
        g_.edges.push_back({a.first, v, a.second ? -1 : 1, 0});
        g_.edges.push_back({b.first, v, b.second ? -1 : 1, 1});
        return v;
    }

    const ConceptVocab& vocab_;
    RuleGraph& g_;
};

}  // namespace detail

/// Compile a formula into a binary DAG: n-ary AND/OR are left-folded, single-operand
/// nodes duplicate their operand, commutative operands are put in canonical order.
inline RuleGraph compile(const Formula& f, const ConceptVocab& vocab) {
    RuleGraph g;
    const int root = detail::Compiler(vocab, g).build(f);
    // renumber in post-order by edge position so equivalent operand orders give one graph
    std::vector<int> order, id(g.size(), -1);
    std::function<void(int)> visit = [&](int v) {
        if (id[static_cast<std::size_t>(v)] >= 0) return;
        for (const auto& e : g.in_edges(v)) visit(e.src);
        id[static_cast<std::size_t>(v)] = static_cast<int>(order.size());
        order.push_back(v);
    };
    visit(root);
    RuleGraph out;
    for (int v : order) out.nodes.push_back(g.nodes[static_cast<std::size_t>(v)]);
    for (int v : order) {
        for (auto e : g.in_edges(v)) {
            e.src = id[static_cast<std::size_t>(e.src)];
            e.dst = id[static_cast<std::size_t>(e.dst)];
            out.edges.push_back(e);
        }
    }
    return out;
}

/// Longest path from any leaf; leaves are 0.
inline std::vector<int> depths(const RuleGraph& g) {
    std::vector<int> depth(g.size(), 0);
    std::vector<int> indeg(g.size(), 0);
    std::vector<std::vector<int>> out(g.size());
    for (const auto& e : g.edges) {
        ++indeg[static_cast<std::size_t>(e.dst)];
        out[static_cast<std::size_t>(e.src)].push_back(e.dst);
    }
    std::vector<int> frontier;
    for (std::size_t v = 0; v < g.size(); ++v)
        if (indeg[v] == 0) frontier.push_back(static_cast<int>(v));
    std::size_t seen = 0;
    while (!frontier.empty()) {
        int v = frontier.back();
        frontier.pop_back();
        ++seen;
        for (int w : out[static_cast<std::size_t>(v)]) {
            depth[static_cast<std::size_t>(w)] = std::max(depth[static_cast<std::size_t>(w)], depth[static_cast<std::size_t>(v)] + 1);
            if (--indeg[static_cast<std::size_t>(w)] == 0) frontier.push_back(w);
        }
    }
    if (seen != g.size()) throw std::logic_error("rule graph contains a cycle");
    return depth;
}

/// Node frontiers by depth, bottom level first.
inline std::vector<std::vector<int>> topo_levels(const RuleGraph& g) {
    const auto depth = depths(g);
    int max_depth = 0;
    for (int d : depth) max_depth = std::max(max_depth, d);
    std::vector<std::vector<int>> levels(g.size() ? static_cast<std::size_t>(max_depth) + 1 : 0);
    for (std::size_t v = 0; v < g.size(); ++v) levels[static_cast<std::size_t>(depth[v])].push_back(static_cast<int>(v));
    return levels;
}

inline int max_depth(const RuleGraph& g) {
    int m = 0;
    for (int d : depths(g)) m = std::max(m, d);
    return m;
}

}  // namespace rulegate

#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"

using namespace rulegate;

namespace {

std::set<std::string> texts(const std::vector<MinedRule>& rules) {
    std::set<std::string> out;
    for (const auto& r : rules) out.insert(r.text);
    return out;
}

}  // namespace

TEST(Mining, RecoversPlantedPairs) {
    auto d = oracle::planted_labels(4000, 1);
    auto rules = mine_pairwise(d.y, d.names);
    std::vector<std::string> planted = d.implications;
    planted.insert(planted.end(), d.exclusions.begin(), d.exclusions.end());
    const auto found = texts(rules);
    for (const auto& p : planted) EXPECT_TRUE(found.count(p)) << p;
    // contrapositive exclusions (c6 -> !c2) are entailed and allowed
    for (const auto& r : found) EXPECT_TRUE(oracle::entailed(r, planted, d.names)) << r;
}

TEST(Mining, StatisticsAndProvenance) {
    std::vector<TruthAssignment> y{{1, 1, 0}, {1, 1, 0}, {1, 1, 1}, {0, 0, 1}};
    MiningConfig c;
    c.confidence_pos = 0.99;
    c.confidence_neg = 0.01;
    auto rules = mine_pairwise(y, {"a", "b", "c"}, c);
    std::map<std::string, MinedRule> by;
    for (const auto& r : rules) by[r.text] = r;
    ASSERT_TRUE(by.count("a -> b"));
    EXPECT_EQ(by["a -> b"].support, 3);
    EXPECT_EQ(by["a -> b"].confidence, 1.0);
    EXPECT_NEAR(by["a -> b"].lift, 1.0 / 0.75, 1e-12);
    EXPECT_EQ(by["a -> b"].provenance, "pairwise-pos");
    ASSERT_TRUE(by.count("c -> !a") == 0);  // P(a|c) = 0.5
    EXPECT_TRUE(by.count("b -> a"));
    EXPECT_NE(to_rules_line(by["a -> b"]).find("a -> b"), std::string::npos);
    EXPECT_EQ(parse(to_rules_line(by["a -> b"]).substr(0, to_rules_line(by["a -> b"]).find('#'))), parse("a -> b"));
}

TEST(Mining, ExclusionConfidenceIsComplement) {
    std::vector<TruthAssignment> y{{1, 0}, {1, 0}, {0, 1}, {0, 1}};
    auto rules = mine_pairwise(y, {"a", "b"});
    std::map<std::string, MinedRule> by;
    for (const auto& r : rules) by[r.text] = r;
    ASSERT_TRUE(by.count("a -> !b"));
    EXPECT_EQ(by["a -> !b"].confidence, 1.0);
    EXPECT_EQ(by["a -> !b"].provenance, "pairwise-neg");
}

TEST(Mining, SupportThreshold) {
    auto d = oracle::planted_labels(4000, 2);
    MiningConfig c;
    c.support_thresh = 0.2;  // planted antecedents have support 0.1
    const auto rules = mine_pairwise(d.y, d.names, c);
    for (const auto& p : d.implications) EXPECT_FALSE(texts(rules).count(p)) << p;
    for (const auto& r : rules) EXPECT_GE(static_cast<double>(r.support), 0.2 * 4000) << r.text;
    // c6 -> !c2 has a frequent antecedent and survives
    EXPECT_TRUE(texts(rules).count("c6 -> !c2"));
}

TEST(Mining, RankingAndLimit) {
    auto d = oracle::planted_labels(4000, 3);
    MiningConfig c;
    c.max_rules = 2;
    auto rules = mine_pairwise(d.y, d.names, c);
    EXPECT_EQ(rules.size(), 2u);
    auto all = mine_pairwise(d.y, d.names);
    for (std::size_t i = 1; i < all.size(); ++i)
        EXPECT_GE(std::abs(all[i - 1].confidence - 0.5), std::abs(all[i].confidence - 0.5) - 1e-15);
}

TEST(Mining, EmptyAndMismatched) {
    EXPECT_TRUE(mine_pairwise({}, {"a"}).empty());
    EXPECT_THROW(mine_pairwise({{1, 0}}, {"a"}), std::invalid_argument);
}

TEST(Mining, CompoundConjunction) {
    std::mt19937_64 rng(4);
    std::bernoulli_distribution B(0.4);
    std::vector<TruthAssignment> y;
    for (int i = 0; i < 2000; ++i) {
        TruthAssignment r(5);
        for (auto& v : r) v = B(rng);
        if (r[0]) r[1] = r[2] = 1;  // a -> (b & c)
        y.push_back(r);
    }
    auto rules = mine_compound(y, {"a", "b", "c", "d", "e"});
    auto t = texts(rules);
    EXPECT_TRUE(t.count("a -> b & c") || t.count("a -> c & b"));
    for (const auto& r : rules) {
        EXPECT_GE(r.confidence, 0.995);
        EXPECT_EQ(r.provenance, "compound");
        // a -> (b | c) is redundant next to a -> b
        const bool from_a = r.formula.children[0].child->concept_name == "a";
        EXPECT_FALSE(from_a && r.formula.children[1].child->op == OpCode::Or) << r.text;
        EXPECT_FALSE(from_a && r.formula.children[1].child->op == OpCode::Implies) << r.text;
    }
}

TEST(Mining, CompoundPerAntecedentLimit) {
    std::vector<TruthAssignment> y;
    std::mt19937_64 rng(5);
    std::bernoulli_distribution B(0.5);
    for (int i = 0; i < 1000; ++i) {
        TruthAssignment r(6);
        for (auto& v : r) v = B(rng);
        if (r[0]) r[1] = r[2] = r[3] = r[4] = r[5] = 1;
        y.push_back(r);
    }
    MiningConfig c;
    c.per_parent_pair_limit = 3;
    std::map<std::string, int> per;
    for (const auto& r : mine_compound(y, {"a", "b", "c", "d", "e", "f"}, c)) ++per[r.formula.children[0].child->concept_name];
    for (const auto& [a, n] : per) EXPECT_LE(n, 3) << a;
    EXPECT_EQ(per["a"], 3);
}

TEST(Mining, UpwardClosure) {
    // 0 -> 1 -> 2, 3 -> 2
    std::map<int, std::vector<int>> parents{{0, {1}}, {1, {2}}, {3, {2}}};
    auto y = upward_closure({{1, 0, 0, 0}, {0, 0, 0, 1}, {0, 0, 0, 0}}, parents);
    EXPECT_EQ(y[0], (TruthAssignment{1, 1, 1, 0}));
    EXPECT_EQ(y[1], (TruthAssignment{0, 0, 1, 1}));
    EXPECT_EQ(y[2], (TruthAssignment{0, 0, 0, 0}));
    EXPECT_THROW(upward_closure({{1, 0}}, {{0, {1}}, {1, {0}}}), std::invalid_argument);
}

TEST(Mining, ClosureMakesChildParentTautological) {
    std::mt19937_64 rng(6);
    std::bernoulli_distribution B(0.2);
    std::vector<TruthAssignment> y;
    for (int i = 0; i < 500; ++i) y.push_back({static_cast<std::uint8_t>(B(rng)), static_cast<std::uint8_t>(B(rng))});
    auto closed = upward_closure(y, {{0, {1}}});
    ConceptVocab v({"child", "parent"});
    RuleGraph g = compile(parse("child -> parent"), v);
    for (const auto& r : closed) EXPECT_EQ(rule_truth(g, r), 1);
}

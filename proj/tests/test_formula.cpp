#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace rulegate;

TEST(Formula, ImplicationParses) {
    Formula f = parse("a -> b");
    ASSERT_EQ(f.op, OpCode::Implies);
    ASSERT_EQ(f.children.size(), 2u);
    EXPECT_EQ(f.children[0].child->concept_name, "a");
    EXPECT_EQ(f.children[1].child->concept_name, "b");
}

TEST(Formula, AndBindsTighterThanOr) {
    Formula f = parse("a | b & c");
    ASSERT_EQ(f.op, OpCode::Or);
    EXPECT_TRUE(f.children[0].child->is_leaf());
    EXPECT_EQ(f.children[1].child->op, OpCode::And);
}

TEST(Formula, ImpliesIsRightAssociative) {
    Formula f = parse("a -> b -> c");
    ASSERT_EQ(f.op, OpCode::Implies);
    EXPECT_TRUE(f.children[0].child->is_leaf());
    EXPECT_EQ(f.children[1].child->op, OpCode::Implies);
    EXPECT_EQ(f, parse("a -> (b -> c)"));
}

TEST(Formula, IffBindsLoosest) {
    Formula f = parse("a -> b <-> c | d");
    ASSERT_EQ(f.op, OpCode::Iff);
    EXPECT_EQ(f.children[0].child->op, OpCode::Implies);
    EXPECT_EQ(f.children[1].child->op, OpCode::Or);
}

TEST(Formula, NegationOnEdge) {
    Formula f = parse("!a & !(b | c)");
    ASSERT_EQ(f.op, OpCode::And);
    EXPECT_TRUE(f.children[0].negated);
    EXPECT_TRUE(f.children[1].negated);
    EXPECT_EQ(f.children[1].child->op, OpCode::Or);
}

TEST(Formula, DoubleNegationCancels) { EXPECT_EQ(parse("!!a -> b"), parse("a -> b")); }

TEST(Formula, HyphenatedAtoms) {
    Formula f = parse("red-sphere->blue_cube");
    ASSERT_EQ(f.op, OpCode::Implies);
    EXPECT_EQ(f.children[0].child->concept_name, "red-sphere");
    EXPECT_EQ(f.children[1].child->concept_name, "blue_cube");
}

TEST(Formula, Errors) {
    EXPECT_THROW(parse(""), ParseError);
    EXPECT_THROW(parse("a &"), ParseError);
    EXPECT_THROW(parse("(a | b"), ParseError);
    EXPECT_THROW(parse("a b"), ParseError);
    EXPECT_THROW(parse("-> b"), ParseError);
    try {
        parse("a & )");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 4u);
    }
}

TEST(Formula, RoundTripExamples) {
    for (const char* s : {"a -> b", "a -> b -> c", "(a -> b) -> c", "a & b | c", "a & (b | c)", "!a <-> b", "!(a & b)",
                          "(a <-> b) <-> c", "a | (b | c)", "!(a -> b)"}) {
        Formula f = parse(s);
        EXPECT_EQ(parse(format(f)), f) << s << " -> " << format(f);
    }
    EXPECT_EQ(format(parse("a -> (b -> c)")), "a -> b -> c");
    EXPECT_EQ(format(parse("(a & b) | c")), "a & b | c");
}

TEST(Formula, RoundTripRandom) {
    std::mt19937_64 rng(7);
    const auto atoms = oracle::atom_names(5);
    for (int i = 0; i < 500; ++i) {
        Formula f = oracle::random_formula(rng, atoms, 4);
        const std::string s = format(f);
        EXPECT_EQ(parse(s), f) << s;
        EXPECT_EQ(format(parse(s)), s);
    }
}

TEST(Formula, ConceptsInFirstOccurrenceOrder) {
    EXPECT_EQ(concepts(parse("b & a -> b | c")), (std::vector<std::string>{"b", "a", "c"}));
}

TEST(Formula, RuleFile) {
    auto rules = parse_rules("# header\na -> b\n\n  c | d  # trailing\n");
    ASSERT_EQ(rules.size(), 2u);
    EXPECT_EQ(format(rules[1]), "c | d");
    try {
        parse_rules("a -> b\nc &\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(std::string(e.what()).find("at byte"), std::string(e.what()).rfind("at byte"));
        EXPECT_GE(e.offset(), 7u);
    }
}

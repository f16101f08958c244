#pragma once

// Synthetic concept data: labels from base rates plus planted dependencies, rejection
// filtered so training rows satisfy every satisfiable rule; features are a noisy sum
// of per-concept directions.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rulegate/boolsem.hpp"
#include "rulegate/leafbank.hpp"

namespace rulegate {

/// With probability `strength`, `then` is switched on (or off when `negate`) in rows where `if` holds.
struct Dependency {
    std::string if_concept;
    std::string then_concept;
    double strength = 0.9;
    bool negate = false;
    double entangle = 0.0;  // mixes the antecedent direction into the consequent direction
};

struct SynthSpec {
    std::vector<std::string> concepts;
    int input_dim = 64;
    std::vector<double> base_rate;  // one per concept
    std::vector<Dependency> dependencies;
    std::vector<std::string> rules;
    double violation_rate = 0.2;  // eval split only
    double noise = 1.0;
    double signal_scale = 3.0;
    std::vector<double> concept_scale;  // optional per-concept override of signal_scale
    int train_rows = 4000;
    int eval_rows = 2000;
    std::uint64_t seed = 123;
};

/// Desk benchmark: 12 concepts, three implications, one chain, one contradiction.
inline SynthSpec default_synth_spec() {
    SynthSpec s;
    for (int i = 0; i < 12; ++i) s.concepts.push_back("c" + std::to_string(i));
    s.base_rate.assign(12, 0.3);
    s.dependencies = {{"c0", "c1", 0.9}, {"c2", "c3", 0.9}, {"c4", "c5", 0.9}, {"c6", "c7", 0.9}};
    s.rules = {"c0 -> c1", "c2 -> c3", "c4 -> c5", "c6 -> (c7 -> c8)", "c9 <-> !c9"};
    s.signal_scale = 4.0;
    s.concept_scale.assign(12, 4.0);
    s.concept_scale[9] = 10.0;
    return s;
}

inline nlohmann::json to_json(const SynthSpec& s) {
    nlohmann::json deps = nlohmann::json::array();
    for (const auto& d : s.dependencies)
        deps.push_back({{"if", d.if_concept}, {"then", d.then_concept}, {"strength", d.strength}, {"negate", d.negate}, {"entangle", d.entangle}});
    return {{"concepts", s.concepts},       {"input_dim", s.input_dim},   {"base_rate", s.base_rate},
            {"dependencies", deps},         {"rules", s.rules},           {"violation_rate", s.violation_rate},
            {"noise", s.noise},             {"signal_scale", s.signal_scale}, {"concept_scale", s.concept_scale},
            {"train_rows", s.train_rows},   {"eval_rows", s.eval_rows},   {"seed", s.seed}};
}

/// Missing keys keep the default benchmark values.
inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    SynthSpec s = default_synth_spec();
    if (j.contains("concepts")) {
        if (j["concepts"].is_number()) {
            s.concepts.clear();
            for (int i = 0; i < j["concepts"].get<int>(); ++i) s.concepts.push_back("c" + std::to_string(i));
        } else {
            s.concepts = j["concepts"].get<std::vector<std::string>>();
        }
        s.base_rate.assign(s.concepts.size(), 0.3);
        s.concept_scale.clear();
    }
    if (j.contains("base_rate")) {
        if (j["base_rate"].is_number())
            s.base_rate.assign(s.concepts.size(), j["base_rate"].get<double>());
        else
            s.base_rate = j["base_rate"].get<std::vector<double>>();
    }
    if (j.contains("dependencies")) {
        s.dependencies.clear();
        for (const auto& d : j["dependencies"])
            s.dependencies.push_back({d.at("if").get<std::string>(), d.at("then").get<std::string>(), d.value("strength", 0.9),
                                      d.value("negate", false), d.value("entangle", 0.0)});
    }
    if (j.contains("rules")) s.rules = j["rules"].get<std::vector<std::string>>();
    s.input_dim = j.value("input_dim", s.input_dim);
    s.violation_rate = j.value("violation_rate", s.violation_rate);
    s.noise = j.value("noise", s.noise);
    s.signal_scale = j.value("signal_scale", s.signal_scale);
    if (j.contains("concept_scale")) s.concept_scale = j["concept_scale"].get<std::vector<double>>();
    s.train_rows = j.value("train_rows", s.train_rows);
    s.eval_rows = j.value("eval_rows", s.eval_rows);
    s.seed = j.value("seed", s.seed);
    return s;
}

enum class Split { Train, Eval };

namespace detail {

/// Independent stream per (seed, stream, counter); rows can be generated in any order.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32)};
    return std::mt19937_64(seq);
}

inline bool satisfiable(const RuleGraph& g, std::size_t N) {
    std::vector<int> ids;
    for (const auto& n : g.nodes)
        if (n.mask == 1 && std::find(ids.begin(), ids.end(), n.concept_id) == ids.end()) ids.push_back(n.concept_id);
    TruthAssignment y(N, 0);
    for (unsigned m = 0; m < (1u << ids.size()); ++m) {
        for (std::size_t k = 0; k < ids.size(); ++k) y[static_cast<std::size_t>(ids[k] - 1)] = (m >> k) & 1u;
        if (rule_truth(g, y)) return true;
    }
    return false;
}

/// Nearest (Hamming) assignment of the rule's concepts that violates it; ties broken by `rng`.
inline bool force_violation(const RuleGraph& g, TruthAssignment& y, std::mt19937_64& rng) {
    std::vector<int> ids;
    for (const auto& n : g.nodes)
        if (n.mask == 1 && std::find(ids.begin(), ids.end(), n.concept_id) == ids.end()) ids.push_back(n.concept_id);
    TruthAssignment t = y;
    std::vector<unsigned> best;
    int best_d = 1 << 30;
    for (unsigned m = 0; m < (1u << ids.size()); ++m) {
        int d = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const auto c = static_cast<std::size_t>(ids[k] - 1);
            t[c] = (m >> k) & 1u;
            d += t[c] != y[c];
        }
        if (rule_truth(g, t)) continue;
        if (d < best_d) {
            best_d = d;
            best.clear();
        }
        if (d == best_d) best.push_back(m);
    }
    if (best.empty()) return false;
    const unsigned m = best[std::uniform_int_distribution<std::size_t>(0, best.size() - 1)(rng)];
    for (std::size_t k = 0; k < ids.size(); ++k) y[static_cast<std::size_t>(ids[k] - 1)] = (m >> k) & 1u;
    return true;
}

}  // namespace detail

struct SynthModel {
    ConceptVocab vocab;
    std::vector<RuleGraph> rules;
    std::vector<bool> enforced;  // satisfiable rules; the others are violated by every row
    Matrix dirs;                 // D x N
};

inline SynthModel build_synth_model(const SynthSpec& spec) {
    if (spec.noise < 0) throw std::invalid_argument("synth: noise must be >= 0");
    if (spec.base_rate.size() != spec.concepts.size()) throw std::invalid_argument("synth: base_rate length != concept count");
    SynthModel m;
    m.vocab = ConceptVocab(spec.concepts);
    for (const auto& r : spec.rules) {
        m.rules.push_back(compile(parse(r), m.vocab));
        m.enforced.push_back(detail::satisfiable(m.rules.back(), spec.concepts.size()));
    }
    const auto N = static_cast<Eigen::Index>(spec.concepts.size());
    auto rng = detail::stream_rng(spec.seed, 0, 0);
    std::normal_distribution<double> G(0.0, 1.0);
    m.dirs.resize(spec.input_dim, N);
    for (Eigen::Index c = 0; c < N; ++c) {
        const double scale = spec.concept_scale.empty() ? spec.signal_scale : spec.concept_scale.at(static_cast<std::size_t>(c));
        for (Eigen::Index d = 0; d < spec.input_dim; ++d) m.dirs(d, c) = G(rng) / std::sqrt(static_cast<double>(spec.input_dim)) * scale;
    }
    for (const auto& dep : spec.dependencies) {
        if (dep.entangle == 0.0) continue;
        const int a = m.vocab.id(dep.if_concept) - 1, b = m.vocab.id(dep.then_concept) - 1;
        m.dirs.col(b) = dep.entangle * m.dirs.col(a) + std::sqrt(1.0 - dep.entangle * dep.entangle) * m.dirs.col(b);
    }
    return m;
}

/// Labels and features for one split. Train rows satisfy every enforced rule; in the
/// eval split a `violation_rate` fraction of rows gets one enforced rule broken.
inline ConceptDataset gen_dataset(const SynthSpec& spec, Split split) {
    const SynthModel model = build_synth_model(spec);
    const std::size_t N = spec.concepts.size();
    const int rows = split == Split::Train ? spec.train_rows : spec.eval_rows;
    const std::uint64_t stream = split == Split::Train ? 1 : 2;
    std::vector<std::pair<int, int>> dep_ids;
    for (const auto& d : spec.dependencies) dep_ids.push_back({model.vocab.id(d.if_concept) - 1, model.vocab.id(d.then_concept) - 1});
    std::vector<int> enforced_ids;
    for (std::size_t r = 0; r < model.rules.size(); ++r)
        if (model.enforced[r]) enforced_ids.push_back(static_cast<int>(r));

    ConceptDataset ds;
    ds.vocab = model.vocab;
    ds.X.resize(spec.input_dim, rows);
    std::uint64_t counter = 0;
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::normal_distribution<double> G(0.0, 1.0);
    for (int i = 0; i < rows; ++i) {
        TruthAssignment y(N);
        for (long attempt = 0;; ++attempt) {
            if (attempt > 100) throw std::runtime_error("synth: infeasible spec (rejection rate above 99%)");
            auto rng = detail::stream_rng(spec.seed, stream, counter++);
            for (std::size_t c = 0; c < N; ++c) y[c] = U(rng) < spec.base_rate[c];
            for (std::size_t k = 0; k < dep_ids.size(); ++k) {
                const bool fire = U(rng) < spec.dependencies[k].strength;
                if (y[static_cast<std::size_t>(dep_ids[k].first)] && fire)
                    y[static_cast<std::size_t>(dep_ids[k].second)] = spec.dependencies[k].negate ? 0 : 1;
            }
            bool ok = true;
            for (int r : enforced_ids) ok = ok && rule_truth(model.rules[static_cast<std::size_t>(r)], y);
            if (ok) break;
        }
        auto rng = detail::stream_rng(spec.seed, stream + 16, static_cast<std::uint64_t>(i));
        if (split == Split::Eval && !enforced_ids.empty() && U(rng) < spec.violation_rate) {
            const int r = enforced_ids[std::uniform_int_distribution<std::size_t>(0, enforced_ids.size() - 1)(rng)];
            detail::force_violation(model.rules[static_cast<std::size_t>(r)], y, rng);
        }
        Vector x = Vector::Zero(spec.input_dim);
        for (std::size_t c = 0; c < N; ++c)
            if (y[c]) x += model.dirs.col(static_cast<Eigen::Index>(c));
        for (int d = 0; d < spec.input_dim; ++d) x(d) += spec.noise * G(rng);
        ds.X.col(i) = x;
        ds.y.push_back(std::move(y));
    }
    return ds;
}

// ---- JSONL: one {"x": [...], "y": [...]} object per line

inline void write_jsonl(const ConceptDataset& ds, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::vector<double> x(ds.X.col(static_cast<Eigen::Index>(i)).data(), ds.X.col(static_cast<Eigen::Index>(i)).data() + ds.X.rows());
        std::vector<int> y(ds.y[i].begin(), ds.y[i].end());
        f << nlohmann::json{{"x", x}, {"y", y}}.dump() << '\n';
    }
}

inline ConceptDataset read_jsonl(const std::string& path, const ConceptVocab& vocab) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::vector<std::vector<double>> xs;
    ConceptDataset ds;
    ds.vocab = vocab;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto j = nlohmann::json::parse(line);
        auto x = j.at("x").get<std::vector<double>>();
        auto y = j.at("y").get<std::vector<int>>();
        if (!xs.empty() && x.size() != xs.front().size())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": feature width differs from first row");
        if (y.size() != vocab.size()) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": label width != vocabulary size");
        TruthAssignment t;
        for (int v : y) {
            if (v != 0 && v != 1) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": labels must be 0/1");
            t.push_back(static_cast<std::uint8_t>(v));
        }
        xs.push_back(std::move(x));
        ds.y.push_back(std::move(t));
    }
    ds.X.resize(xs.empty() ? 0 : static_cast<Eigen::Index>(xs.front().size()), static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t d = 0; d < xs[i].size(); ++d) ds.X(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i)) = xs[i][d];
    return ds;
}

}  // namespace rulegate

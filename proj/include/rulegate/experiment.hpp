#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rulegate/gates.hpp"
#include "rulegate/indepprob.hpp"
#include "rulegate/mining.hpp"
#include "rulegate/scoring.hpp"
#include "rulegate/synth.hpp"

namespace rulegate {

struct ExperimentConfig {
    SynthSpec synth = default_synth_spec();
    LeafBankConfig leaf;
    GateConfig gates;
    Aggregation aggregation = Aggregation::Min;
    double tau = 0.0;
    bool antecedent_gating = true;
    bool mine_rules = false;  // append mined rules to the handwritten ones
    MiningConfig mining;
    bool fit_temperature = false;
    double heldout_frac = 0.1;  // rows held out of leaf training for the temperature fit
    std::string cache_dir;      // empty = no gate cache
    std::uint64_t seed = 123;
};

/// The desk benchmark run: longer leaf and gate training than the library defaults.
inline ExperimentConfig default_experiment_config() {
    ExperimentConfig c;
    c.leaf.epochs = 5;
    c.gates.epochs_level = 30;
    c.gates.chimera_count = 4;
    return c;
}

inline const std::vector<std::string>& method_names() {
    static const std::vector<std::string> m{"indep", "sem", "mono_n", "mono_c", "neural"};
    return m;
}

inline const char* method_label(const std::string& m) {
    if (m == "indep") return "Indep.";
    if (m == "sem") return "SEM";
    if (m == "mono_n") return "Mono-N";
    if (m == "mono_c") return "Mono-C";
    return "Neur. Eval.";
}

struct MethodMetrics {
    std::optional<double> auroc, ap, fpr95;
    double low_truth_frac = 0.0;  // rows with estimated rule truth below 0.1
    double mean_truth = 0.0;
    double violation_mae = 0.0;  // mean |(1 - t) - violated|
};

struct RuleReport {
    int id = 0;
    std::string text;
    std::string provenance;
    double violated_frac = 0.0;
    std::map<std::string, MethodMetrics> methods;
    std::vector<double> node_truth_mean;  // neural evaluator, per node
};

struct MethodSummary {
    std::optional<double> mean_rule_auroc;
    std::optional<double> aggregate_auroc, aggregate_ap;
};

struct EvalReport {
    std::uint64_t seed = 0, data_seed = 0;
    nlohmann::json config;
    double leaf_macro_auroc = 0.0, leaf_macro_accuracy = 0.0, temperature = 1.0;
    std::vector<RuleReport> rules;
    std::map<std::string, MethodSummary> summary;
    std::vector<int> aggregate_rules;  // rules with a defined per-rule AUROC
    int wins = 0, wins_of = 0;
    TrainStats neural_stats;
};

inline nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline nlohmann::json to_json(const ExperimentConfig& c) {
    return {{"synth", to_json(c.synth)},
            {"leaf", {{"feature_dim", c.leaf.feature_dim}, {"epochs", c.leaf.epochs}, {"batch", c.leaf.batch}, {"lr", c.leaf.lr},
                      {"pos_weight", c.leaf.pos_weight}}},
            {"gates", {{"epochs_level", c.gates.epochs_level}, {"batch", c.gates.batch}, {"lr", c.gates.lr},
                       {"hidden_layers", c.gates.hidden_layers}, {"negatives", mode_name(c.gates.mode)},
                       {"chimera_count", c.gates.chimera_count}}},
            {"aggregation", aggregation_name(c.aggregation)},
            {"tau", c.tau},
            {"antecedent_gating", c.antecedent_gating},
            {"mine_rules", c.mine_rules},
            {"fit_temperature", c.fit_temperature},
            {"heldout_frac", c.heldout_frac},
            {"seed", c.seed}};
}

/// Missing keys keep the benchmark defaults.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig c = default_experiment_config();
    if (j.contains("synth")) c.synth = synth_spec_from_json(j["synth"]);
    if (j.contains("leaf")) {
        const auto& l = j["leaf"];
        c.leaf.feature_dim = l.value("feature_dim", c.leaf.feature_dim);
        c.leaf.epochs = l.value("epochs", c.leaf.epochs);
        c.leaf.batch = l.value("batch", c.leaf.batch);
        c.leaf.lr = l.value("lr", c.leaf.lr);
        c.leaf.pos_weight = l.value("pos_weight", c.leaf.pos_weight);
    }
    if (j.contains("gates")) {
        const auto& g = j["gates"];
        c.gates.epochs_level = g.value("epochs_level", c.gates.epochs_level);
        c.gates.batch = g.value("batch", c.gates.batch);
        c.gates.lr = g.value("lr", c.gates.lr);
        c.gates.hidden_layers = g.value("hidden_layers", c.gates.hidden_layers);
        if (g.contains("negatives")) c.gates.mode = parse_mode(g["negatives"].get<std::string>());
        c.gates.chimera_count = g.value("chimera_count", c.gates.chimera_count);
        c.gates.threads = g.value("threads", c.gates.threads);
    }
    if (j.contains("aggregation")) c.aggregation = parse_aggregation(j["aggregation"].get<std::string>());
    c.tau = j.value("tau", c.tau);
    c.antecedent_gating = j.value("antecedent_gating", c.antecedent_gating);
    c.mine_rules = j.value("mine_rules", c.mine_rules);
    c.fit_temperature = j.value("fit_temperature", c.fit_temperature);
    c.heldout_frac = j.value("heldout_frac", c.heldout_frac);
    c.cache_dir = j.value("cache_dir", c.cache_dir);
    c.seed = j.value("seed", c.seed);
    return c;
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& rr : r.rules) {
        nlohmann::json m;
        for (const auto& [name, mm] : rr.methods)
            m[name] = {{"auroc", opt_json(mm.auroc)}, {"ap", opt_json(mm.ap)}, {"fpr95", opt_json(mm.fpr95)},
                       {"low_truth_frac", mm.low_truth_frac}, {"mean_truth", mm.mean_truth}, {"violation_mae", mm.violation_mae}};
        rules.push_back({{"id", rr.id}, {"text", rr.text}, {"provenance", rr.provenance}, {"violated_frac", rr.violated_frac},
                         {"methods", m}, {"node_truth_mean", rr.node_truth_mean}});
    }
    nlohmann::json summary;
    for (const auto& [name, s] : r.summary)
        summary[name] = {{"mean_rule_auroc", opt_json(s.mean_rule_auroc)},
                         {"aggregate_auroc", opt_json(s.aggregate_auroc)},
                         {"aggregate_ap", opt_json(s.aggregate_ap)}};
    return {{"format", "rulegate-eval-report"},
            {"version", 1},
            {"seed", r.seed},
            {"data_seed", r.data_seed},
            {"config", r.config},
            {"leaf", {{"macro_auroc", r.leaf_macro_auroc}, {"macro_accuracy", r.leaf_macro_accuracy}, {"temperature", r.temperature}}},
            {"rules", rules},
            {"summary", summary},
            {"aggregate_rules", r.aggregate_rules},
            {"wins", r.wins},
            {"wins_of", r.wins_of}};
}

namespace detail {

inline std::string fmt_metric(const std::optional<double>& v) {
    if (!v) return "n/a";
    char b[16];
    std::snprintf(b, sizeof b, "%.3f", *v);
    return b;
}

inline std::string pad(std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
}

}  // namespace detail

/// Per-rule AUROC table with one column per method and a Wins column (neural vs Indep.).
inline std::string render_table(const nlohmann::json& report) {
    std::ostringstream os;
    std::size_t w0 = 24;
    for (const auto& r : report.at("rules")) w0 = std::max(w0, r.at("text").get<std::string>().size() + 2);
    const std::size_t w = 13;
    os << detail::pad("Rule", w0);
    for (const auto& m : method_names()) os << detail::pad(method_label(m), w);
    os << "Wins\n";
    auto get = [](const nlohmann::json& j) { return j.is_null() ? std::optional<double>{} : std::optional<double>(j.get<double>()); };
    for (const auto& r : report.at("rules")) {
        os << detail::pad(r.at("text").get<std::string>(), w0);
        const auto& ms = r.at("methods");
        for (const auto& m : method_names()) os << detail::pad(detail::fmt_metric(get(ms.at(m).at("auroc"))), w);
        auto n = get(ms.at("neural").at("auroc")), i = get(ms.at("indep").at("auroc"));
        const bool win = n && i ? *n > *i : ms.at("neural").at("violation_mae").get<double>() < ms.at("indep").at("violation_mae").get<double>();
        os << (win ? "+" : "-") << '\n';
    }
    const auto& s = report.at("summary");
    os << detail::pad("mean of rules", w0);
    for (const auto& m : method_names()) os << detail::pad(detail::fmt_metric(get(s.at(m).at("mean_rule_auroc"))), w);
    os << report.at("wins").get<int>() << "/" << report.at("wins_of").get<int>() << '\n';
    os << detail::pad("aggregate (" + report.at("config").at("aggregation").get<std::string>() + ")", w0);
    for (const auto& m : method_names()) os << detail::pad(detail::fmt_metric(get(s.at(m).at("aggregate_auroc"))), w);
    os << '\n';
    char leaf[128];
    std::snprintf(leaf, sizeof leaf, "leaf bank: macro AUROC %.3f, accuracy@0.5 %.3f, T=%.3f\n",
                  report.at("leaf").at("macro_auroc").get<double>(), report.at("leaf").at("macro_accuracy").get<double>(),
                  report.at("leaf").at("temperature").get<double>());
    os << leaf;
    return os.str();
}

/// Rows [begin, end) of a dataset.
inline ConceptDataset slice(const ConceptDataset& d, std::size_t begin, std::size_t end) {
    ConceptDataset s;
    s.vocab = d.vocab;
    s.X = d.X.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
    s.y.assign(d.y.begin() + static_cast<std::ptrdiff_t>(begin), d.y.begin() + static_cast<std::ptrdiff_t>(end));
    return s;
}

/// Scores of one method on the eval split: per rule, root truth and antecedent per row.
struct MethodOutput {
    std::vector<Vector> truth;
    std::vector<std::optional<Vector>> antecedent;
};

/// Trains everything on the train split and evaluates on the eval split.
inline EvalReport run_experiment(const ExperimentConfig& cfg, const ConceptDataset& train, const ConceptDataset& eval,
                                 std::vector<std::string> rule_texts, std::vector<std::string> provenance = {}) {
    EvalReport rep;
    rep.seed = cfg.seed;
    rep.data_seed = cfg.synth.seed;
    rep.config = to_json(cfg);
    provenance.resize(rule_texts.size(), "handwritten");

    if (cfg.mine_rules) {
        for (const auto& r : mine_pairwise(train.y, train.vocab.names(), cfg.mining)) {
            rule_texts.push_back(r.text);
            provenance.push_back(r.provenance);
        }
    }
    std::vector<RuleGraph> rules;
    for (const auto& t : rule_texts) rules.push_back(compile(parse(t), train.vocab));

    // leaf bank
    LeafBankConfig lcfg = cfg.leaf;
    lcfg.seed = cfg.seed;
    LeafBank bank;
    if (cfg.fit_temperature) {
        const auto cut = static_cast<std::size_t>(static_cast<double>(train.size()) * (1.0 - cfg.heldout_frac));
        bank = train_leaf_bank(slice(train, 0, cut), lcfg);
        fit_temperature(bank, slice(train, cut, train.size()));
    } else {
        bank = train_leaf_bank(train, lcfg);
    }
    rep.temperature = bank.temperature;
    Matrix Ztr, Ptr, Zev, Pev;
    bank_forward(bank, train.X, Ztr, Ptr);
    bank_forward(bank, eval.X, Zev, Pev);
    {
        double auc_sum = 0, acc_sum = 0;
        int auc_n = 0;
        for (std::size_t c = 0; c < eval.vocab.size(); ++c) {
            std::vector<double> p(eval.size());
            std::vector<int> l(eval.size());
            for (std::size_t i = 0; i < eval.size(); ++i) {
                p[i] = Pev(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i));
                l[i] = eval.y[i][c];
            }
            if (auto a = auroc(p, l)) {
                auc_sum += *a;
                ++auc_n;
            }
            acc_sum += accuracy_at_half(p, l);
        }
        rep.leaf_macro_auroc = auc_n ? auc_sum / auc_n : 0.0;
        rep.leaf_macro_accuracy = acc_sum / static_cast<double>(eval.vocab.size());
    }

    std::unique_ptr<GateCache> cache;
    if (!cfg.cache_dir.empty()) cache = std::make_unique<GateCache>(cfg.cache_dir);

    std::map<std::string, MethodOutput> out;
    const auto M = static_cast<Eigen::Index>(eval.size());
    // independence baseline
    for (const auto& g : rules) {
        Vector t(M), a(M);
        const bool imp = !g.is_leaf(g.root()) && g.nodes[static_cast<std::size_t>(g.root())].op == OpCode::Implies;
        const GraphEdge ante = imp ? g.in_edges(g.root()).front() : GraphEdge{};
        for (Eigen::Index i = 0; i < M; ++i) {
            std::vector<double> p(Pev.col(i).data(), Pev.col(i).data() + Pev.rows());
            auto q = soft_eval_nodes(g, p);
            t(i) = q[static_cast<std::size_t>(g.root())];
            if (imp) a(i) = ante.neg == -1 ? 1.0 - q[static_cast<std::size_t>(ante.src)] : q[static_cast<std::size_t>(ante.src)];
        }
        out["indep"].truth.push_back(t);
        out["indep"].antecedent.push_back(imp ? std::optional<Vector>(a) : std::nullopt);
    }
    // gate evaluators
    std::vector<std::vector<double>> node_means(rules.size());
    for (const std::string method : {"sem", "neural"}) {
        GateConfig gc = cfg.gates;
        gc.seed = cfg.seed;
        if (method == "sem") gc.mode = TrainMode::Sem;
        for (std::size_t r = 0; r < rules.size(); ++r) {
            const auto& g = rules[r];
            if (g.is_leaf(g.root())) {
                out[method].truth.push_back(Pev.row(g.nodes[static_cast<std::size_t>(g.root())].concept_id - 1).transpose());
                out[method].antecedent.push_back(std::nullopt);
                continue;
            }
            TrainStats st;
            GateSet gates = train_rule(g, bank, Ztr, Ptr, train.y, gc, method == "neural" ? cache.get() : nullptr, &st);
            if (method == "neural") {
                rep.neural_stats.gates_trained += st.gates_trained;
                rep.neural_stats.cache_hits += st.cache_hits;
                rep.neural_stats.steps += st.steps;
            }
            NodeTable nt = propagate_gates(g, Zev, Pev, gates);
            out[method].truth.push_back(nt.soft[static_cast<std::size_t>(g.root())]);
            out[method].antecedent.push_back(antecedent_probs(g, nt));
            if (method == "neural")
                for (const auto& s : nt.soft) node_means[r].push_back(s.mean());
        }
    }
    // monolithic baselines; antecedents come from the independence baseline
    for (const std::string method : {"mono_n", "mono_c"}) {
        GateConfig gc = cfg.gates;
        gc.seed = cfg.seed;
        for (std::size_t r = 0; r < rules.size(); ++r) {
            const auto& g = rules[r];
            if (g.is_leaf(g.root())) {
                out[method].truth.push_back(out["indep"].truth[r]);
            } else {
                MonoModel mm = train_monolithic(g, Ztr, train.y, method == "mono_c", gc);
                out[method].truth.push_back(predict_monolithic(mm, Zev));
            }
            out[method].antecedent.push_back(out["indep"].antecedent[r]);
        }
    }

    // metrics
    std::vector<std::vector<int>> violated(rules.size(), std::vector<int>(eval.size()));
    for (std::size_t r = 0; r < rules.size(); ++r)
        for (std::size_t i = 0; i < eval.size(); ++i) violated[r][i] = 1 - rule_truth(rules[r], eval.y[i]);
    for (std::size_t r = 0; r < rules.size(); ++r) {
        RuleReport rr;
        rr.id = static_cast<int>(r);
        rr.text = format(parse(rule_texts[r]));
        rr.provenance = provenance[r];
        rr.violated_frac = std::accumulate(violated[r].begin(), violated[r].end(), 0.0) / static_cast<double>(eval.size());
        for (const auto& m : method_names()) {
            const Vector& t = out[m].truth[r];
            std::vector<double> v(t.size());
            double low = 0, mae = 0;
            for (Eigen::Index i = 0; i < t.size(); ++i) {
                v[static_cast<std::size_t>(i)] = 1.0 - t(i);
                low += t(i) < 0.1;
                mae += std::abs(v[static_cast<std::size_t>(i)] - violated[r][static_cast<std::size_t>(i)]);
            }
            MethodMetrics mm;
            mm.auroc = auroc(v, violated[r]);
            mm.ap = average_precision(v, violated[r]);
            mm.fpr95 = fpr_at_95tpr(v, violated[r]);
            mm.low_truth_frac = low / static_cast<double>(t.size());
            mm.mean_truth = t.mean();
            mm.violation_mae = mae / static_cast<double>(t.size());
            rr.methods[m] = mm;
        }
        rr.node_truth_mean = node_means[r];
        // constant-truth rules have no AUROC; the closer mean score wins instead
        const auto& n = rr.methods["neural"];
        const auto& i = rr.methods["indep"];
        ++rep.wins_of;
        rep.wins += (n.auroc && i.auroc) ? *n.auroc > *i.auroc : n.violation_mae < i.violation_mae;
        if (rr.methods["neural"].auroc) rep.aggregate_rules.push_back(rr.id);
        rep.rules.push_back(std::move(rr));
    }
    std::vector<int> anomaly(eval.size(), 0);
    for (int r : rep.aggregate_rules)
        for (std::size_t i = 0; i < eval.size(); ++i) anomaly[i] |= violated[static_cast<std::size_t>(r)][i];
    for (const auto& m : method_names()) {
        MethodSummary s;
        double sum = 0;
        int n = 0;
        for (const auto& rr : rep.rules)
            if (auto a = rr.methods.at(m).auroc) {
                sum += *a;
                ++n;
            }
        if (n) s.mean_rule_auroc = sum / n;
        if (!rep.aggregate_rules.empty()) {
            std::vector<double> agg(eval.size());
            for (std::size_t i = 0; i < eval.size(); ++i) {
                std::vector<RuleScore> scores;
                for (int r : rep.aggregate_rules) {
                    const auto& mo = out[m];
                    std::optional<double> a;
                    if (mo.antecedent[static_cast<std::size_t>(r)]) a = (*mo.antecedent[static_cast<std::size_t>(r)])(static_cast<Eigen::Index>(i));
                    scores.push_back(violation_score(r, mo.truth[static_cast<std::size_t>(r)](static_cast<Eigen::Index>(i)), a, cfg.tau,
                                                     cfg.antecedent_gating));
                }
                agg[i] = aggregate(scores, cfg.aggregation);
            }
            s.aggregate_auroc = auroc(agg, anomaly);
            s.aggregate_ap = average_precision(agg, anomaly);
        }
        rep.summary[m] = s;
    }
    return rep;
}

/// Generates both splits from the synthetic spec and runs the comparison on its rules.
inline EvalReport run_experiment(const ExperimentConfig& cfg) {
    const ConceptDataset train = gen_dataset(cfg.synth, Split::Train);
    const ConceptDataset eval = gen_dataset(cfg.synth, Split::Eval);
    return run_experiment(cfg, train, eval, cfg.synth.rules);
}

}  // namespace rulegate

// rulegate command-line interface.
//
//   rulegate gen-synth   --spec spec.json --out data/
//   rulegate train-leaf  --data data/train.jsonl --out bank.json
//   rulegate mine-rules  --data data/train.jsonl --out rules.txt
//   rulegate train-gates --data data/train.jsonl --bank bank.json --rules rules.txt --negatives chimeras_only
//   rulegate score       --data data/eval.jsonl --bank bank.json --rules rules.txt --out scores.jsonl
//   rulegate eval        --experiment exp.json --report report.json
//   rulegate report      --report report.json
//
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rulegate/rulegate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rulegate;

namespace {

/// JSON config files for CLI11: nested objects address subcommands, '_' and '-' are interchangeable.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw CLI::ConversionError(std::string("config file: ") + e.what());
        }
        std::vector<CLI::ConfigItem> items;
        walk(j, {}, items);
        return items;
    }

private:
    static std::string scalar(const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        return v.dump();
    }

    static void walk(const json& j, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& out) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            std::string name = it.key();
            for (char& c : name)
                if (c == '_') c = '-';
            if (it->is_object()) {
                auto p = parents;
                p.push_back(name);
                walk(*it, p, out);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = name;
            if (it->is_array())
                for (const auto& v : *it) item.inputs.push_back(scalar(v));
            else
                item.inputs.push_back(scalar(*it));
            out.push_back(std::move(item));
        }
    }
};

struct Globals {
    std::uint64_t seed = 123;
    int threads = std::max(1u, std::thread::hardware_concurrency());
    std::string cache_dir = ".rulegate-cache";
    std::string negatives = "chimeras_only";
    int epochs_level = 2;
    int batch = 64;
    double lr = 1e-3;
    int hidden_layers = 2;
    int chimera_count = 1;
    bool retrain = false;
    std::string aggregation = "min";
    double tau = 0.0;
    bool no_gating = false;
};

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

json read_json(const std::string& path) { return json::parse(read_file(path)); }

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
}

/// Vocabulary from an explicit file, else concepts.json next to the data file.
ConceptVocab load_vocab(const std::string& concepts, const std::string& data) {
    std::string path = concepts.empty() ? (fs::path(data).parent_path() / "concepts.json").string() : concepts;
    return ConceptVocab(read_json(path).get<std::vector<std::string>>());
}

struct RuleSet {
    std::vector<std::string> texts;
    std::vector<RuleGraph> graphs;
};

RuleSet load_rules(const std::string& path, const ConceptVocab& vocab) {
    RuleSet rs;
    for (const auto& f : parse_rules(read_file(path))) {
        rs.texts.push_back(format(f));
        rs.graphs.push_back(compile(f, vocab));
    }
    if (rs.graphs.empty()) throw std::runtime_error("no rules in " + path);
    return rs;
}

GateConfig gate_config(const Globals& g) {
    GateConfig c;
    c.epochs_level = g.epochs_level;
    c.batch = g.batch;
    c.lr = g.lr;
    c.hidden_layers = g.hidden_layers;
    c.mode = parse_mode(g.negatives);
    c.chimera_count = g.chimera_count;
    c.seed = g.seed;
    c.threads = g.threads;
    c.train_missing_only = !g.retrain;
    return c;
}

void log(const std::string& msg) { std::cerr << "[rulegate] " << msg << '\n'; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rulegate: rule-constrained anomaly detection with subtree gates"};
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON file with option values; command-line flags take precedence");
    app.require_subcommand(1);
    app.fallthrough();

    Globals G;
    auto* seed_opt = app.add_option("--seed", G.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", G.threads, "Worker threads for gate training")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--cache-dir", G.cache_dir, "Gate cache directory")->envname("RULEGATE_CACHE_DIR")->capture_default_str();
    auto* neg_opt = app.add_option("--negatives", G.negatives, "Gate training pairs")
                        ->check(CLI::IsMember({"sem", "chimeras_only", "mixed", "ad_strict_mixed"}))
                        ->capture_default_str();
    auto* epl_opt = app.add_option("--epochs-level", G.epochs_level, "Epochs per gate level")->capture_default_str()->check(CLI::NonNegativeNumber);
    auto* batch_opt = app.add_option("--batch", G.batch, "Gate minibatch size")->capture_default_str()->check(CLI::Range(2, 1 << 20));
    auto* lr_opt = app.add_option("--lr", G.lr, "Gate learning rate")->capture_default_str();
    app.add_option("--hidden-layers", G.hidden_layers, "Hidden layers per gate")->capture_default_str()->check(CLI::Range(1, 8));
    app.add_option("--chimera-count", G.chimera_count, "Chimera permutations per batch")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_flag("--retrain", G.retrain, "Ignore cached gates and train again");
    auto* agg_opt = app.add_option("--aggregation", G.aggregation, "Rule aggregation")
                        ->check(CLI::IsMember({"max", "mean", "geo", "min"}))
                        ->capture_default_str();
    auto* tau_opt = app.add_option("--tau", G.tau, "Antecedent gate threshold in [0,1)")->capture_default_str()->check(CLI::Range(0.0, 0.999999));
    app.add_flag("--no-gating", G.no_gating, "Disable antecedent gating of implication scores");

    // gen-synth
    auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic train/eval pair");
    std::string gen_spec, gen_out = "data";
    gen->add_option("--spec", gen_spec, "Synthetic spec JSON (default: built-in benchmark)")->check(CLI::ExistingFile);
    gen->add_option("--out", gen_out, "Output directory")->capture_default_str();

    // train-leaf
    auto* tl = app.add_subcommand("train-leaf", "Train the concept bank");
    std::string tl_data, tl_concepts, tl_out = "bank.json";
    LeafBankConfig lcfg;
    bool tl_fit_t = false;
    double tl_heldout = 0.1;
    tl->add_option("--data", tl_data, "Training JSONL")->required()->check(CLI::ExistingFile);
    tl->add_option("--concepts", tl_concepts, "Concept names JSON (default: concepts.json beside the data)");
    tl->add_option("--out", tl_out, "Bank file")->capture_default_str();
    tl->add_option("--feature-dim", lcfg.feature_dim, "Embedding width F")->capture_default_str()->check(CLI::PositiveNumber);
    tl->add_option("--leaf-epochs", lcfg.epochs, "Epochs")->capture_default_str();
    tl->add_option("--leaf-lr", lcfg.lr, "Learning rate")->capture_default_str();
    tl->add_option("--leaf-batch", lcfg.batch, "Minibatch size")->capture_default_str()->check(CLI::PositiveNumber);
    tl->add_flag("--pos-weight", lcfg.pos_weight, "Weight positives by #neg/#pos, clamped to [1,100]");
    tl->add_flag("--fit-temperature", tl_fit_t, "Fit a temperature on held-out rows");
    tl->add_option("--heldout-frac", tl_heldout, "Rows held out for the temperature fit")->capture_default_str()->check(CLI::Range(0.01, 0.9));

    // mine-rules
    auto* mr = app.add_subcommand("mine-rules", "Mine implications and exclusions from labels");
    std::string mr_data, mr_concepts, mr_out = "-", mr_hier;
    MiningConfig mcfg;
    bool mr_compound = false;
    mr->add_option("--data", mr_data, "Training JSONL")->required()->check(CLI::ExistingFile);
    mr->add_option("--concepts", mr_concepts, "Concept names JSON");
    mr->add_option("--out", mr_out, "Rules file ('-' = stdout)")->capture_default_str();
    mr->add_option("--support", mcfg.support_thresh, "Minimum antecedent support")->capture_default_str();
    mr->add_option("--conf-pos", mcfg.confidence_pos, "Confidence for A -> B")->capture_default_str();
    mr->add_option("--conf-neg", mcfg.confidence_neg, "Confidence ceiling for A -> !B")->capture_default_str();
    mr->add_option("--max-rules", mcfg.max_rules, "Pairwise rule cap")->capture_default_str();
    mr->add_flag("--compound", mr_compound, "Also mine depth-2 consequents");
    mr->add_option("--compound-conf", mcfg.compound_conf, "Confidence for compound rules")->capture_default_str();
    mr->add_option("--per-parent-pair-limit", mcfg.per_parent_pair_limit, "Compound cap per antecedent")->capture_default_str();
    mr->add_option("--hierarchy", mr_hier, "JSON {child: [parents]} applied as upward closure first")->check(CLI::ExistingFile);

    // train-gates / score share inputs
    std::string in_data, in_concepts, in_bank = "bank.json", in_rules = "rules.txt";
    auto add_inputs = [&](CLI::App* sc) {
        sc->add_option("--data", in_data, "Dataset JSONL")->required()->check(CLI::ExistingFile);
        sc->add_option("--concepts", in_concepts, "Concept names JSON");
        sc->add_option("--bank", in_bank, "Bank file")->capture_default_str()->check(CLI::ExistingFile);
        sc->add_option("--rules", in_rules, "Rules file")->capture_default_str()->check(CLI::ExistingFile);
    };
    auto* tg = app.add_subcommand("train-gates", "Train subtree gates for every rule into the cache");
    add_inputs(tg);
    auto* sc = app.add_subcommand("score", "Score rows with cached gates");
    add_inputs(sc);
    std::string sc_out = "-";
    std::size_t sc_topk = 3;
    sc->add_option("--out", sc_out, "Scores JSONL ('-' = stdout)")->capture_default_str();
    sc->add_option("--topk", sc_topk, "Rules listed per row")->capture_default_str();

    // eval
    auto* ev = app.add_subcommand("eval", "Run the full method comparison");
    std::string ev_exp, ev_report = "report.json", ev_train, ev_eval, ev_rules, ev_concepts;
    bool ev_mine = false;
    ev->add_option("--experiment", ev_exp, "Experiment JSON (default: built-in benchmark)")->check(CLI::ExistingFile);
    ev->add_option("--report", ev_report, "Report JSON output")->capture_default_str();
    ev->add_option("--train", ev_train, "Training JSONL instead of generated data")->check(CLI::ExistingFile);
    ev->add_option("--eval", ev_eval, "Evaluation JSONL instead of generated data")->check(CLI::ExistingFile);
    ev->add_option("--rules", ev_rules, "Rules file for --train/--eval")->check(CLI::ExistingFile);
    ev->add_option("--concepts", ev_concepts, "Concept names JSON for --train/--eval");
    ev->add_flag("--mine", ev_mine, "Append mined rules");

    // report
    auto* rp = app.add_subcommand("report", "Render a report JSON as a table");
    std::string rp_in;
    rp->add_option("--report", rp_in, "Report JSON")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*gen) {
            SynthSpec spec = gen_spec.empty() ? default_synth_spec() : synth_spec_from_json(read_json(gen_spec));
            if (seed_opt->count()) spec.seed = G.seed;
            fs::create_directories(gen_out);
            const auto train = gen_dataset(spec, Split::Train);
            const auto eval = gen_dataset(spec, Split::Eval);
            write_jsonl(train, (fs::path(gen_out) / "train.jsonl").string());
            write_jsonl(eval, (fs::path(gen_out) / "eval.jsonl").string());
            write_text((fs::path(gen_out) / "concepts.json").string(), json(spec.concepts).dump() + "\n");
            write_text((fs::path(gen_out) / "spec.json").string(), to_json(spec).dump(1) + "\n");
            std::string rules;
            for (const auto& r : spec.rules) rules += r + "\n";
            write_text((fs::path(gen_out) / "rules.txt").string(), rules);
            std::vector<RuleGraph> graphs;
            for (const auto& r : spec.rules) graphs.push_back(compile(parse(r), train.vocab));
            std::vector<double> viol;
            for (const auto& g : graphs) {
                double v = 0;
                for (const auto& y : eval.y) v += 1 - rule_truth(g, y);
                viol.push_back(v / static_cast<double>(eval.size()));
            }
            std::cout << json{{"out", gen_out}, {"train_rows", train.size()}, {"eval_rows", eval.size()}, {"eval_violated_frac", viol}}.dump(1)
                      << '\n';
        } else if (*tl) {
            const auto vocab = load_vocab(tl_concepts, tl_data);
            const auto data = read_jsonl(tl_data, vocab);
            lcfg.seed = G.seed;
            LeafBank bank;
            if (tl_fit_t) {
                const auto cut = static_cast<std::size_t>(static_cast<double>(data.size()) * (1.0 - tl_heldout));
                bank = train_leaf_bank(slice(data, 0, cut), lcfg);
                fit_temperature(bank, slice(data, cut, data.size()));
            } else {
                bank = train_leaf_bank(data, lcfg);
            }
            save_bank(bank, tl_out);
            Matrix Z, P;
            bank_forward(bank, data.X, Z, P);
            const Matrix T = data.label_matrix();
            const double acc = ((P.array() > 0.5).cast<double>() == T.array()).cast<double>().mean();
            std::cout << json{{"bank", tl_out}, {"fingerprint", fingerprint(bank)}, {"temperature", bank.temperature}, {"train_accuracy", acc}}.dump(1)
                      << '\n';
        } else if (*mr) {
            const auto vocab = load_vocab(mr_concepts, mr_data);
            auto data = read_jsonl(mr_data, vocab);
            if (!mr_hier.empty()) {
                std::map<int, std::vector<int>> parents;
                for (const auto& [child, ps] : read_json(mr_hier).items())
                    for (const auto& p : ps) parents[vocab.id(child) - 1].push_back(vocab.id(p.get<std::string>()) - 1);
                data.y = upward_closure(data.y, parents);
            }
            auto rules = mine_pairwise(data.y, vocab.names(), mcfg);
            if (mr_compound) {
                auto comp = mine_compound(data.y, vocab.names(), mcfg);
                rules.insert(rules.end(), comp.begin(), comp.end());
            }
            std::string text = "# mined from " + mr_data + "\n";
            for (const auto& r : rules) text += to_rules_line(r) + "\n";
            write_text(mr_out, text);
            log("mined " + std::to_string(rules.size()) + " rules");
        } else if (*tg || *sc) {
            const auto vocab = load_vocab(in_concepts, in_data);
            const auto data = read_jsonl(in_data, vocab);
            const auto bank = load_bank(in_bank);
            if (bank.vocab.names() != vocab.names()) throw std::runtime_error("bank vocabulary differs from dataset vocabulary");
            const auto rules = load_rules(in_rules, vocab);
            const GateConfig gc = gate_config(G);
            GateCache cache(G.cache_dir);
            Matrix Z, P;
            bank_forward(bank, data.X, Z, P);
            if (*tg) {
                json out = json::array();
                const auto t0 = std::chrono::steady_clock::now();
                for (std::size_t r = 0; r < rules.graphs.size(); ++r) {
                    const auto& g = rules.graphs[r];
                    if (g.is_leaf(g.root())) continue;
                    TrainStats st;
                    train_rule(g, bank, Z, P, data.y, gc, &cache, &st);
                    out.push_back({{"rule", rules.texts[r]}, {"gates_trained", st.gates_trained}, {"cache_hits", st.cache_hits}, {"steps", st.steps}});
                }
                const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                log("trained gates in " + std::to_string(secs) + " s, cache " + G.cache_dir);
                std::cout << out.dump(1) << '\n';
            } else {
                std::vector<NodeTable> tables;
                for (std::size_t r = 0; r < rules.graphs.size(); ++r) {
                    const auto& g = rules.graphs[r];
                    GateSet gates;
                    for (int v : g.internal_nodes()) {
                        const auto key = make_cache_key(g, v, fingerprint(bank), gate_lineage_tag(gc, bank.feature_dim()), bank.feature_dim());
                        auto gate = cache.load(key);
                        if (!gate) throw std::runtime_error("no cached gate for '" + rules.texts[r] + "' node " + std::to_string(v) +
                                                            "; run train-gates with the same settings");
                        gates[v] = *gate;
                    }
                    tables.push_back(propagate_gates(g, Z, P, gates));
                }
                const Aggregation agg = parse_aggregation(G.aggregation);
                std::ostringstream os;
                for (std::size_t i = 0; i < data.size(); ++i) {
                    std::vector<RuleScore> scores;
                    json per = json::array();
                    for (std::size_t r = 0; r < rules.graphs.size(); ++r) {
                        const auto& g = rules.graphs[r];
                        const double t = tables[r].soft[static_cast<std::size_t>(g.root())](static_cast<Eigen::Index>(i));
                        std::optional<double> a;
                        if (auto ap = antecedent_probs(g, tables[r])) a = (*ap)(static_cast<Eigen::Index>(i));
                        scores.push_back(violation_score(static_cast<int>(r), t, a, G.tau, !G.no_gating));
                        per.push_back({{"id", r}, {"satisfaction", t}, {"violation", scores.back().violation}});
                    }
                    os << json{{"row", i}, {"anomaly", aggregate(scores, agg)}, {"rules", per}, {"topk", attribute_topk(scores, sc_topk)}}.dump()
                       << '\n';
                }
                write_text(sc_out, os.str());
            }
        } else if (*ev) {
            ExperimentConfig cfg = ev_exp.empty() ? default_experiment_config() : experiment_config_from_json(read_json(ev_exp));
            if (seed_opt->count()) cfg.seed = G.seed;
            if (neg_opt->count()) cfg.gates.mode = parse_mode(G.negatives);
            if (epl_opt->count()) cfg.gates.epochs_level = G.epochs_level;
            if (batch_opt->count()) cfg.gates.batch = G.batch;
            if (lr_opt->count()) cfg.gates.lr = G.lr;
            if (agg_opt->count()) cfg.aggregation = parse_aggregation(G.aggregation);
            if (tau_opt->count()) cfg.tau = G.tau;
            if (G.no_gating) cfg.antecedent_gating = false;
            if (ev_mine) cfg.mine_rules = true;
            cfg.gates.threads = G.threads;
            const auto t0 = std::chrono::steady_clock::now();
            EvalReport rep;
            if (!ev_train.empty() || !ev_eval.empty()) {
                if (ev_train.empty() || ev_eval.empty() || ev_rules.empty()) throw CLI::ValidationError("--train, --eval and --rules go together");
                const auto vocab = load_vocab(ev_concepts, ev_train);
                std::vector<std::string> texts;
                for (const auto& f : parse_rules(read_file(ev_rules))) texts.push_back(format(f));
                rep = run_experiment(cfg, read_jsonl(ev_train, vocab), read_jsonl(ev_eval, vocab), texts);
            } else {
                rep = run_experiment(cfg);
            }
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            const json j = to_json(rep);
            write_text(ev_report, j.dump(1) + "\n");
            std::cout << render_table(j);
            log("eval finished in " + std::to_string(secs) + " s; report " + ev_report);
        } else if (*rp) {
            std::cout << render_table(read_json(rp_in));
        }
    } catch (const CLI::Error& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rulegate/boolsem.hpp"
#include "rulegate/neural.hpp"

namespace rulegate {

/// Feature vectors with hard concept labels. X holds one sample per column.
struct ConceptDataset {
    ConceptVocab vocab;
    Matrix X;                        // D x M
    std::vector<TruthAssignment> y;  // M rows of N bits

    std::size_t size() const { return y.size(); }
    int input_dim() const { return static_cast<int>(X.rows()); }

    /// N x M matrix of 0/1 targets.
    Matrix label_matrix() const {
        Matrix T(static_cast<Eigen::Index>(vocab.size()), static_cast<Eigen::Index>(y.size()));
        for (std::size_t j = 0; j < y.size(); ++j)
            for (std::size_t c = 0; c < vocab.size(); ++c) T(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) = y[j][c];
        return T;
    }

    void validate() const {
        if (static_cast<std::size_t>(X.cols()) != y.size()) throw std::invalid_argument("dataset: feature/label row mismatch");
        for (const auto& row : y)
            if (row.size() != vocab.size()) throw std::invalid_argument("dataset: label width != vocabulary size");
    }
};

struct LeafBankConfig {
    int feature_dim = 32;
    int epochs = 3;
    int batch = 64;
    double lr = 1e-3;
    bool pos_weight = false;
    std::uint64_t seed = 123;
};

/// Shared encoder (net.layers[0], ReLU) plus one linear head per concept (net.layers[1]).
struct LeafBank {
    ConceptVocab vocab;
    Mlp net;
    double temperature = 1.0;
    std::vector<bool> degenerate;  // concepts with no positive training label

    int input_dim() const { return net.input_dim(); }
    int feature_dim() const { return net.hidden_dim(); }
};

/// Embeddings (F x M) and concept probabilities (N x M) for a batch.
inline void bank_forward(const LeafBank& bank, const Matrix& X, Matrix& Z, Matrix& P) {
    Matrix L = forward_batch(bank.net, X, &Z);
    P = L.unaryExpr([t = bank.temperature](double l) { return sigmoid(l / t); });
}

inline Vector encode(const LeafBank& bank, const Vector& x) { return forward(bank.net, x).h; }

inline Vector concept_probs(const LeafBank& bank, const Vector& x) {
    Vector l = forward(bank.net, x).logits;
    return l.unaryExpr([t = bank.temperature](double v) { return sigmoid(v / t); });
}

inline Matrix concept_logits(const LeafBank& bank, const Matrix& X) { return forward_batch(bank.net, X); }

inline LeafBank train_leaf_bank(const ConceptDataset& data, const LeafBankConfig& cfg) {
    data.validate();
    if (data.size() == 0) throw std::invalid_argument("train_leaf_bank: empty data");
    const int N = static_cast<int>(data.vocab.size());
    std::mt19937_64 rng(cfg.seed);
    LeafBank bank;
    bank.vocab = data.vocab;
    bank.net = make_mlp({data.input_dim(), cfg.feature_dim, N}, rng);
    bank.net.arch = "leafbank:" + bank.net.arch;

    const Matrix T = data.label_matrix();
    Vector pw = Vector::Ones(N);
    bank.degenerate.assign(static_cast<std::size_t>(N), false);
    for (int c = 0; c < N; ++c) {
        const double pos = T.row(c).sum(), neg = static_cast<double>(T.cols()) - pos;
        if (pos == 0) {
            bank.degenerate[static_cast<std::size_t>(c)] = true;
            std::cerr << "warning: concept '" << data.vocab.name(c + 1) << "' has no positive labels\n";
        }
        if (cfg.pos_weight) pw(c) = pos > 0 ? std::clamp(neg / pos, 1.0, 100.0) : 1.0;
    }

    AdamState opt = make_adam(bank.net, cfg.lr);
    std::vector<Eigen::Index> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Grads g;
    for (int ep = 0; ep < cfg.epochs; ++ep) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t e = std::min(order.size(), s + static_cast<std::size_t>(cfg.batch));
            std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(s), order.begin() + static_cast<std::ptrdiff_t>(e));
            const Matrix Xb = data.X(Eigen::all, idx);
            const Matrix Tb = T(Eigen::all, idx);
            backward(bank.net, Xb, Tb, g, cfg.pos_weight ? &pw : nullptr);
            adam_step(opt, bank.net, g);
        }
    }
    return bank;
}

struct TemperatureFit {
    double T = 1.0;
    bool at_bound = false;
};

/// Scalar T minimizing mean BCE(sigmoid(logit / T), target); golden-section search on log T in [-3, 3].
inline TemperatureFit fit_temperature(const Matrix& logits, const Matrix& targets) {
    if (logits.size() == 0) throw std::invalid_argument("fit_temperature: empty data");
    auto f = [&](double logT) {
        const double T = std::exp(logT);
        double s = 0.0;
        for (Eigen::Index i = 0; i < logits.size(); ++i) s += bce_with_logits(logits.data()[i] / T, targets.data()[i]);
        return s / static_cast<double>(logits.size());
    };
    const double lo0 = -3.0, hi0 = 3.0;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = lo0, hi = hi0;
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    while (hi - lo > 1e-7) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    const double best = 0.5 * (lo + hi);
    TemperatureFit out{std::exp(best), best - lo0 < 1e-3 || hi0 - best < 1e-3};
    if (out.at_bound) std::cerr << "warning: temperature fit hit the search bound (T=" << out.T << ")\n";
    return out;
}

/// Fits T on held-out data and stores it in the bank.
inline double fit_temperature(LeafBank& bank, const ConceptDataset& heldout) {
    heldout.validate();
    if (heldout.size() == 0) throw std::invalid_argument("fit_temperature: empty data");
    bank.temperature = fit_temperature(concept_logits(bank, heldout.X), heldout.label_matrix()).T;
    return bank.temperature;
}

/// 16 hex chars of SHA-256 over the encoder parameters only.
inline std::string fingerprint(const LeafBank& bank) {
    return sha256_hex(serialize_layers({bank.net.layers.front()}), 16);
}

inline nlohmann::json bank_to_json(const LeafBank& bank) {
    const std::string blob = serialize_mlp(bank.net);
    std::vector<int> degen;
    for (bool d : bank.degenerate) degen.push_back(d ? 1 : 0);
    return {{"format", "rulegate-leafbank"},
            {"version", 1},
            {"vocab", bank.vocab.names()},
            {"input_dim", bank.input_dim()},
            {"feature_dim", bank.feature_dim()},
            {"temperature", bank.temperature},
            {"degenerate", degen},
            {"fingerprint", fingerprint(bank)},
            {"params", to_hex(reinterpret_cast<const unsigned char*>(blob.data()), blob.size())}};
}

inline LeafBank bank_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "rulegate-leafbank" || j.value("version", 0) != 1)
        throw std::runtime_error("unsupported leaf bank file");
    LeafBank bank;
    bank.vocab = ConceptVocab(j.at("vocab").get<std::vector<std::string>>());
    const auto hex = j.at("params").get<std::string>();
    if (hex.size() % 2) throw std::runtime_error("leaf bank params: odd hex length");
    std::string blob(hex.size() / 2, '\0');
    for (std::size_t i = 0; i < blob.size(); ++i) blob[i] = static_cast<char>(std::stoi(hex.substr(2 * i, 2), nullptr, 16));
    bank.net = deserialize_mlp(blob);
    bank.temperature = j.at("temperature").get<double>();
    if (!(bank.temperature > 0)) throw std::runtime_error("leaf bank: temperature must be positive");
    for (int d : j.value("degenerate", std::vector<int>{})) bank.degenerate.push_back(d != 0);
    if (bank.net.layers.size() != 2 || bank.net.output_dim() != static_cast<int>(bank.vocab.size()))
        throw std::runtime_error("leaf bank: parameter shapes do not match vocabulary");
    if (j.contains("fingerprint") && j["fingerprint"].get<std::string>() != fingerprint(bank))
        throw std::runtime_error("leaf bank: fingerprint mismatch");
    return bank;
}

inline void save_bank(const LeafBank& bank, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << bank_to_json(bank).dump(1) << '\n';
}

inline LeafBank load_bank(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    return bank_from_json(nlohmann::json::parse(f));
}

}  // namespace rulegate

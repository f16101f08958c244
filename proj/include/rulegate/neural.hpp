#pragma once

// Dense ReLU networks with a linear output layer, trained by BCE-with-logits and Adam.
// Samples are columns: a batch is an (in x B) matrix.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rulegate/hash.hpp"

namespace rulegate {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Layer {
    Matrix W;  // out x in
    Vector b;  // out
};

/// Every layer but the last is followed by ReLU; the last layer emits logits.
struct Mlp {
    std::vector<Layer> layers;
    std::string arch;

    int input_dim() const { return static_cast<int>(layers.front().W.cols()); }
    int output_dim() const { return static_cast<int>(layers.back().W.rows()); }
    /// Width of the representation feeding the output layer.
    int hidden_dim() const { return static_cast<int>(layers.back().W.cols()); }
};

using Grads = std::vector<Layer>;

inline std::string arch_tag(const std::vector<int>& sizes) {
    std::string s = "mlp";
    for (std::size_t i = 0; i < sizes.size(); ++i) s += (i ? "-" : ":") + std::to_string(sizes[i]);
    return s + ":relu:linear";
}

/// Glorot-uniform weights, zero biases. `sizes` = {in, hidden..., out}.
inline Mlp make_mlp(const std::vector<int>& sizes, std::mt19937_64& rng) {
    if (sizes.size() < 2) throw std::invalid_argument("make_mlp: need at least input and output sizes");
    Mlp m;
    m.arch = arch_tag(sizes);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int in = sizes[l], out = sizes[l + 1];
        const double bound = std::sqrt(6.0 / (in + out));
        std::uniform_real_distribution<double> U(-bound, bound);
        Layer L{Matrix(out, in), Vector::Zero(out)};
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c) L.W(r, c) = U(rng);
        m.layers.push_back(std::move(L));
    }
    return m;
}

inline Mlp zeros_like(const Mlp& m) {
    Mlp z = m;
    for (auto& L : z.layers) {
        L.W.setZero();
        L.b.setZero();
    }
    return z;
}

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Stable -[pw*t*log s(x) + (1-t)*log(1-s(x))].
inline double bce_with_logits(double logit, double target, double pos_weight = 1.0) {
    const double softplus_neg = std::max(-logit, 0.0) + std::log1p(std::exp(-std::abs(logit)));  // -log s(x)
    const double softplus_pos = softplus_neg + logit;                                               // -log(1-s(x))
    return pos_weight * target * softplus_neg + (1.0 - target) * softplus_pos;
}

struct ForwardCache {
    std::vector<Matrix> acts;  // acts[0] = input, acts[l+1] = output of layer l
};

inline void check_input(const Mlp& m, Eigen::Index rows) {
    if (m.layers.empty()) throw std::invalid_argument("mlp has no layers");
    if (rows != m.layers.front().W.cols())
        throw std::invalid_argument("input dim " + std::to_string(rows) + " != " + std::to_string(m.layers.front().W.cols()));
}

/// Batch forward; returns logits (out x B). `hidden` receives the last ReLU output.
inline Matrix forward_batch(const Mlp& m, const Matrix& X, Matrix* hidden = nullptr, ForwardCache* cache = nullptr) {
    check_input(m, X.rows());
    Matrix a = X;
    if (cache) cache->acts = {X};
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        Matrix z = m.layers[l].W * a;
        z.colwise() += m.layers[l].b;
        if (l + 1 < m.layers.size())
            a = z.cwiseMax(0.0);
        else
            a = std::move(z);
        if (cache) cache->acts.push_back(a);
        if (hidden && l + 2 == m.layers.size()) *hidden = a;
    }
    if (hidden && m.layers.size() == 1) *hidden = X;
    return a;
}

struct ForwardResult {
    Vector h;       // last hidden activation
    Vector logits;  // one per output
};

inline ForwardResult forward(const Mlp& m, const Vector& x) {
    Matrix h;
    Matrix out = forward_batch(m, x, &h);
    return {h.col(0), out.col(0)};
}

/// Mean BCE over all outputs and samples.
inline double loss_batch(const Mlp& m, const Matrix& X, const Matrix& T, const Vector* pos_weight = nullptr) {
    Matrix L = forward_batch(m, X);
    if (L.rows() != T.rows() || L.cols() != T.cols()) throw std::invalid_argument("target shape mismatch");
    double s = 0.0;
    for (Eigen::Index j = 0; j < L.cols(); ++j)
        for (Eigen::Index i = 0; i < L.rows(); ++i) s += bce_with_logits(L(i, j), T(i, j), pos_weight ? (*pos_weight)(i) : 1.0);
    return s / static_cast<double>(L.size());
}

/// Gradients of the mean BCE. Returns the loss.
inline double backward(const Mlp& m, const Matrix& X, const Matrix& T, Grads& grads, const Vector* pos_weight = nullptr) {
    ForwardCache cache;
    Matrix L = forward_batch(m, X, nullptr, &cache);
    if (L.rows() != T.rows() || L.cols() != T.cols()) throw std::invalid_argument("target shape mismatch");
    const double n = static_cast<double>(L.size());
    Matrix delta(L.rows(), L.cols());
    double loss = 0.0;
    for (Eigen::Index j = 0; j < L.cols(); ++j) {
        for (Eigen::Index i = 0; i < L.rows(); ++i) {
            const double pw = pos_weight ? (*pos_weight)(i) : 1.0;
            const double t = T(i, j), s = sigmoid(L(i, j));
            loss += bce_with_logits(L(i, j), t, pw);
            delta(i, j) = (s * (pw * t + 1.0 - t) - pw * t) / n;
        }
    }
    grads.resize(m.layers.size());
    for (std::size_t l = m.layers.size(); l-- > 0;) {
        const Matrix& a_in = cache.acts[l];
        grads[l].W = delta * a_in.transpose();
        grads[l].b = delta.rowwise().sum();
        if (l == 0) break;
        Matrix back = m.layers[l].W.transpose() * delta;
        const Matrix& a_prev = cache.acts[l];  // ReLU output of layer l-1
        delta = back.cwiseProduct((a_prev.array() > 0.0).cast<double>().matrix());
    }
    return loss / n;
}

struct AdamState {
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;
    Grads m, v;
};

inline AdamState make_adam(const Mlp& net, double lr) {
    AdamState s;
    s.lr = lr;
    Mlp z = zeros_like(net);
    s.m = z.layers;
    s.v = z.layers;
    return s;
}

inline void adam_step(AdamState& s, Mlp& net, const Grads& g) {
    if (s.m.size() != net.layers.size()) {
        Mlp z = zeros_like(net);
        s.m = z.layers;
        s.v = z.layers;
    }
    ++s.step;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    auto upd = [&](auto& p, const auto& gr, auto& m, auto& v) {
        m = s.beta1 * m + (1.0 - s.beta1) * gr;
        v = s.beta2 * v + (1.0 - s.beta2) * gr.cwiseProduct(gr);
        p.array() -= s.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + s.eps);
    };
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        upd(net.layers[l].W, g[l].W, s.m[l].W, s.v[l].W);
        upd(net.layers[l].b, g[l].b, s.m[l].b, s.v[l].b);
    }
}

struct GradCheck {
    double max_rel_error = 0.0;
    int checked = 0;
    int skipped = 0;  // coordinates whose perturbation crosses a ReLU kink
};

namespace detail {

inline std::vector<bool> relu_pattern(const Mlp& m, const Matrix& X) {
    ForwardCache c;
    forward_batch(m, X, nullptr, &c);
    std::vector<bool> pat;
    for (std::size_t l = 1; l + 1 < c.acts.size(); ++l)
        for (Eigen::Index i = 0; i < c.acts[l].size(); ++i) pat.push_back(c.acts[l].data()[i] > 0.0);
    return pat;
}

}  // namespace detail

/// Central differences against the supplied analytic gradients. Relative error uses
/// max(|a|, |n|, 1e-4) as denominator so near-zero coordinates compare absolutely.
inline GradCheck compare_gradients(const Mlp& m, const Matrix& X, const Matrix& T, const Grads& g, double eps) {
    if (!(eps > 0.0 && eps <= 1e-3)) throw std::invalid_argument("eps must be in (0, 1e-3]");
    GradCheck out;
    const auto base = detail::relu_pattern(m, X);
    Mlp p = m;
    auto probe = [&](double& slot, double analytic) {
        const double orig = slot;
        slot = orig + eps;
        const double lp = loss_batch(p, X, T);
        const bool kink_p = detail::relu_pattern(p, X) != base;
        slot = orig - eps;
        const double lm = loss_batch(p, X, T);
        const bool kink_m = detail::relu_pattern(p, X) != base;
        slot = orig;
        if (kink_p || kink_m) {
            ++out.skipped;
            return;
        }
        const double numeric = (lp - lm) / (2.0 * eps);
        const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-4});
        out.max_rel_error = std::max(out.max_rel_error, std::abs(numeric - analytic) / denom);
        ++out.checked;
    };
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        for (Eigen::Index i = 0; i < p.layers[l].W.size(); ++i) probe(p.layers[l].W.data()[i], g[l].W.data()[i]);
        for (Eigen::Index i = 0; i < p.layers[l].b.size(); ++i) probe(p.layers[l].b.data()[i], g[l].b.data()[i]);
    }
    return out;
}

inline GradCheck finite_diff_check(const Mlp& m, const Matrix& X, const Matrix& T, double eps = 1e-5) {
    Grads g;
    backward(m, X, T, g);
    return compare_gradients(m, X, T, g, eps);
}

// Binary blob: magic, arch, layer shapes, row-major values, SHA-256 trailer.
namespace detail {

constexpr char kMlpMagic[8] = {'R', 'G', 'M', 'L', 'P', '0', '1', '\0'};

inline void put_u64(std::string& s, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& s, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(s, v);
}

struct Reader {
    const std::string& s;
    std::size_t pos = 0;
    std::uint64_t u64() {
        if (pos + 8 > s.size()) throw std::runtime_error("mlp blob truncated");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + static_cast<std::size_t>(i)])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        std::uint64_t v = u64();
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
};

}  // namespace detail

inline std::string serialize_layers(const std::vector<Layer>& layers) {
    std::string s;
    detail::put_u64(s, layers.size());
    for (const auto& L : layers) {
        detail::put_u64(s, static_cast<std::uint64_t>(L.W.rows()));
        detail::put_u64(s, static_cast<std::uint64_t>(L.W.cols()));
        for (Eigen::Index r = 0; r < L.W.rows(); ++r)
            for (Eigen::Index c = 0; c < L.W.cols(); ++c) detail::put_f64(s, L.W(r, c));
        for (Eigen::Index r = 0; r < L.b.size(); ++r) detail::put_f64(s, L.b(r));
    }
    return s;
}

inline std::string serialize_mlp(const Mlp& m) {
    std::string s(detail::kMlpMagic, 8);
    detail::put_u64(s, m.arch.size());
    s += m.arch;
    s += serialize_layers(m.layers);
    s += sha256_hex(s);
    return s;
}

inline Mlp deserialize_mlp(const std::string& blob) {
    if (blob.size() < 8 + 64 || blob.compare(0, 8, std::string(detail::kMlpMagic, 8)) != 0)
        throw std::runtime_error("not an mlp blob");
    const std::string body = blob.substr(0, blob.size() - 64);
    if (sha256_hex(body) != blob.substr(blob.size() - 64)) throw std::runtime_error("mlp blob checksum mismatch");
    detail::Reader r{body, 8};
    Mlp m;
    const auto arch_len = r.u64();
    if (r.pos + arch_len > body.size()) throw std::runtime_error("mlp blob truncated");
    m.arch = body.substr(r.pos, arch_len);
    r.pos += arch_len;
    const auto n = r.u64();
    if (n > 1024) throw std::runtime_error("mlp blob: implausible layer count");
    for (std::uint64_t l = 0; l < n; ++l) {
        const auto rows = static_cast<Eigen::Index>(r.u64()), cols = static_cast<Eigen::Index>(r.u64());
        if (rows <= 0 || cols <= 0 || rows * cols > (1 << 26)) throw std::runtime_error("mlp blob: bad shape");
        Layer L{Matrix(rows, cols), Vector(rows)};
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) L.W(i, j) = r.f64();
        for (Eigen::Index i = 0; i < rows; ++i) L.b(i) = r.f64();
        m.layers.push_back(std::move(L));
    }
    if (r.pos != body.size()) throw std::runtime_error("mlp blob: trailing bytes");
    return m;
}

inline bool bit_equal(const Mlp& a, const Mlp& b) { return a.arch == b.arch && serialize_layers(a.layers) == serialize_layers(b.layers); }

}  // namespace rulegate

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qnli/common.hpp"
#include "qnli/pregroup.hpp"
#include "qnli/rng.hpp"
#include "qnli/simulator.hpp"

namespace qnli {

inline double softplus(double x) {
    return x > 30.0 ? x : std::log1p(std::exp(x));
}
inline double softplus_prime(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double softplus_inv(double y) { return std::log(std::expm1(y)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// D(P||Q) in nats after additive smoothing: eps is added to every entry of
/// both distributions and each is renormalized. Non-negative by Gibbs'
/// inequality; tiny negative rounding is clamped.
inline double kl_divergence(const std::vector<double>& p,
                            const std::vector<double>& q, double eps = 1e-9) {
    if (p.size() != q.size())
        throw malformed_input("KL divergence over distributions of unequal length");
    const double z = 1.0 + double(p.size()) * eps;
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double pi = (p[i] + eps) / z;
        double qi = (q[i] + eps) / z;
        d += pi * std::log(pi / qi);
    }
    return d < 0.0 ? 0.0 : d;
}

struct Prediction {
    double score = 0.0;                     // relatedness in [0, 1]
    std::array<double, 3> logits{0, 0, 0};  // inference classes
};

inline int argmax_label(const std::array<double, 3>& logits) {
    int best = 0;
    for (int c = 1; c < 3; ++c)
        if (logits[std::size_t(c)] > logits[std::size_t(best)]) best = c;
    return best;
}

// ---------------------------------------------------------------------------
// KL model readout: affine map from the two divergence directions to class
// logits; for relatedness a single positive scale on the symmetrized
// divergence. gamma is kept positive by training its log.

struct KlReadout {
    std::array<double, 6> W{};  // 3x2 row-major
    std::array<double, 3> b{};
    double log_gamma = 0.0;

    double gamma() const { return std::exp(log_gamma); }
};

/// Divergence features: f0 = D(P_hyp || P_prem), f1 = D(P_prem || P_hyp).
inline std::array<double, 2> kl_features(const PostselectedOutput& prem,
                                         const PostselectedOutput& hyp) {
    auto pp = distribution(prem);
    auto ph = distribution(hyp);
    return {kl_divergence(ph, pp), kl_divergence(pp, ph)};
}

inline Prediction kl_predict(const PostselectedOutput& prem,
                             const PostselectedOutput& hyp,
                             const KlReadout& readout, Task task) {
    auto f = kl_features(prem, hyp);
    Prediction out;
    if (task == Task::inference) {
        for (int c = 0; c < 3; ++c)
            out.logits[std::size_t(c)] = readout.W[std::size_t(c) * 2] * f[0] +
                                         readout.W[std::size_t(c) * 2 + 1] * f[1] +
                                         readout.b[std::size_t(c)];
    } else {
        out.score = std::exp(-readout.gamma() * (f[0] + f[1]));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Hybrid head: a small dense network over the concatenated sentence
// distributions, tanh hidden layer, identity output (squashing happens at
// the loss/prediction site).

struct DenseHead {
    int in = 4, hidden = 8, out = 1;
    std::vector<double> w1, b1, w2, b2;  // w1: hidden x in, w2: out x hidden

    void resize(int out_dim) {
        out = out_dim;
        w1.assign(std::size_t(hidden) * in, 0.0);
        b1.assign(std::size_t(hidden), 0.0);
        w2.assign(std::size_t(out) * hidden, 0.0);
        b2.assign(std::size_t(out), 0.0);
    }

    int param_count() const {
        return int(w1.size() + b1.size() + w2.size() + b2.size());
    }

    std::vector<double> forward(const std::vector<double>& x) const {
        std::vector<double> h(std::size_t(hidden), 0.0);
        for (int j = 0; j < hidden; ++j) {
            double a = b1[std::size_t(j)];
            for (int i = 0; i < in; ++i) a += w1[std::size_t(j) * in + i] * x[std::size_t(i)];
            h[std::size_t(j)] = std::tanh(a);
        }
        std::vector<double> z(std::size_t(out), 0.0);
        for (int k = 0; k < out; ++k) {
            double a = b2[std::size_t(k)];
            for (int j = 0; j < hidden; ++j) a += w2[std::size_t(k) * hidden + j] * h[std::size_t(j)];
            z[std::size_t(k)] = a;
        }
        return z;
    }

    /// Analytic gradients for one input. dz = dL/dz at the (identity)
    /// output. Gradients are accumulated into flat spans laid out as
    /// [w1, b1, w2, b2].
    void backward(const std::vector<double>& x, const std::vector<double>& dz,
                  double* grad) const {
        std::vector<double> h(std::size_t(hidden), 0.0), a1(std::size_t(hidden), 0.0);
        for (int j = 0; j < hidden; ++j) {
            double a = b1[std::size_t(j)];
            for (int i = 0; i < in; ++i) a += w1[std::size_t(j) * in + i] * x[std::size_t(i)];
            a1[std::size_t(j)] = a;
            h[std::size_t(j)] = std::tanh(a);
        }
        double* gw1 = grad;
        double* gb1 = gw1 + w1.size();
        double* gw2 = gb1 + b1.size();
        double* gb2 = gw2 + w2.size();
        std::vector<double> dh(std::size_t(hidden), 0.0);
        for (int k = 0; k < out; ++k) {
            gb2[k] += dz[std::size_t(k)];
            for (int j = 0; j < hidden; ++j) {
                gw2[std::size_t(k) * hidden + j] += dz[std::size_t(k)] * h[std::size_t(j)];
                dh[std::size_t(j)] += dz[std::size_t(k)] * w2[std::size_t(k) * hidden + j];
            }
        }
        for (int j = 0; j < hidden; ++j) {
            double t = std::tanh(a1[std::size_t(j)]);
            double da = dh[std::size_t(j)] * (1.0 - t * t);
            gb1[j] += da;
            for (int i = 0; i < in; ++i) gw1[std::size_t(j) * in + i] += da * x[std::size_t(i)];
        }
    }
};

/// [P_prem(0), P_prem(1), P_hyp(0), P_hyp(1)] for single-output circuits.
inline std::vector<double> xor_features(const PostselectedOutput& prem,
                                        const PostselectedOutput& hyp) {
    auto pp = distribution(prem);
    auto ph = distribution(hyp);
    if (pp.size() != 2 || ph.size() != 2)
        throw malformed_input("hybrid head expects single-qubit sentence outputs");
    return {pp[0], pp[1], ph[0], ph[1]};
}

inline Prediction xor_forward(const PostselectedOutput& prem,
                              const PostselectedOutput& hyp,
                              const DenseHead& head, Task task) {
    auto z = head.forward(xor_features(prem, hyp));
    Prediction out;
    if (task == Task::relatedness) {
        out.score = sigmoid(z[0]);
    } else {
        for (int c = 0; c < 3; ++c) out.logits[std::size_t(c)] = z[std::size_t(c)];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Order embedding readout for the cluster model: sentences land in a
// non-negative coordinatewise-ordered space; entailment violation energy is
// the squared positive part of e_hyp - e_prem.

struct OrderEmbedding {
    std::array<double, 8> V{};  // 4x2 row-major
    std::array<double, 4> c{};

    std::array<double, 4> embed(const std::array<double, 2>& v) const {
        std::array<double, 4> e{};
        for (int i = 0; i < 4; ++i)
            e[std::size_t(i)] = softplus(V[std::size_t(i) * 2] * v[0] +
                                         V[std::size_t(i) * 2 + 1] * v[1] + c[std::size_t(i)]);
        return e;
    }
};

inline double order_energy(const std::array<double, 4>& e_prem,
                           const std::array<double, 4>& e_hyp) {
    double e = 0.0;
    for (int i = 0; i < 4; ++i) {
        double d = e_hyp[std::size_t(i)] - e_prem[std::size_t(i)];
        if (d > 0.0) e += d * d;
    }
    return e;
}

struct OrderReadout {
    std::array<double, 6> W{};  // 3x2 over [E(p->h), E(h->p)]
    std::array<double, 3> b{};
    double log_gamma = 0.0;

    double gamma() const { return std::exp(log_gamma); }
};

inline std::array<double, 2> sentence_point(const PostselectedOutput& out) {
    auto p = distribution(out);
    if (p.size() != 2)
        throw malformed_input("order embedding expects single-qubit outputs");
    return {p[0], p[1]};
}

inline Prediction order_predict(const PostselectedOutput& prem,
                                const PostselectedOutput& hyp,
                                const OrderEmbedding& emb,
                                const OrderReadout& readout, Task task) {
    auto ep = emb.embed(sentence_point(prem));
    auto eh = emb.embed(sentence_point(hyp));
    double e_ph = order_energy(ep, eh);
    double e_hp = order_energy(eh, ep);
    Prediction out;
    if (task == Task::inference) {
        for (int c = 0; c < 3; ++c)
            out.logits[std::size_t(c)] = readout.W[std::size_t(c) * 2] * e_ph +
                                         readout.W[std::size_t(c) * 2 + 1] * e_hp +
                                         readout.b[std::size_t(c)];
    } else {
        out.score = std::exp(-readout.gamma() * (e_ph + e_hp));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Word clustering. Words are grouped by pregroup type first (clusters never
// straddle syntactic roles), then k-means with seeded k-means++ init runs
// within each group. Keys may be type-qualified ("token|type"); embedding
// lookup uses the token part.

using Embeddings = std::map<std::string, std::vector<double>>;

/// "word v1 v2 ... vd" per line, single spaces.
inline Embeddings load_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw malformed_input("cannot open embeddings: " + path);
    Embeddings out;
    std::string line;
    int lineno = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        std::vector<double> v;
        double x;
        while (ls >> x) v.push_back(x);
        if (v.empty())
            throw malformed_input(path + ":" + std::to_string(lineno) +
                                  ": no vector components");
        if (dim == 0) dim = v.size();
        if (v.size() != dim)
            throw malformed_input(path + ":" + std::to_string(lineno) +
                                  ": inconsistent dimension");
        out[word] = std::move(v);
    }
    return out;
}

inline std::string base_token(const std::string& key) {
    auto bar = key.find('|');
    return bar == std::string::npos ? key : key.substr(0, bar);
}

namespace detail {

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double t = a[i] - b[i];
        d += t * t;
    }
    return d;
}

/// Lloyd's algorithm with k-means++ seeding; returns per-point labels.
inline std::vector<int> kmeans(const std::vector<std::vector<double>>& pts,
                               int k, Rng& rng) {
    const std::size_t n = pts.size();
    std::vector<std::vector<double>> centers;
    centers.push_back(pts[std::size_t(rng.below(n))]);
    std::vector<double> d2(n);
    while (int(centers.size()) < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = sq_dist(pts[i], centers[0]);
            for (std::size_t c = 1; c < centers.size(); ++c)
                best = std::min(best, sq_dist(pts[i], centers[c]));
            d2[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            centers.push_back(pts[std::size_t(rng.below(n))]);
            continue;
        }
        double r = rng.uniform() * total;
        std::size_t pick = n - 1;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += d2[i];
            if (r < acc) {
                pick = i;
                break;
            }
        }
        centers.push_back(pts[pick]);
    }
    std::vector<int> label(n, 0);
    for (int iter = 0; iter < 100; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double bd = sq_dist(pts[i], centers[0]);
            for (int c = 1; c < k; ++c) {
                double d = sq_dist(pts[i], centers[std::size_t(c)]);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            label[i] = best;
        }
        double shift = 0.0;
        for (int c = 0; c < k; ++c) {
            std::vector<double> mean(pts[0].size(), 0.0);
            int cnt = 0;
            for (std::size_t i = 0; i < n; ++i)
                if (label[i] == c) {
                    ++cnt;
                    for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += pts[i][d];
                }
            if (cnt == 0) continue;  // empty cluster keeps its center
            for (double& m : mean) m /= cnt;
            shift += sq_dist(mean, centers[std::size_t(c)]);
            centers[std::size_t(c)] = std::move(mean);
        }
        if (shift < 1e-6) break;
    }
    return label;
}

}  // namespace detail

/// Cluster word keys within each pregroup-type group; k is capped at the
/// group size. Returns key -> global cluster id. Cluster ids are assigned
/// in type-string order and, within a group, by each cluster's
/// lexicographically smallest member (stable across runs).
inline std::map<std::string, int> cluster_words(
    const Embeddings& embeddings, const std::map<std::string, PregroupType>& types,
    int k, std::uint64_t seed) {
    if (k < 1) throw malformed_input("cluster count must be >= 1");
    std::map<std::string, std::vector<std::string>> by_type;  // type str -> keys
    for (const auto& [key, type] : types) by_type[type.str()].push_back(key);

    std::map<std::string, int> assignment;
    int next_id = 0;
    for (auto& [type_str, keys] : by_type) {
        std::sort(keys.begin(), keys.end());
        std::vector<std::vector<double>> pts;
        for (const auto& key : keys) {
            auto it = embeddings.find(base_token(key));
            if (it == embeddings.end())
                throw malformed_input("no embedding for word '" + base_token(key) + "'");
            pts.push_back(it->second);
        }
        const int kk = std::min<int>(k, int(keys.size()));
        Rng rng(derive_seed(seed, "kmeans:" + type_str));
        std::vector<int> label = detail::kmeans(pts, kk, rng);
        // canonicalize cluster order by smallest member key
        std::vector<std::string> smallest{};
        smallest.resize(std::size_t(kk));
        for (std::size_t i = 0; i < keys.size(); ++i) {
            auto& s = smallest[std::size_t(label[i])];
            if (s.empty() || keys[i] < s) s = keys[i];
        }
        std::vector<int> order;
        for (int c = 0; c < kk; ++c)
            if (!smallest[std::size_t(c)].empty()) order.push_back(c);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return smallest[std::size_t(a)] < smallest[std::size_t(b)];
        });
        std::vector<int> remap(std::size_t(kk), -1);
        for (std::size_t r = 0; r < order.size(); ++r)
            remap[std::size_t(order[r])] = next_id + int(r);
        for (std::size_t i = 0; i < keys.size(); ++i)
            assignment[keys[i]] = remap[std::size_t(label[i])];
        next_id += int(order.size());
    }
    return assignment;
}

// Per-cluster Gaussian angle distributions. Gate angles are sampled as
// theta = mu[r] + softplus(rho[r]) * eps with eps keyed by
// (eps_seed, epoch, word, slot); evaluation mode uses eps = 0.
struct ClusterParams {
    std::map<std::string, int> assignment;   // key -> cluster id
    std::vector<std::vector<double>> mu;     // [cluster][slot role]
    std::vector<std::vector<double>> rho;    // raw; std = softplus(rho)
    std::vector<std::string> cluster_type;   // type string per cluster
    std::vector<std::vector<double>> centroid;  // embedding centroid per cluster
    std::uint64_t eps_seed = 0;
};

inline double cluster_sample(const ClusterParams& params, const std::string& key,
                             int slot_role, std::uint64_t epoch, bool train_mode) {
    auto it = params.assignment.find(key);
    if (it == params.assignment.end())
        throw malformed_input("word has no cluster: " + key);
    const int c = it->second;
    double eps = train_mode ? keyed_normal(params.eps_seed, epoch, hash_str(key),
                                           std::uint64_t(slot_role))
                            : 0.0;
    return params.mu[std::size_t(c)][std::size_t(slot_role)] +
           softplus(params.rho[std::size_t(c)][std::size_t(slot_role)]) * eps;
}

}  // namespace qnli

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "qnli/circuit.hpp"
#include "qnli/common.hpp"
#include "qnli/data.hpp"
#include "qnli/metrics.hpp"
#include "qnli/models.hpp"
#include "qnli/pregroup.hpp"
#include "qnli/rng.hpp"
#include "qnli/simulator.hpp"

namespace qnli {

struct TrainConfig {
    ModelKind model = ModelKind::kl;
    Task task = Task::inference;
    int epochs = 60;
    double lr_angles = 0.05;  // circuit angles and cluster mu/rho
    double lr_dense = 1e-3;   // dense / readout / order-embedding weights
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    std::uint64_t seed = 0;
    double fd_step = 1e-3;
    int cluster_k = 4;
    AnsatzConfig ansatz;
    int qubit_cap = 16;
    int threads = 1;
    int regression_bins = 4;  // MI binning for relatedness predictions
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double info = 0.0;      // I_t on the training split, eval mode
    double di = 0.0;        // I_t - I_{t-1}
    double igpp_v = 0.0;
    std::optional<double> iggp_v;      // missing when grad norm is 0
    std::optional<double> grad_norm;   // missing at epoch 0
    double info_dev = 0.0;             // diagnostic
};

inline std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct RunLog {
    std::vector<EpochRecord> records;
    long long n_params = 0;
    int best_epoch = 0;

    std::string to_csv() const {
        std::string out = "epoch,train_loss,val_loss,I,dI,igpp,iggp,grad_norm\n";
        for (const auto& r : records) {
            out += std::to_string(r.epoch) + ',' + fmt_g17(r.train_loss) + ',' +
                   fmt_g17(r.val_loss) + ',' + fmt_g17(r.info) + ',' +
                   fmt_g17(r.di) + ',' + fmt_g17(r.igpp_v) + ',' +
                   (r.iggp_v ? fmt_g17(*r.iggp_v) : "") + ',' +
                   (r.grad_norm ? fmt_g17(*r.grad_norm) : "") + '\n';
        }
        return out;
    }

    double peak_igpp() const {
        double peak = 0.0;
        bool seen = false;
        for (const auto& r : records) {
            if (r.epoch == 0) continue;
            if (!seen || r.igpp_v > peak) peak = r.igpp_v;
            seen = true;
        }
        return seen ? peak : 0.0;
    }
};

// ---------------------------------------------------------------------------
// Compiled sentences. Circuits are deduplicated by sentence text, so the
// reversed copies produced by bidirectional expansion reuse their originals'
// circuits.

struct SentenceBank {
    std::vector<std::string> texts;
    std::vector<Circuit> circuits;          // symbolic
    std::vector<std::vector<int>> slots;    // distinct slots per circuit
    std::map<std::string, int> index;

    int add(const std::vector<std::string>& tokens, const Lexicon& lexicon,
            char target, const AnsatzConfig& cfg, ParamStore& store) {
        const std::string text = join_tokens(tokens);
        if (auto it = index.find(text); it != index.end()) return it->second;
        Diagram d = parse(tokens, lexicon, target);
        Circuit c = compile(d, cfg, store);
        int id = int(circuits.size());
        texts.push_back(text);
        circuits.push_back(std::move(c));
        slots.push_back(circuit_slots(circuits.back()));
        index[text] = id;
        return id;
    }
};

struct CompiledPair {
    int prem = -1, hyp = -1;  // circuit ids
    int label = 1;
    double relatedness = 0.0;
    std::string id;
};

using CompiledSplit = std::vector<CompiledPair>;

struct TrainContext {
    SentenceBank bank;
    ParamStore store;
    CompiledSplit train, dev, test;
    int qubit_cap = 16;

    // sparse gradient indices over the training split
    std::vector<int> train_circuits;                  // sorted unique
    std::vector<std::vector<int>> slot_circuits;      // slot -> train circuits
    std::vector<std::vector<int>> slot_pairs;         // slot -> train pair ids
    std::vector<int> split_circuits(const CompiledSplit& s) const {
        std::set<int> ids;
        for (const auto& p : s) {
            ids.insert(p.prem);
            ids.insert(p.hyp);
        }
        return {ids.begin(), ids.end()};
    }

    void build_indices() {
        train_circuits = split_circuits(train);
        slot_circuits.assign(std::size_t(store.size()), {});
        slot_pairs.assign(std::size_t(store.size()), {});
        std::set<int> train_set(train_circuits.begin(), train_circuits.end());
        for (int c : train_circuits)
            for (int s : bank.slots[std::size_t(c)])
                slot_circuits[std::size_t(s)].push_back(c);
        for (std::size_t pi = 0; pi < train.size(); ++pi) {
            std::set<int> pair_slots;
            for (int c : {train[pi].prem, train[pi].hyp})
                for (int s : bank.slots[std::size_t(c)]) pair_slots.insert(s);
            for (int s : pair_slots) slot_pairs[std::size_t(s)].push_back(int(pi));
        }
    }
};

inline CompiledSplit compile_split(const ExampleSet& set, SentenceBank& bank,
                                   const Lexicon& lexicon, const AnsatzConfig& cfg,
                                   ParamStore& store) {
    CompiledSplit out;
    for (const auto& e : set.examples) {
        CompiledPair p;
        p.prem = bank.add(e.premise, lexicon, 's', cfg, store);
        p.hyp = bank.add(e.hypothesis, lexicon, 's', cfg, store);
        p.label = int(e.label);
        p.relatedness = e.relatedness;
        p.id = e.id;
        out.push_back(std::move(p));
    }
    return out;
}

/// Asserts that the number of distinct slots across all compiled circuits
/// matches the store's parameter count.
inline void audit_param_count(const TrainContext& ctx) {
    std::set<int> seen;
    for (const auto& slots : ctx.bank.slots)
        for (int s : slots) seen.insert(s);
    if (int(seen.size()) != ctx.store.size())
        throw error("parameter audit failed: " + std::to_string(seen.size()) +
                    " distinct slots vs store size " +
                    std::to_string(ctx.store.size()));
}

// ---------------------------------------------------------------------------
// Losses

inline double cross_entropy(const std::array<double, 3>& logits, int label) {
    double m = std::max({logits[0], logits[1], logits[2]});
    double lse = 0.0;
    for (double z : logits) lse += std::exp(z - m);
    lse = m + std::log(lse);
    return lse - logits[std::size_t(label)];
}

inline std::array<double, 3> softmax(const std::array<double, 3>& logits) {
    double m = std::max({logits[0], logits[1], logits[2]});
    std::array<double, 3> p{};
    double z = 0.0;
    for (int c = 0; c < 3; ++c) {
        p[std::size_t(c)] = std::exp(logits[std::size_t(c)] - m);
        z += p[std::size_t(c)];
    }
    for (double& v : p) v /= z;
    return p;
}

inline double example_loss(const Prediction& pred, double target_rel,
                           int target_label, Task task) {
    if (task == Task::relatedness) {
        double d = pred.score - target_rel;
        return d * d;
    }
    return cross_entropy(pred.logits, target_label);
}

/// Batch loss: mean squared error for relatedness, mean natural-log
/// cross-entropy for inference.
inline double mean_loss(const std::vector<Prediction>& preds,
                        const CompiledSplit& split, Task task) {
    if (preds.size() != split.size())
        throw malformed_input("prediction/batch size mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        sum += example_loss(preds[i], split[i].relatedness, split[i].label, task);
    return sum / double(preds.size());
}

// ---------------------------------------------------------------------------
// Model families. The trainer sees one interface: a flat trainable vector,
// a derived angle vector for the circuit slots, and hooks that route slot
// gradients and classical gradients back into the flat vector.

class Model {
  public:
    Model(Task task, const ParamStore& store) : task_(task), store_(&store) {}
    virtual ~Model() = default;

    Task task() const { return task_; }
    int slot_count() const { return store_->size(); }
    const ParamStore& store() const { return *store_; }

    virtual long long param_count() const = 0;
    virtual void init(std::uint64_t seed) = 0;
    virtual std::vector<double> flat() const = 0;
    virtual void set_flat(const std::vector<double>&) = 0;
    virtual std::vector<double> learning_rates(const TrainConfig&) const = 0;

    /// Angle per store slot for this epoch; eval mode is deterministic.
    virtual std::vector<double> slot_theta(std::uint64_t epoch,
                                           bool train_mode) const = 0;
    /// Route dL/d(theta_slot) into flat-parameter gradients.
    virtual void add_slot_grad(int slot, double g, std::uint64_t epoch,
                               std::vector<double>& grad) const = 0;
    virtual void jitter_slots(const std::vector<int>& slots, Rng& rng) = 0;

    virtual Prediction predict(const PostselectedOutput& prem,
                               const PostselectedOutput& hyp) const = 0;
    /// dpred: dL/dscore (1 entry) for relatedness, dL/dlogits (3) for
    /// inference. Accumulates into the classical block of grad.
    virtual void classical_grad(const PostselectedOutput& prem,
                                const PostselectedOutput& hyp,
                                const double* dpred,
                                std::vector<double>& grad) const = 0;

    virtual nlohmann::json params_json() const = 0;
    virtual void load_params_json(const nlohmann::json& j) = 0;

    /// Pick up slots allocated after the model was built (probe/eval time
    /// vocabulary extension). New angles are drawn from rng; the cluster
    /// model instead assigns new words to their nearest same-type cluster,
    /// which needs the embedding table.
    virtual void sync_with_store(Rng& rng, const Embeddings* embeddings) = 0;

  protected:
    Task task_;
    const ParamStore* store_;
};

namespace detail {

inline void fill_uniform(std::vector<double>& v, Rng& rng, double lo, double hi) {
    for (double& x : v) x = rng.uniform(lo, hi);
}

}  // namespace detail

class KlModel : public Model {
  public:
    KlModel(Task task, const ParamStore& store) : Model(task, store) {
        theta_.assign(std::size_t(store.size()), 0.0);
    }

    long long param_count() const override {
        return slot_count() + (task_ == Task::inference ? 9 : 1);
    }

    void init(std::uint64_t seed) override {
        Rng ra(derive_seed(seed, "theta"));
        detail::fill_uniform(theta_, ra, 0.0, 2.0 * std::numbers::pi);
        Rng rd(derive_seed(seed, "dense"));
        if (task_ == Task::inference) {
            for (double& w : readout_.W) w = rd.uniform(-0.5, 0.5);
            for (double& b : readout_.b) b = rd.uniform(-0.5, 0.5);
        } else {
            readout_.log_gamma = rd.uniform(-0.5, 0.5);
        }
    }

    std::vector<double> flat() const override {
        std::vector<double> f = theta_;
        if (task_ == Task::inference) {
            f.insert(f.end(), readout_.W.begin(), readout_.W.end());
            f.insert(f.end(), readout_.b.begin(), readout_.b.end());
        } else {
            f.push_back(readout_.log_gamma);
        }
        return f;
    }

    void set_flat(const std::vector<double>& f) override {
        if ((long long)f.size() != param_count())
            throw error("flat parameter size mismatch");
        std::copy(f.begin(), f.begin() + theta_.size(), theta_.begin());
        std::size_t o = theta_.size();
        if (task_ == Task::inference) {
            for (double& w : readout_.W) w = f[o++];
            for (double& b : readout_.b) b = f[o++];
        } else {
            readout_.log_gamma = f[o];
        }
    }

    std::vector<double> learning_rates(const TrainConfig& cfg) const override {
        std::vector<double> lr(std::size_t(param_count()), cfg.lr_dense);
        std::fill(lr.begin(), lr.begin() + theta_.size(), cfg.lr_angles);
        return lr;
    }

    std::vector<double> slot_theta(std::uint64_t, bool) const override {
        return theta_;
    }

    void add_slot_grad(int slot, double g, std::uint64_t,
                       std::vector<double>& grad) const override {
        grad[std::size_t(slot)] += g;
    }

    void jitter_slots(const std::vector<int>& slots, Rng& rng) override {
        for (int s : slots) theta_[std::size_t(s)] += rng.uniform(-0.01, 0.01);
    }

    Prediction predict(const PostselectedOutput& prem,
                       const PostselectedOutput& hyp) const override {
        return kl_predict(prem, hyp, readout_, task_);
    }

    void classical_grad(const PostselectedOutput& prem,
                        const PostselectedOutput& hyp, const double* dpred,
                        std::vector<double>& grad) const override {
        auto f = kl_features(prem, hyp);
        const std::size_t o = theta_.size();
        if (task_ == Task::inference) {
            for (int c = 0; c < 3; ++c) {
                grad[o + std::size_t(c) * 2] += dpred[c] * f[0];
                grad[o + std::size_t(c) * 2 + 1] += dpred[c] * f[1];
                grad[o + 6 + std::size_t(c)] += dpred[c];
            }
        } else {
            double g = readout_.gamma();
            double score = std::exp(-g * (f[0] + f[1]));
            grad[o] += dpred[0] * score * (-(f[0] + f[1])) * g;
        }
    }

    nlohmann::json params_json() const override {
        nlohmann::json j;
        j["theta"] = theta_;
        j["W"] = readout_.W;
        j["b"] = readout_.b;
        j["log_gamma"] = readout_.log_gamma;
        return j;
    }

    void load_params_json(const nlohmann::json& j) override {
        theta_ = j.at("theta").get<std::vector<double>>();
        if (int(theta_.size()) != slot_count())
            throw malformed_input("model file angle count does not match circuits");
        auto w = j.at("W").get<std::vector<double>>();
        std::copy(w.begin(), w.end(), readout_.W.begin());
        auto b = j.at("b").get<std::vector<double>>();
        std::copy(b.begin(), b.end(), readout_.b.begin());
        readout_.log_gamma = j.at("log_gamma").get<double>();
    }

    void sync_with_store(Rng& rng, const Embeddings*) override {
        while (int(theta_.size()) < slot_count())
            theta_.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
    }

    const KlReadout& readout() const { return readout_; }

  private:
    std::vector<double> theta_;
    KlReadout readout_;
};

class XorModel : public Model {
  public:
    XorModel(Task task, const ParamStore& store) : Model(task, store) {
        theta_.assign(std::size_t(store.size()), 0.0);
        head_.resize(task == Task::inference ? 3 : 1);
    }

    long long param_count() const override {
        return slot_count() + head_.param_count();
    }

    void init(std::uint64_t seed) override {
        Rng ra(derive_seed(seed, "theta"));
        detail::fill_uniform(theta_, ra, 0.0, 2.0 * std::numbers::pi);
        Rng rd(derive_seed(seed, "dense"));
        detail::fill_uniform(head_.w1, rd, -0.5, 0.5);
        detail::fill_uniform(head_.b1, rd, -0.5, 0.5);
        detail::fill_uniform(head_.w2, rd, -0.5, 0.5);
        detail::fill_uniform(head_.b2, rd, -0.5, 0.5);
    }

    std::vector<double> flat() const override {
        std::vector<double> f = theta_;
        f.insert(f.end(), head_.w1.begin(), head_.w1.end());
        f.insert(f.end(), head_.b1.begin(), head_.b1.end());
        f.insert(f.end(), head_.w2.begin(), head_.w2.end());
        f.insert(f.end(), head_.b2.begin(), head_.b2.end());
        return f;
    }

    void set_flat(const std::vector<double>& f) override {
        if ((long long)f.size() != param_count())
            throw error("flat parameter size mismatch");
        std::copy(f.begin(), f.begin() + theta_.size(), theta_.begin());
        std::size_t o = theta_.size();
        for (double& w : head_.w1) w = f[o++];
        for (double& b : head_.b1) b = f[o++];
        for (double& w : head_.w2) w = f[o++];
        for (double& b : head_.b2) b = f[o++];
    }

    std::vector<double> learning_rates(const TrainConfig& cfg) const override {
        std::vector<double> lr(std::size_t(param_count()), cfg.lr_dense);
        std::fill(lr.begin(), lr.begin() + theta_.size(), cfg.lr_angles);
        return lr;
    }

    std::vector<double> slot_theta(std::uint64_t, bool) const override {
        return theta_;
    }

    void add_slot_grad(int slot, double g, std::uint64_t,
                       std::vector<double>& grad) const override {
        grad[std::size_t(slot)] += g;
    }

    void jitter_slots(const std::vector<int>& slots, Rng& rng) override {
        for (int s : slots) theta_[std::size_t(s)] += rng.uniform(-0.01, 0.01);
    }

    Prediction predict(const PostselectedOutput& prem,
                       const PostselectedOutput& hyp) const override {
        return xor_forward(prem, hyp, head_, task_);
    }

    void classical_grad(const PostselectedOutput& prem,
                        const PostselectedOutput& hyp, const double* dpred,
                        std::vector<double>& grad) const override {
        auto x = xor_features(prem, hyp);
        std::vector<double> dz;
        if (task_ == Task::relatedness) {
            double z = head_.forward(x)[0];
            double s = sigmoid(z);
            dz = {dpred[0] * s * (1.0 - s)};
        } else {
            dz = {dpred[0], dpred[1], dpred[2]};
        }
        head_.backward(x, dz, grad.data() + theta_.size());
    }

    nlohmann::json params_json() const override {
        nlohmann::json j;
        j["theta"] = theta_;
        j["w1"] = head_.w1;
        j["b1"] = head_.b1;
        j["w2"] = head_.w2;
        j["b2"] = head_.b2;
        j["out"] = head_.out;
        return j;
    }

    void load_params_json(const nlohmann::json& j) override {
        theta_ = j.at("theta").get<std::vector<double>>();
        if (int(theta_.size()) != slot_count())
            throw malformed_input("model file angle count does not match circuits");
        head_.resize(j.at("out").get<int>());
        head_.w1 = j.at("w1").get<std::vector<double>>();
        head_.b1 = j.at("b1").get<std::vector<double>>();
        head_.w2 = j.at("w2").get<std::vector<double>>();
        head_.b2 = j.at("b2").get<std::vector<double>>();
    }

    void sync_with_store(Rng& rng, const Embeddings*) override {
        while (int(theta_.size()) < slot_count())
            theta_.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
    }

    const DenseHead& head() const { return head_; }

  private:
    std::vector<double> theta_;
    DenseHead head_;
};

class ClusterModel : public Model {
  public:
    // tag for reconstructing from a model file, where the assignment and
    // centroids come from load_params_json instead of a clustering run
    struct from_file_t {};

    ClusterModel(Task task, const ParamStore& store, from_file_t)
        : Model(task, store) {}

    ClusterModel(Task task, const ParamStore& store, const Embeddings& embeddings,
                 int k, std::uint64_t seed)
        : Model(task, store) {
        // decode slot names: token|type|pos
        std::map<std::string, PregroupType> types;
        slot_key_.resize(std::size_t(store.size()));
        slot_role_.resize(std::size_t(store.size()));
        std::map<std::string, int> roles;
        for (int s = 0; s < store.size(); ++s) {
            const std::string& name = store.names[std::size_t(s)];
            auto last = name.rfind('|');
            auto first = name.find('|');
            if (first == std::string::npos || last == first)
                throw error("malformed slot name: " + name);
            std::string key = name.substr(0, last);
            int pos = std::stoi(name.substr(last + 1));
            slot_key_[std::size_t(s)] = key;
            slot_role_[std::size_t(s)] = pos;
            types.emplace(key,
                          PregroupType::parse(name.substr(first + 1, last - first - 1)));
            roles[key] = std::max(roles[key], pos + 1);
        }
        params_.assignment = cluster_words(embeddings, types, k,
                                           derive_seed(seed, "cluster"));
        params_.eps_seed = derive_seed(seed, "eps");
        int n_clusters = 0;
        for (const auto& [_, c] : params_.assignment)
            n_clusters = std::max(n_clusters, c + 1);
        params_.mu.assign(std::size_t(n_clusters), {});
        params_.rho.assign(std::size_t(n_clusters), {});
        params_.cluster_type.assign(std::size_t(n_clusters), "");
        params_.centroid.assign(std::size_t(n_clusters), {});
        std::vector<int> member_count(std::size_t(n_clusters), 0);
        for (const auto& [key, c] : params_.assignment) {
            int r = roles.count(key) ? roles[key] : 0;
            auto& mu = params_.mu[std::size_t(c)];
            if (int(mu.size()) < r) {
                mu.resize(std::size_t(r), 0.0);
                params_.rho[std::size_t(c)].resize(std::size_t(r), 0.0);
            }
            params_.cluster_type[std::size_t(c)] = types.at(key).str();
            const auto& emb = embeddings.at(base_token(key));
            auto& cen = params_.centroid[std::size_t(c)];
            if (cen.empty()) cen.assign(emb.size(), 0.0);
            for (std::size_t d = 0; d < emb.size(); ++d) cen[d] += emb[d];
            ++member_count[std::size_t(c)];
        }
        for (std::size_t c = 0; c < params_.centroid.size(); ++c)
            for (double& v : params_.centroid[c]) v /= member_count[c];
        rebuild_slot_maps();
    }

    long long param_count() const override {
        return 2ll * angle_params_ + 12 + (task_ == Task::inference ? 9 : 1);
    }

    void init(std::uint64_t seed) override {
        // warm-up draw per slot, then per-cluster means
        Rng ra(derive_seed(seed, "theta"));
        std::vector<double> warm(std::size_t(slot_count()), 0.0);
        detail::fill_uniform(warm, ra, 0.0, 2.0 * std::numbers::pi);
        std::vector<std::vector<int>> counts(params_.mu.size());
        for (auto& mu : params_.mu) std::fill(mu.begin(), mu.end(), 0.0);
        for (std::size_t c = 0; c < params_.mu.size(); ++c)
            counts[c].assign(params_.mu[c].size(), 0);
        for (int s = 0; s < slot_count(); ++s) {
            int c = slot_cluster_[std::size_t(s)];
            int r = slot_role_[std::size_t(s)];
            params_.mu[std::size_t(c)][std::size_t(r)] += warm[std::size_t(s)];
            ++counts[std::size_t(c)][std::size_t(r)];
        }
        for (std::size_t c = 0; c < params_.mu.size(); ++c)
            for (std::size_t r = 0; r < params_.mu[c].size(); ++r)
                if (counts[c][r] > 0) params_.mu[c][r] /= counts[c][r];
        const double rho0 = softplus_inv(0.1);
        for (auto& rho : params_.rho) std::fill(rho.begin(), rho.end(), rho0);
        Rng rd(derive_seed(seed, "dense"));
        for (double& v : order_.V) v = rd.uniform(-0.5, 0.5);
        for (double& v : order_.c) v = rd.uniform(-0.5, 0.5);
        if (task_ == Task::inference) {
            for (double& w : readout_.W) w = rd.uniform(-0.5, 0.5);
            for (double& b : readout_.b) b = rd.uniform(-0.5, 0.5);
        } else {
            readout_.log_gamma = rd.uniform(-0.5, 0.5);
        }
    }

    std::vector<double> flat() const override {
        std::vector<double> f;
        f.reserve(std::size_t(param_count()));
        for (const auto& mu : params_.mu) f.insert(f.end(), mu.begin(), mu.end());
        for (const auto& rho : params_.rho) f.insert(f.end(), rho.begin(), rho.end());
        f.insert(f.end(), order_.V.begin(), order_.V.end());
        f.insert(f.end(), order_.c.begin(), order_.c.end());
        if (task_ == Task::inference) {
            f.insert(f.end(), readout_.W.begin(), readout_.W.end());
            f.insert(f.end(), readout_.b.begin(), readout_.b.end());
        } else {
            f.push_back(readout_.log_gamma);
        }
        return f;
    }

    void set_flat(const std::vector<double>& f) override {
        if ((long long)f.size() != param_count())
            throw error("flat parameter size mismatch");
        std::size_t o = 0;
        for (auto& mu : params_.mu)
            for (double& v : mu) v = f[o++];
        for (auto& rho : params_.rho)
            for (double& v : rho) v = f[o++];
        for (double& v : order_.V) v = f[o++];
        for (double& v : order_.c) v = f[o++];
        if (task_ == Task::inference) {
            for (double& w : readout_.W) w = f[o++];
            for (double& b : readout_.b) b = f[o++];
        } else {
            readout_.log_gamma = f[o];
        }
    }

    std::vector<double> learning_rates(const TrainConfig& cfg) const override {
        std::vector<double> lr(std::size_t(param_count()), cfg.lr_dense);
        std::fill(lr.begin(), lr.begin() + 2 * angle_params_, cfg.lr_angles);
        return lr;
    }

    std::vector<double> slot_theta(std::uint64_t epoch, bool train_mode) const override {
        std::vector<double> theta(std::size_t(slot_count()), 0.0);
        for (int s = 0; s < slot_count(); ++s)
            theta[std::size_t(s)] = cluster_sample(params_, slot_key_[std::size_t(s)],
                                                   slot_role_[std::size_t(s)], epoch,
                                                   train_mode);
        return theta;
    }

    void add_slot_grad(int slot, double g, std::uint64_t epoch,
                       std::vector<double>& grad) const override {
        const int c = slot_cluster_[std::size_t(slot)];
        const int r = slot_role_[std::size_t(slot)];
        const int mu_idx = mu_offset_[std::size_t(c)] + r;
        const double rho_raw = params_.rho[std::size_t(c)][std::size_t(r)];
        const double eps = keyed_normal(params_.eps_seed, epoch,
                                        hash_str(slot_key_[std::size_t(slot)]),
                                        std::uint64_t(r));
        grad[std::size_t(mu_idx)] += g;
        grad[std::size_t(angle_params_ + mu_idx)] += g * eps * softplus_prime(rho_raw);
    }

    void jitter_slots(const std::vector<int>& slots, Rng& rng) override {
        std::set<std::pair<int, int>> touched;
        for (int s : slots)
            touched.insert({slot_cluster_[std::size_t(s)], slot_role_[std::size_t(s)]});
        for (auto [c, r] : touched)
            params_.mu[std::size_t(c)][std::size_t(r)] += rng.uniform(-0.01, 0.01);
    }

    Prediction predict(const PostselectedOutput& prem,
                       const PostselectedOutput& hyp) const override {
        return order_predict(prem, hyp, order_, readout_, task_);
    }

    void classical_grad(const PostselectedOutput& prem,
                        const PostselectedOutput& hyp, const double* dpred,
                        std::vector<double>& grad) const override {
        auto vp = sentence_point(prem);
        auto vh = sentence_point(hyp);
        std::array<double, 4> ap{}, ah{}, ep{}, eh{};
        for (int i = 0; i < 4; ++i) {
            ap[std::size_t(i)] = order_.V[std::size_t(i) * 2] * vp[0] +
                                 order_.V[std::size_t(i) * 2 + 1] * vp[1] + order_.c[std::size_t(i)];
            ah[std::size_t(i)] = order_.V[std::size_t(i) * 2] * vh[0] +
                                 order_.V[std::size_t(i) * 2 + 1] * vh[1] + order_.c[std::size_t(i)];
            ep[std::size_t(i)] = softplus(ap[std::size_t(i)]);
            eh[std::size_t(i)] = softplus(ah[std::size_t(i)]);
        }
        double e_ph = order_energy(ep, eh);
        double e_hp = order_energy(eh, ep);

        const std::size_t o = std::size_t(2 * angle_params_);
        double d_eph = 0.0, d_ehp = 0.0;
        if (task_ == Task::inference) {
            const std::size_t ro = o + 12;
            for (int c = 0; c < 3; ++c) {
                grad[ro + std::size_t(c) * 2] += dpred[c] * e_ph;
                grad[ro + std::size_t(c) * 2 + 1] += dpred[c] * e_hp;
                grad[ro + 6 + std::size_t(c)] += dpred[c];
                d_eph += dpred[c] * readout_.W[std::size_t(c) * 2];
                d_ehp += dpred[c] * readout_.W[std::size_t(c) * 2 + 1];
            }
        } else {
            double g = readout_.gamma();
            double score = std::exp(-g * (e_ph + e_hp));
            grad[o + 12] += dpred[0] * score * (-(e_ph + e_hp)) * g;
            d_eph = d_ehp = dpred[0] * score * (-g);
        }
        for (int i = 0; i < 4; ++i) {
            double diff_ph = eh[std::size_t(i)] - ep[std::size_t(i)];  // hyp above prem
            double diff_hp = -diff_ph;
            double d_eh = 0.0, d_ep = 0.0;
            if (diff_ph > 0.0) {
                d_eh += d_eph * 2.0 * diff_ph;
                d_ep -= d_eph * 2.0 * diff_ph;
            }
            if (diff_hp > 0.0) {
                d_ep += d_ehp * 2.0 * diff_hp;
                d_eh -= d_ehp * 2.0 * diff_hp;
            }
            double da_p = d_ep * softplus_prime(ap[std::size_t(i)]);
            double da_h = d_eh * softplus_prime(ah[std::size_t(i)]);
            grad[o + std::size_t(i) * 2] += da_p * vp[0] + da_h * vh[0];
            grad[o + std::size_t(i) * 2 + 1] += da_p * vp[1] + da_h * vh[1];
            grad[o + 8 + std::size_t(i)] += da_p + da_h;
        }
    }

    nlohmann::json params_json() const override {
        nlohmann::json j;
        j["assignment"] = params_.assignment;
        j["mu"] = params_.mu;
        j["rho"] = params_.rho;
        j["cluster_type"] = params_.cluster_type;
        j["centroid"] = params_.centroid;
        j["eps_seed"] = params_.eps_seed;
        j["V"] = order_.V;
        j["c"] = order_.c;
        j["W"] = readout_.W;
        j["b"] = readout_.b;
        j["log_gamma"] = readout_.log_gamma;
        return j;
    }

    void load_params_json(const nlohmann::json& j) override {
        params_.assignment = j.at("assignment").get<std::map<std::string, int>>();
        params_.mu = j.at("mu").get<std::vector<std::vector<double>>>();
        params_.rho = j.at("rho").get<std::vector<std::vector<double>>>();
        params_.cluster_type = j.at("cluster_type").get<std::vector<std::string>>();
        params_.centroid = j.at("centroid").get<std::vector<std::vector<double>>>();
        params_.eps_seed = j.at("eps_seed").get<std::uint64_t>();
        auto v = j.at("V").get<std::vector<double>>();
        std::copy(v.begin(), v.end(), order_.V.begin());
        auto c = j.at("c").get<std::vector<double>>();
        std::copy(c.begin(), c.end(), order_.c.begin());
        auto w = j.at("W").get<std::vector<double>>();
        std::copy(w.begin(), w.end(), readout_.W.begin());
        auto b = j.at("b").get<std::vector<double>>();
        std::copy(b.begin(), b.end(), readout_.b.begin());
        readout_.log_gamma = j.at("log_gamma").get<double>();
        rebuild_slot_maps();
    }

    const ClusterParams& cluster_params() const { return params_; }

    /// Extend the assignment to keys unseen at training time: nearest
    /// cluster of the same type by embedding distance to the stored
    /// centroids.
    void assign_new_key(const std::string& key, const PregroupType& type,
                        const Embeddings& embeddings) {
        if (params_.assignment.count(key)) return;
        auto it = embeddings.find(base_token(key));
        if (it == embeddings.end())
            throw malformed_input("no embedding for word '" + base_token(key) + "'");
        int best = -1;
        double bd = 0.0;
        for (std::size_t c = 0; c < params_.centroid.size(); ++c) {
            if (params_.cluster_type[c] != type.str()) continue;
            if (params_.centroid[c].size() != it->second.size()) continue;
            double d = 0.0;
            for (std::size_t k = 0; k < it->second.size(); ++k) {
                double t = it->second[k] - params_.centroid[c][k];
                d += t * t;
            }
            if (best < 0 || d < bd) {
                bd = d;
                best = int(c);
            }
        }
        if (best < 0)
            throw malformed_input("no cluster of type '" + type.str() +
                                  "' for new word '" + key + "'");
        params_.assignment[key] = best;
        rebuild_slot_maps();
    }

    void sync_with_store(Rng&, const Embeddings* embeddings) override {
        for (int s = int(slot_key_.size()); s < store_->size(); ++s) {
            const std::string& name = store_->names[std::size_t(s)];
            auto first = name.find('|');
            auto last = name.rfind('|');
            std::string key = name.substr(0, last);
            if (!params_.assignment.count(key)) {
                if (!embeddings)
                    throw malformed_input(
                        "cluster model needs the embedding table to place new "
                        "word '" + key + "'");
                assign_new_key(
                    key, PregroupType::parse(name.substr(first + 1, last - first - 1)),
                    *embeddings);
            }
        }
        rebuild_slot_maps();
    }

  private:
    void rebuild_slot_maps() {
        slot_key_.resize(std::size_t(store_->size()));
        slot_role_.resize(std::size_t(store_->size()));
        slot_cluster_.resize(std::size_t(store_->size()));
        for (int s = 0; s < store_->size(); ++s) {
            const std::string& name = store_->names[std::size_t(s)];
            auto last = name.rfind('|');
            slot_key_[std::size_t(s)] = name.substr(0, last);
            slot_role_[std::size_t(s)] = std::stoi(name.substr(last + 1));
            auto it = params_.assignment.find(slot_key_[std::size_t(s)]);
            if (it == params_.assignment.end())
                throw malformed_input("word has no cluster: " + slot_key_[std::size_t(s)]);
            slot_cluster_[std::size_t(s)] = it->second;
        }
        mu_offset_.assign(params_.mu.size(), 0);
        int off = 0;
        for (std::size_t c = 0; c < params_.mu.size(); ++c) {
            mu_offset_[c] = off;
            off += int(params_.mu[c].size());
        }
        angle_params_ = off;
    }

    ClusterParams params_;
    OrderEmbedding order_;
    OrderReadout readout_;
    std::vector<std::string> slot_key_;
    std::vector<int> slot_role_;
    std::vector<int> slot_cluster_;
    std::vector<int> mu_offset_;
    int angle_params_ = 0;
};

// ---------------------------------------------------------------------------
// Trainer

namespace detail {

inline double l2_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace detail

struct Adam {
    std::vector<double> m, v;
    long long t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    explicit Adam(std::size_t n, double b1 = 0.9, double b2 = 0.999,
                  double e = 1e-8)
        : m(n, 0.0), v(n, 0.0), beta1(b1), beta2(b2), eps(e) {}

    void step(std::vector<double>& params, const std::vector<double>& grad,
              const std::vector<double>& lr) {
        ++t;
        const double c1 = 1.0 - std::pow(beta1, double(t));
        const double c2 = 1.0 - std::pow(beta2, double(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] -= lr[i] * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
};

namespace detail {

struct BankOutputs {
    // outputs indexed by circuit id; only the ids listed in `present` are
    // valid for the current theta
    std::vector<PostselectedOutput> outs;
    std::vector<int> present;
};

inline BankOutputs simulate_circuits(const TrainContext& ctx,
                                     const std::vector<double>& theta,
                                     const std::vector<int>& ids, int threads) {
    BankOutputs b;
    b.outs.resize(ctx.bank.circuits.size());
    b.present = ids;
    parallel_for(ids.size(), threads, [&](std::size_t k) {
        int c = ids[k];
        b.outs[std::size_t(c)] =
            simulate(qnli::bind(ctx.bank.circuits[std::size_t(c)], theta), ctx.qubit_cap);
    });
    return b;
}

inline std::vector<int> degenerate_circuits(const BankOutputs& b) {
    std::vector<int> bad;
    for (int c : b.present)
        if (b.outs[std::size_t(c)].p_post < kMinPostselection) bad.push_back(c);
    return bad;
}

/// Simulate with the zero-postselection retry policy: on a degenerate
/// circuit, jitter the parameters feeding it and retry once.
inline BankOutputs simulate_with_retry(Model& model, const TrainContext& ctx,
                                       std::uint64_t epoch, bool train_mode,
                                       const std::vector<int>& ids, Rng& jitter_rng,
                                       int threads) {
    auto theta = model.slot_theta(epoch, train_mode);
    BankOutputs b = simulate_circuits(ctx, theta, ids, threads);
    auto bad = degenerate_circuits(b);
    if (bad.empty()) return b;
    std::set<int> slots;
    for (int c : bad)
        for (int s : ctx.bank.slots[std::size_t(c)]) slots.insert(s);
    model.jitter_slots({slots.begin(), slots.end()}, jitter_rng);
    theta = model.slot_theta(epoch, train_mode);
    b = simulate_circuits(ctx, theta, ids, threads);
    bad = degenerate_circuits(b);
    if (!bad.empty())
        throw numeric_failure("postselection norm is zero after retry (circuit " +
                              ctx.bank.texts[std::size_t(bad.front())] + ")");
    return b;
}

}  // namespace detail

struct EvalResult {
    double loss = 0.0;
    std::vector<Prediction> predictions;
    JointCounts joint{3};
    double info = 0.0;
};

inline EvalResult evaluate_split(Model& model, const TrainContext& ctx,
                                 const CompiledSplit& split, Rng& jitter_rng,
                                 const TrainConfig& cfg) {
    auto ids = ctx.split_circuits(split);
    auto b = detail::simulate_with_retry(model, ctx, 0, false, ids, jitter_rng,
                                         cfg.threads);
    EvalResult r;
    r.predictions.reserve(split.size());
    for (const auto& p : split)
        r.predictions.push_back(
            model.predict(b.outs[std::size_t(p.prem)], b.outs[std::size_t(p.hyp)]));
    r.loss = mean_loss(r.predictions, split, model.task());
    if (model.task() == Task::inference) {
        std::vector<int> truth, pred;
        for (std::size_t i = 0; i < split.size(); ++i) {
            truth.push_back(split[i].label);
            pred.push_back(argmax_label(r.predictions[i].logits));
        }
        r.joint = joint_from_labels(truth, pred, 3);
    } else {
        std::vector<double> truth, pred;
        for (std::size_t i = 0; i < split.size(); ++i) {
            truth.push_back(split[i].relatedness);
            pred.push_back(r.predictions[i].score);
        }
        r.joint = joint_from_scores(truth, pred, cfg.regression_bins);
    }
    r.info = mutual_information(r.joint);
    return r;
}

/// Full-batch gradient at the current parameters: central finite
/// differences through the quantum slots (only circuits touching the probed
/// slot are re-simulated), analytic gradients through the classical parts,
/// chain rule through the cluster reparameterization.
inline std::vector<double> full_gradient(Model& model, const TrainContext& ctx,
                                         const TrainConfig& cfg,
                                         std::uint64_t epoch, Rng& jitter_rng,
                                         double* train_loss_out = nullptr) {
    const Task task = model.task();
    const double h = cfg.fd_step;
    auto base = detail::simulate_with_retry(model, ctx, epoch, true,
                                            ctx.train_circuits, jitter_rng,
                                            cfg.threads);
    const auto theta = model.slot_theta(epoch, true);
    const std::size_t n = ctx.train.size();

    std::vector<double> base_terms(n);
    std::vector<Prediction> base_preds(n);
    double base_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = ctx.train[i];
        base_preds[i] = model.predict(base.outs[std::size_t(p.prem)],
                                      base.outs[std::size_t(p.hyp)]);
        base_terms[i] =
            example_loss(base_preds[i], p.relatedness, p.label, task);
        base_sum += base_terms[i];
    }
    const double base_loss = base_sum / double(n);
    if (!std::isfinite(base_loss))
        throw numeric_failure("non-finite training loss");
    if (train_loss_out) *train_loss_out = base_loss;

    std::vector<double> grad(std::size_t(model.param_count()), 0.0);

    // classical block, analytic
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = ctx.train[i];
        if (task == Task::relatedness) {
            double d = 2.0 * (base_preds[i].score - p.relatedness) / double(n);
            model.classical_grad(base.outs[std::size_t(p.prem)],
                                 base.outs[std::size_t(p.hyp)], &d, grad);
        } else {
            auto sm = softmax(base_preds[i].logits);
            double d[3];
            for (int c = 0; c < 3; ++c)
                d[c] = (sm[std::size_t(c)] - (c == p.label ? 1.0 : 0.0)) / double(n);
            model.classical_grad(base.outs[std::size_t(p.prem)],
                                 base.outs[std::size_t(p.hyp)], d, grad);
        }
    }

    // quantum block: per-slot central differences with sparse re-simulation
    std::vector<double> slot_grad(std::size_t(model.slot_count()), 0.0);
    detail::parallel_for(std::size_t(model.slot_count()), cfg.threads, [&](std::size_t s) {
        const auto& circuits = ctx.slot_circuits[s];
        const auto& pairs = ctx.slot_pairs[s];
        if (pairs.empty()) return;

        auto probe = [&](double delta) {
            std::vector<double> th = theta;
            th[s] += delta;
            std::map<int, PostselectedOutput> local;
            for (int c : circuits)
                local[c] = simulate(qnli::bind(ctx.bank.circuits[std::size_t(c)], th),
                                    ctx.qubit_cap);
            double sum_delta = 0.0;
            for (int pi : pairs) {
                const auto& p = ctx.train[std::size_t(pi)];
                auto fp = local.find(p.prem);
                auto fh = local.find(p.hyp);
                const auto& op = fp != local.end() ? fp->second
                                                   : base.outs[std::size_t(p.prem)];
                const auto& oh = fh != local.end() ? fh->second
                                                   : base.outs[std::size_t(p.hyp)];
                double term = example_loss(model.predict(op, oh), p.relatedness,
                                           p.label, task);
                sum_delta += term - base_terms[std::size_t(pi)];
            }
            double loss = base_loss + sum_delta / double(n);
            if (!std::isfinite(loss))
                throw numeric_failure("non-finite loss at gradient probe");
            return loss;
        };

        std::optional<double> up, down;
        try {
            up = probe(h);
        } catch (const numeric_failure&) {}
        try {
            down = probe(-h);
        } catch (const numeric_failure&) {}
        if (up && down)
            slot_grad[s] = (*up - *down) / (2.0 * h);
        else if (up)
            slot_grad[s] = (*up - base_loss) / h;
        else if (down)
            slot_grad[s] = (base_loss - *down) / h;
        else
            throw numeric_failure("degenerate postselection on both gradient probes");
    });
    for (int s = 0; s < model.slot_count(); ++s)
        model.add_slot_grad(s, slot_grad[std::size_t(s)], epoch, grad);
    return grad;
}

/// Train with full-batch Adam. The run log gets one record per epoch plus
/// an epoch-0 record at initialization; on return the model holds the
/// best-validation-epoch parameters.
inline RunLog train_model(Model& model, const TrainContext& ctx,
                          const TrainConfig& cfg) {
    model.init(cfg.seed);
    Rng jitter_rng(derive_seed(cfg.seed, "jitter"));
    const long long P = model.param_count();
    if (P <= 0) throw error("model has no trainable parameters");

    RunLog log;
    log.n_params = P;

    auto record_eval = [&](int epoch, std::optional<double> gnorm) {
        EvalResult tr = evaluate_split(model, ctx, ctx.train, jitter_rng, cfg);
        EvalResult dv = evaluate_split(model, ctx, ctx.dev, jitter_rng, cfg);
        EpochRecord r;
        r.epoch = epoch;
        r.train_loss = tr.loss;
        r.val_loss = dv.loss;
        r.info = tr.info;
        r.info_dev = dv.info;
        r.grad_norm = gnorm;
        if (epoch > 0) {
            r.di = r.info - log.records.back().info;
            r.igpp_v = igpp(r.di, P);
            r.iggp_v = gnorm ? iggp(r.di, P, *gnorm) : std::nullopt;
        }
        if (!std::isfinite(r.train_loss) || !std::isfinite(r.val_loss))
            throw numeric_failure("non-finite loss at epoch " +
                                  std::to_string(epoch));
        log.records.push_back(std::move(r));
    };

    record_eval(0, std::nullopt);
    std::vector<double> best_flat = model.flat();
    double best_val = log.records.back().val_loss;
    log.best_epoch = 0;

    Adam adam(std::size_t(P), cfg.beta1, cfg.beta2, cfg.adam_eps);
    const auto lrs = model.learning_rates(cfg);
    for (int t = 1; t <= cfg.epochs; ++t) {
        auto grad = full_gradient(model, ctx, cfg, std::uint64_t(t), jitter_rng);
        const double gnorm = detail::l2_norm(grad);
        auto flat = model.flat();
        adam.step(flat, grad, lrs);
        model.set_flat(flat);
        record_eval(t, gnorm);
        if (log.records.back().val_loss < best_val) {
            best_val = log.records.back().val_loss;
            best_flat = model.flat();
            log.best_epoch = t;
        }
    }
    model.set_flat(best_flat);
    return log;
}

}  // namespace qnli

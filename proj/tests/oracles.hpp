// Test-only oracles, kept independent of the implementation paths they
// check: an interval-DP planar reduction decider for the parser, an
// explicit-matrix simulator, and an innermost-first cancellation replay for
// diagrams.
#pragma once

#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "qnli/circuit.hpp"
#include "qnli/pregroup.hpp"
#include "qnli/rng.hpp"
#include "qnli/simulator.hpp"

namespace oracle {

using qnli::Atom;
using qnli::cplx;

// ---------------------------------------------------------------------------
// pregroup

/// Planar reduction decision by interval DP: fully(l, r) = the atoms in
/// [l, r) can be completely paired off by nested cups.
class PlanarReduction {
  public:
    explicit PlanarReduction(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {}

    bool reduces_to(const std::vector<Atom>& target) {
        target_ = &target;
        match_memo_.clear();
        return match(0, 0);
    }

    /// Number of distinct planar cup structures reducing to target.
    long long count_reductions(const std::vector<Atom>& target) {
        target_ = &target;
        long long total = count_match(0, 0);
        return total;
    }

  private:
    bool cancels(const Atom& a, const Atom& b) const {
        return a.base == b.base && b.z == a.z + 1;
    }

    bool fully(std::size_t l, std::size_t r) {
        if (l >= r) return true;
        if ((r - l) % 2) return false;
        auto key = std::make_pair(l, r);
        if (auto it = fully_memo_.find(key); it != fully_memo_.end())
            return it->second;
        bool ok = false;
        for (std::size_t j = l + 1; j < r && !ok; j += 2)
            ok = cancels(atoms_[l], atoms_[j]) && fully(l + 1, j) && fully(j + 1, r);
        fully_memo_[key] = ok;
        return ok;
    }

    bool match(std::size_t i, std::size_t tp) {
        if (i == atoms_.size()) return tp == target_->size();
        auto key = std::make_pair(i, tp);
        if (auto it = match_memo_.find(key); it != match_memo_.end())
            return it->second;
        bool ok = false;
        if (tp < target_->size() && atoms_[i] == (*target_)[tp])
            ok = match(i + 1, tp + 1);
        for (std::size_t j = i + 1; j < atoms_.size() && !ok; ++j)
            if (cancels(atoms_[i], atoms_[j]) && fully(i + 1, j)) ok = match(j + 1, tp);
        match_memo_[key] = ok;
        return ok;
    }

    long long count_fully(std::size_t l, std::size_t r) {
        if (l >= r) return 1;
        if ((r - l) % 2) return 0;
        auto key = std::make_pair(l, r);
        if (auto it = count_fully_memo_.find(key); it != count_fully_memo_.end())
            return it->second;
        long long total = 0;
        for (std::size_t j = l + 1; j < r; j += 2)
            if (cancels(atoms_[l], atoms_[j]))
                total += count_fully(l + 1, j) * count_fully(j + 1, r);
        count_fully_memo_[key] = total;
        return total;
    }

    long long count_match(std::size_t i, std::size_t tp) {
        if (i == atoms_.size()) return tp == target_->size() ? 1 : 0;
        long long total = 0;
        if (tp < target_->size() && atoms_[i] == (*target_)[tp])
            total += count_match(i + 1, tp + 1);
        for (std::size_t j = i + 1; j < atoms_.size(); ++j)
            if (cancels(atoms_[i], atoms_[j]))
                total += count_fully(i + 1, j) * count_match(j + 1, tp);
        return total;
    }

    std::vector<Atom> atoms_;
    const std::vector<Atom>* target_ = nullptr;
    std::map<std::pair<std::size_t, std::size_t>, bool> fully_memo_;
    std::map<std::pair<std::size_t, std::size_t>, bool> match_memo_;
    std::map<std::pair<std::size_t, std::size_t>, long long> count_fully_memo_;
};

inline std::vector<Atom> flatten(const std::vector<std::string>& tokens,
                                 const qnli::Lexicon& lex,
                                 const std::vector<std::size_t>& pick) {
    std::vector<Atom> atoms;
    for (std::size_t w = 0; w < tokens.size(); ++w)
        for (const Atom& a : (*lex.find(tokens[w]))[pick[w]].atoms)
            atoms.push_back(a);
    return atoms;
}

/// Any type assignment admits a planar reduction to the target base.
inline bool any_assignment_reduces(const std::vector<std::string>& tokens,
                                   const qnli::Lexicon& lex, char target_base) {
    for (const auto& t : tokens)
        if (!lex.find(t)) return false;
    const std::vector<Atom> target{{target_base, 0}};
    std::vector<std::size_t> pick(tokens.size(), 0);
    for (;;) {
        PlanarReduction pr(flatten(tokens, lex, pick));
        if (pr.reduces_to(target)) return true;
        std::size_t w = tokens.size();
        for (;;) {
            if (w == 0) return false;
            --w;
            if (++pick[w] < lex.find(tokens[w])->size()) break;
            pick[w] = 0;
            if (w == 0) return false;
        }
    }
}

/// Replays the cancellation rule along a diagram's cups, innermost first,
/// and checks the leftover equals the target atom sequence.
inline bool check_diagram_reduction(const qnli::Diagram& d, char target_base) {
    const int n = d.n_wires();
    std::vector<bool> removed(std::size_t(n), false);
    auto cups = d.cups;
    std::sort(cups.begin(), cups.end(), [](auto a, auto b) {
        return (a.second - a.first) < (b.second - b.first);
    });
    for (auto [i, j] : cups) {
        for (int w = i + 1; w < j; ++w)
            if (!removed[std::size_t(w)]) return false;  // not adjacent yet
        Atom left = d.wire_atom(i), right = d.wire_atom(j);
        if (!(left.base == right.base && right.z == left.z + 1)) return false;
        if (removed[std::size_t(i)] || removed[std::size_t(j)]) return false;
        removed[std::size_t(i)] = removed[std::size_t(j)] = true;
    }
    std::vector<Atom> leftover;
    for (int w = 0; w < n; ++w)
        if (!removed[std::size_t(w)]) leftover.push_back(d.wire_atom(w));
    return leftover == std::vector<Atom>{{target_base, 0}};
}

// ---------------------------------------------------------------------------
// simulator: explicit 2^q x 2^q matrices

using Matrix = std::vector<std::vector<cplx>>;

inline Matrix gate_matrix(const qnli::Gate& g, int n) {
    const std::size_t dim = std::size_t(1) << n;
    Matrix m(dim, std::vector<cplx>(dim, 0.0));
    auto bit = [](std::size_t x, int q) { return (x >> q) & 1u; };

    cplx u2[2][2];
    cplx u4[4][4] = {};
    bool two = g.two_qubit();
    const double half = g.angle / 2.0;
    switch (g.kind) {
        case qnli::GateKind::H: {
            const double r = 1.0 / std::sqrt(2.0);
            u2[0][0] = r; u2[0][1] = r; u2[1][0] = r; u2[1][1] = -r;
            break;
        }
        case qnli::GateKind::RX:
            u2[0][0] = std::cos(half); u2[0][1] = cplx(0, -std::sin(half));
            u2[1][0] = cplx(0, -std::sin(half)); u2[1][1] = std::cos(half);
            break;
        case qnli::GateKind::RZ:
            u2[0][0] = std::exp(cplx(0, -half)); u2[0][1] = 0;
            u2[1][0] = 0; u2[1][1] = std::exp(cplx(0, half));
            break;
        case qnli::GateKind::CRZ:
            u4[0][0] = 1; u4[1][1] = 1;
            u4[2][2] = std::exp(cplx(0, -half));
            u4[3][3] = std::exp(cplx(0, half));
            break;
        case qnli::GateKind::CNOT:
            u4[0][0] = 1; u4[1][1] = 1; u4[2][3] = 1; u4[3][2] = 1;
            break;
    }
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            if (!two) {
                std::size_t rest_i = i & ~(std::size_t(1) << g.q0);
                std::size_t rest_j = j & ~(std::size_t(1) << g.q0);
                if (rest_i != rest_j) continue;
                m[i][j] = u2[bit(i, g.q0)][bit(j, g.q0)];
            } else {
                std::size_t mask = (std::size_t(1) << g.q0) | (std::size_t(1) << g.q1);
                if ((i & ~mask) != (j & ~mask)) continue;
                unsigned si = bit(i, g.q0) * 2 + bit(i, g.q1);
                unsigned sj = bit(j, g.q0) * 2 + bit(j, g.q1);
                m[i][j] = u4[si][sj];
            }
        }
    }
    return m;
}

inline qnli::PostselectedOutput matrix_simulate(const qnli::Circuit& c) {
    const std::size_t dim = std::size_t(1) << c.n_qubits;
    std::vector<cplx> state(dim, 0.0);
    state[0] = 1.0;
    for (const auto& g : c.gates) {
        Matrix m = gate_matrix(g, c.n_qubits);
        std::vector<cplx> next(dim, 0.0);
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = 0; j < dim; ++j) next[i] += m[i][j] * state[j];
        state = std::move(next);
    }
    qnli::PostselectedOutput out;
    out.amps.resize(std::size_t(1) << c.outputs.size());
    for (std::size_t j = 0; j < out.amps.size(); ++j) {
        std::size_t full = 0;
        for (std::size_t k = 0; k < c.outputs.size(); ++k)
            if (j & (std::size_t(1) << k)) full |= std::size_t(1) << c.outputs[k];
        out.amps[j] = state[full];
        out.p_post += std::norm(state[full]);
    }
    return out;
}

/// Random bound circuit over q qubits: rotations, Hadamards, CRZ, CNOT.
inline qnli::Circuit random_circuit(qnli::Rng& rng, int q, int max_gates) {
    qnli::Circuit c;
    c.n_qubits = q;
    const int n_gates = 1 + int(rng.below(std::uint64_t(max_gates)));
    for (int i = 0; i < n_gates; ++i) {
        qnli::Gate g;
        switch (rng.below(5)) {
            case 0: g.kind = qnli::GateKind::H; break;
            case 1: g.kind = qnli::GateKind::RX; break;
            case 2: g.kind = qnli::GateKind::RZ; break;
            case 3: g.kind = qnli::GateKind::CRZ; break;
            default: g.kind = qnli::GateKind::CNOT; break;
        }
        g.q0 = int(rng.below(std::uint64_t(q)));
        if (g.two_qubit()) {
            if (q < 2) { g.kind = qnli::GateKind::H; }
            else {
                do { g.q1 = int(rng.below(std::uint64_t(q))); } while (g.q1 == g.q0);
            }
        }
        if (g.parametric()) g.angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        c.gates.push_back(g);
    }
    // random output/postselect partition
    for (int k = 0; k < q; ++k) {
        if (rng.uniform() < 0.5) c.postselect.push_back(k);
        else c.outputs.push_back(k);
    }
    return c;
}

// ---------------------------------------------------------------------------
// misc helpers

class TempDir {
  public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("qnli_test_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string str() const { return path_.string(); }
    std::string file(const std::string& name) const {
        return (path_ / name).string();
    }

  private:
    std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace oracle

#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "qnli/common.hpp"
#include "qnli/pregroup.hpp"

namespace qnli {

enum class GateKind { H, RX, RZ, CRZ, CNOT };

inline std::string to_string(GateKind k) {
    switch (k) {
        case GateKind::H: return "H";
        case GateKind::RX: return "RX";
        case GateKind::RZ: return "RZ";
        case GateKind::CRZ: return "CRZ";
        default: return "CNOT";
    }
}

struct Gate {
    GateKind kind;
    int q0 = 0;
    int q1 = -1;         // second qubit (q0 = control) for CRZ/CNOT
    int slot = -1;       // >= 0: symbolic parameter slot
    double angle = 0.0;  // radians, used when slot < 0

    bool two_qubit() const {
        return kind == GateKind::CRZ || kind == GateKind::CNOT;
    }
    bool parametric() const {
        return kind == GateKind::RX || kind == GateKind::RZ ||
               kind == GateKind::CRZ;
    }
};

// Flat trainable angle vector plus the symbol table that ties word slots to
// indices. Slot allocation happens in a single-threaded compilation phase;
// afterwards the store is read-only and safe to share.
struct ParamStore {
    std::vector<double> theta;
    std::map<std::string, int> index;
    std::vector<std::string> names;

    int lookup_or_add(const std::string& name) {
        auto it = index.find(name);
        if (it != index.end()) return it->second;
        int id = int(theta.size());
        index[name] = id;
        names.push_back(name);
        theta.push_back(0.0);
        return id;
    }

    int find(const std::string& name) const {
        auto it = index.find(name);
        return it == index.end() ? -1 : it->second;
    }

    int size() const { return int(theta.size()); }
};

struct AnsatzConfig {
    int layers = 1;  // entangling depth d for multi-qubit words
};

/// Slots of the same (token, type) pair are shared across every occurrence
/// in a run, so the name encodes both plus the slot position.
inline std::string slot_name(const std::string& token, const PregroupType& type,
                             int pos) {
    return token + "|" + type.str() + "|" + std::to_string(pos);
}

inline int slots_per_word(int n_qubits_of_word, const AnsatzConfig& cfg) {
    return n_qubits_of_word == 1 ? 3 : cfg.layers * (n_qubits_of_word - 1);
}

struct Circuit {
    int n_qubits = 0;
    std::vector<Gate> gates;
    std::vector<int> postselect;  // qubits projected onto <0|, sorted
    std::vector<int> outputs;     // surviving qubits, open-wire order

    void validate() const {
        std::set<int> post(postselect.begin(), postselect.end());
        std::set<int> outs(outputs.begin(), outputs.end());
        for (int q : outs)
            if (post.count(q)) throw error("qubit both postselected and output");
        if (int(post.size() + outs.size()) != n_qubits)
            throw error("postselect and outputs must partition the qubits");
        for (const Gate& g : gates) {
            if (g.q0 < 0 || g.q0 >= n_qubits ||
                (g.two_qubit() && (g.q1 < 0 || g.q1 >= n_qubits || g.q1 == g.q0)))
                throw error("gate qubit index out of range");
        }
    }

    nlohmann::json to_json(const ParamStore* store = nullptr) const {
        nlohmann::json j;
        j["n_qubits"] = n_qubits;
        j["gates"] = nlohmann::json::array();
        for (const Gate& g : gates) {
            nlohmann::json gj;
            gj["kind"] = qnli::to_string(g.kind);
            gj["qubits"] = g.two_qubit() ? nlohmann::json{g.q0, g.q1}
                                         : nlohmann::json{g.q0};
            if (g.slot >= 0) {
                gj["slot"] = store ? nlohmann::json(store->names[std::size_t(g.slot)])
                                   : nlohmann::json(g.slot);
            } else if (g.parametric()) {
                gj["angle"] = g.angle;
            }
            j["gates"].push_back(gj);
        }
        j["postselect"] = postselect;
        j["outputs"] = outputs;
        return j;
    }
};

/// Compile a diagram under the IQP-style ansatz: one qubit per wire;
/// single-qubit words become RX,RZ,RX; k-qubit words become d layers of
/// Hadamards followed by CRZ on adjacent pairs; each cup becomes
/// CNOT + H + postselection of both wires (a Bell effect, unnormalized).
inline Circuit compile(const Diagram& d, const AnsatzConfig& cfg,
                       ParamStore& store) {
    d.validate();
    Circuit c;
    c.n_qubits = d.n_wires();
    for (std::size_t w = 0; w < d.words.size(); ++w) {
        const auto& [token, type] = d.words[w];
        auto [q0, k] = d.word_span(int(w));
        if (k == 1) {
            for (int p = 0; p < 3; ++p) {
                GateKind kind = p == 1 ? GateKind::RZ : GateKind::RX;
                c.gates.push_back(
                    {kind, q0, -1, store.lookup_or_add(slot_name(token, type, p)), 0.0});
            }
        } else {
            for (int layer = 0; layer < cfg.layers; ++layer) {
                for (int q = q0; q < q0 + k; ++q)
                    c.gates.push_back({GateKind::H, q, -1, -1, 0.0});
                for (int i = 0; i + 1 < k; ++i) {
                    int pos = layer * (k - 1) + i;
                    c.gates.push_back({GateKind::CRZ, q0 + i, q0 + i + 1,
                                       store.lookup_or_add(slot_name(token, type, pos)),
                                       0.0});
                }
            }
        }
    }
    for (auto [i, j] : d.cups) {
        c.gates.push_back({GateKind::CNOT, i, j, -1, 0.0});
        c.gates.push_back({GateKind::H, i, -1, -1, 0.0});
        c.postselect.push_back(i);
        c.postselect.push_back(j);
    }
    std::sort(c.postselect.begin(), c.postselect.end());
    c.outputs = d.open_wires;
    c.validate();
    return c;
}

/// Substitute every symbolic slot with its angle from theta. Pure; the
/// circuit structure is unchanged.
inline Circuit bind(const Circuit& c, const std::vector<double>& theta) {
    Circuit out = c;
    for (Gate& g : out.gates) {
        if (g.slot >= 0) {
            if (g.slot >= int(theta.size()))
                throw error("unresolved parameter slot " + std::to_string(g.slot));
            g.angle = theta[std::size_t(g.slot)];
            g.slot = -1;
        }
    }
    return out;
}

inline Circuit bind(const Circuit& c, const ParamStore& store) {
    return bind(c, store.theta);
}

/// Distinct slot indices referenced by a circuit, ascending.
inline std::vector<int> circuit_slots(const Circuit& c) {
    std::set<int> s;
    for (const Gate& g : c.gates)
        if (g.slot >= 0) s.insert(g.slot);
    return {s.begin(), s.end()};
}

}  // namespace qnli

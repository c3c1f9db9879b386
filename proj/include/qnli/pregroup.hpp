#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qnli/common.hpp"

namespace qnli {

// Atomic syntactic type: a base ('n' noun, 's' sentence) with an adjoint
// order z. z < 0 are left adjoints (x.l has z = -1), z > 0 right adjoints
// (x.r has z = +1). Two adjacent atoms cancel when the right one is the
// (z+1)-adjoint of the left: x^z x^{z+1} -> 1.
struct Atom {
    char base = 'n';
    int z = 0;

    friend bool operator==(const Atom&, const Atom&) = default;
    friend auto operator<=>(const Atom&, const Atom&) = default;
};

inline bool cancels(const Atom& left, const Atom& right) {
    return left.base == right.base && right.z == left.z + 1;
}

struct PregroupType {
    std::vector<Atom> atoms;

    friend bool operator==(const PregroupType&, const PregroupType&) = default;

    /// Parse the ASCII notation: atoms separated by whitespace, each a base
    /// letter followed by ".l" / ".r" suffixes ("n.r s" is the type of an
    /// intransitive verb).
    static PregroupType parse(const std::string& text) {
        PregroupType t;
        std::istringstream in(text);
        std::string chunk;
        while (in >> chunk) {
            if (chunk[0] != 'n' && chunk[0] != 's')
                throw malformed_input("bad atom base in type '" + text + "'");
            Atom a{chunk[0], 0};
            std::size_t i = 1;
            while (i < chunk.size()) {
                if (i + 1 < chunk.size() && chunk[i] == '.' &&
                    (chunk[i + 1] == 'l' || chunk[i + 1] == 'r')) {
                    if (a.z != 0 && ((a.z < 0) != (chunk[i + 1] == 'l')))
                        throw malformed_input("mixed adjoints in type '" + text + "'");
                    a.z += chunk[i + 1] == 'l' ? -1 : 1;
                    i += 2;
                } else {
                    throw malformed_input("bad adjoint suffix in type '" + text + "'");
                }
            }
            t.atoms.push_back(a);
        }
        if (t.atoms.empty())
            throw malformed_input("empty pregroup type");
        return t;
    }

    std::string str() const {
        std::string out;
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            if (i) out += ' ';
            out += atoms[i].base;
            for (int k = 0; k < std::abs(atoms[i].z); ++k)
                out += atoms[i].z < 0 ? ".l" : ".r";
        }
        return out;
    }
};

struct Lexicon {
    // token -> candidate types, in file order (first entry wins ties)
    std::map<std::string, std::vector<PregroupType>> entries;

    const std::vector<PregroupType>* find(const std::string& token) const {
        auto it = entries.find(token);
        return it == entries.end() ? nullptr : &it->second;
    }

    std::vector<std::string> tokens() const {
        std::vector<std::string> out;
        out.reserve(entries.size());
        for (const auto& [tok, _] : entries) out.push_back(tok);
        return out;
    }
};

/// One entry per line: token, whitespace, type string. '#' starts a comment.
/// Duplicate tokens accumulate ambiguous entries in file order.
inline Lexicon load_lexicon(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw malformed_input("cannot open lexicon: " + path);
    Lexicon lex;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string token;
        if (!(ls >> token)) continue;
        std::string rest;
        std::getline(ls, rest);
        try {
            lex.entries[token].push_back(PregroupType::parse(rest));
        } catch (const malformed_input& e) {
            throw malformed_input(path + ":" + std::to_string(lineno) + ": " +
                                  e.what());
        }
    }
    return lex;
}

// String-diagram record of one reduction. Wires are numbered by reading
// order across the concatenated word types; each wire sits in exactly one
// cup or in open_wires.
struct Diagram {
    std::vector<std::pair<std::string, PregroupType>> words;
    std::vector<std::pair<int, int>> cups;  // (i, j), i < j, sorted by i
    std::vector<int> open_wires;            // ascending

    int n_wires() const {
        int n = 0;
        for (const auto& [_, t] : words) n += int(t.atoms.size());
        return n;
    }

    Atom wire_atom(int w) const {
        for (const auto& [_, t] : words) {
            if (w < int(t.atoms.size())) return t.atoms[std::size_t(w)];
            w -= int(t.atoms.size());
        }
        throw error("wire index out of range");
    }

    /// (first wire, wire count) of word w.
    std::pair<int, int> word_span(int w) const {
        int start = 0;
        for (int i = 0; i < w; ++i) start += int(words[std::size_t(i)].second.atoms.size());
        return {start, int(words[std::size_t(w)].second.atoms.size())};
    }

    void validate() const {
        const int n = n_wires();
        std::vector<int> uses(std::size_t(n), 0);
        for (auto [i, j] : cups) {
            if (i < 0 || j >= n || i >= j)
                throw error("cup indices out of range");
            if (!cancels(wire_atom(i), wire_atom(j)))
                throw error("cup joins non-canceling atoms");
            ++uses[std::size_t(i)];
            ++uses[std::size_t(j)];
        }
        for (int w : open_wires) {
            if (w < 0 || w >= n) throw error("open wire out of range");
            ++uses[std::size_t(w)];
        }
        for (int u : uses)
            if (u != 1) throw error("wire not covered exactly once");
        if (!std::is_sorted(open_wires.begin(), open_wires.end()))
            throw error("open wires out of reading order");
        // planarity: scanning wires left to right, cups must close LIFO
        std::map<int, int> close_at;  // j -> i
        std::vector<int> stack;
        for (auto [i, j] : cups) close_at[j] = i;
        std::set<int> opens(open_wires.begin(), open_wires.end());
        for (int w = 0; w < n; ++w) {
            if (auto it = close_at.find(w); it != close_at.end()) {
                if (stack.empty() || stack.back() != it->second)
                    throw error("crossing cups");
                stack.pop_back();
            } else if (!opens.count(w)) {
                stack.push_back(w);
            } else if (!stack.empty()) {
                throw error("open wire trapped under a cup");
            }
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["words"] = nlohmann::json::array();
        for (const auto& [tok, t] : words)
            j["words"].push_back({{"token", tok}, {"type", t.str()}});
        j["cups"] = cups;
        j["open_wires"] = open_wires;
        j["n_wires"] = n_wires();
        return j;
    }
};

namespace detail {

struct Reduction {
    std::vector<std::pair<int, int>> cups;
    std::vector<int> open;
};

// Backtracking shift-reduce over adjacent cancellations. At each atom the
// choice is: cancel with the stack top (when typed to do so) or shift. A
// failed (position, stack contents) state never succeeds later, so failures
// are memoized by value.
class Reducer {
  public:
    Reducer(const std::vector<Atom>& atoms, const std::vector<Atom>& target)
        : atoms_(atoms), target_(target) {}

    std::optional<Reduction> run() {
        cups_.clear();
        stack_.clear();
        if (dfs(0)) {
            Reduction r;
            r.cups = cups_;
            std::sort(r.cups.begin(), r.cups.end());
            r.open = stack_;
            return r;
        }
        return std::nullopt;
    }

    int best_leftover_size() const { return best_size_; }
    const std::vector<Atom>& best_leftover() const { return best_; }

  private:
    bool dfs(std::size_t idx) {
        if (idx == atoms_.size()) {
            if (stack_atoms() == target_) return true;
            if (int(stack_.size()) < best_size_) {
                best_size_ = int(stack_.size());
                best_ = stack_atoms();
            }
            return false;
        }
        if (failed_.count(key(idx))) return false;
        const Atom& a = atoms_[idx];
        if (!stack_.empty() && cancels(atoms_[std::size_t(stack_.back())], a)) {
            int top = stack_.back();
            stack_.pop_back();
            cups_.push_back({top, int(idx)});
            if (dfs(idx + 1)) return true;
            cups_.pop_back();
            stack_.push_back(top);
        }
        stack_.push_back(int(idx));
        if (dfs(idx + 1)) return true;
        stack_.pop_back();
        failed_.insert(key(idx));
        return false;
    }

    std::vector<Atom> stack_atoms() const {
        std::vector<Atom> out;
        out.reserve(stack_.size());
        for (int i : stack_) out.push_back(atoms_[std::size_t(i)]);
        return out;
    }

    std::string key(std::size_t idx) const {
        std::string k = std::to_string(idx) + "|";
        for (int i : stack_) {
            const Atom& a = atoms_[std::size_t(i)];
            k += a.base;
            k += std::to_string(a.z);
            k += ',';
        }
        return k;
    }

    const std::vector<Atom>& atoms_;
    const std::vector<Atom>& target_;
    std::vector<int> stack_;
    std::vector<std::pair<int, int>> cups_;
    std::set<std::string> failed_;
    std::vector<Atom> best_;
    int best_size_ = 1 << 30;
};

}  // namespace detail

/// Reduce a token sequence to the target base type ('s' for sentences, 'n'
/// for noun-phrase probes). Among valid type assignments the
/// lexicographically first by lexicon entry order wins.
inline Diagram parse(const std::vector<std::string>& tokens,
                     const Lexicon& lexicon, char target_base) {
    if (tokens.empty()) throw parse_failure("empty token sequence");
    std::vector<const std::vector<PregroupType>*> choices;
    choices.reserve(tokens.size());
    for (const auto& tok : tokens) {
        const auto* types = lexicon.find(tok);
        if (!types || types->empty())
            throw parse_failure("out-of-vocabulary token '" + tok + "'");
        choices.push_back(types);
    }
    const std::vector<Atom> target{{target_base, 0}};

    std::vector<std::size_t> pick(tokens.size(), 0);
    std::vector<Atom> best;
    int best_size = 1 << 30;
    while (true) {
        std::vector<Atom> atoms;
        for (std::size_t w = 0; w < tokens.size(); ++w)
            for (const Atom& a : (*choices[w])[pick[w]].atoms)
                atoms.push_back(a);
        detail::Reducer red(atoms, target);
        if (auto r = red.run()) {
            Diagram d;
            for (std::size_t w = 0; w < tokens.size(); ++w)
                d.words.push_back({tokens[w], (*choices[w])[pick[w]]});
            d.cups = r->cups;
            d.open_wires = r->open;
            d.validate();
            return d;
        }
        if (red.best_leftover_size() < best_size) {
            best_size = red.best_leftover_size();
            best = red.best_leftover();
        }
        // odometer: rightmost position varies fastest -> lexicographic order
        std::size_t w = tokens.size();
        while (w > 0) {
            --w;
            if (++pick[w] < choices[w]->size()) break;
            pick[w] = 0;
            if (w == 0) {
                std::string sent;
                for (const auto& t : tokens) sent += (sent.empty() ? "" : " ") + t;
                PregroupType leftover{best};
                throw parse_failure("no reduction of \"" + sent + "\" to '" +
                                    std::string(1, target_base) +
                                    "'; best partial: " +
                                    (best.empty() ? "(empty)" : leftover.str()));
            }
        }
    }
}

}  // namespace qnli

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qnli/common.hpp"
#include "qnli/rng.hpp"

namespace qnli {

enum class Label : int { contradiction = 0, neutral = 1, entailment = 2 };

inline Label label_from_string(std::string s) {
    for (char& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
    if (s == "entailment") return Label::entailment;
    if (s == "neutral") return Label::neutral;
    if (s == "contradiction") return Label::contradiction;
    throw malformed_input("unknown entailment label: " + s);
}

struct Example {
    std::string id;
    std::vector<std::string> premise;
    std::vector<std::string> hypothesis;
    double relatedness = 0.0;            // normalized to [0, 1]
    Label label = Label::neutral;
    std::string reversed_of;             // empty for originals
};

struct Provenance {
    std::string source;
    int max_words = 11;
    int n = -1;  // -1: every qualifying row
    std::uint64_t seed = 0;
};

struct ExampleSet {
    std::vector<Example> examples;
    Provenance provenance;
    bool expanded = false;

    void check_unique_ids() const {
        std::set<std::string> seen;
        for (const auto& e : examples)
            if (!seen.insert(e.id).second)
                throw malformed_input("duplicate example id: " + e.id);
    }
};

inline double normalize_relatedness(double raw) { return (raw - 1.0) / 4.0; }
inline double denormalize_relatedness(double r) { return r * 4.0 + 1.0; }

/// Lowercase, split on whitespace, strip terminal punctuation.
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) {
        for (char& c : tok) c = char(std::tolower(static_cast<unsigned char>(c)));
        while (!tok.empty() && std::string(".,!?;:\"").find(tok.back()) !=
                                   std::string::npos)
            tok.pop_back();
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

inline std::string join_tokens(const std::vector<std::string>& toks) {
    std::string out;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (i) out += ' ';
        out += toks[i];
    }
    return out;
}

namespace detail {

inline std::vector<std::string> split_tsv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == '\t') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(cur);
    return cells;
}

}  // namespace detail

/// Read a SICK-format TSV (header row; sentence_A, sentence_B,
/// relatedness_score on the 1-5 scale, entailment_judgment) and keep rows
/// where both sentences have at most max_words tokens. With n >= 0, a
/// seeded uniform draw of exactly n qualifying rows is returned (file order
/// preserved); n < 0 returns every qualifying row.
inline ExampleSet load_sick(const std::string& path, int max_words, int n,
                            std::uint64_t seed) {
    std::ifstream in(path);
    if (!in) throw malformed_input("cannot open dataset: " + path);
    std::string line;
    if (!std::getline(in, line))
        throw malformed_input("empty dataset file: " + path);

    auto header = detail::split_tsv(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) {
        std::string name = header[i];
        for (char& c : name) c = char(std::tolower(static_cast<unsigned char>(c)));
        col[name] = i;
    }
    auto need = [&](std::initializer_list<const char*> names) {
        for (const char* nm : names)
            if (auto it = col.find(nm); it != col.end()) return it->second;
        throw malformed_input("dataset header missing column: " +
                              std::string(*names.begin()));
    };
    const std::size_t c_a = need({"sentence_a"});
    const std::size_t c_b = need({"sentence_b"});
    const std::size_t c_score = need({"relatedness_score"});
    const std::size_t c_label = need({"entailment_judgment", "entailment_label"});
    std::optional<std::size_t> c_id;
    if (auto it = col.find("pair_id"); it != col.end()) c_id = it->second;

    ExampleSet set;
    set.provenance = {path, max_words, n, seed};
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        auto cells = detail::split_tsv(line);
        if (cells.size() != header.size())
            throw malformed_input(path + ": row " + std::to_string(row) +
                                  ": expected " + std::to_string(header.size()) +
                                  " columns, got " + std::to_string(cells.size()));
        double raw = 0.0;
        try {
            std::size_t pos = 0;
            raw = std::stod(cells[c_score], &pos);
            if (pos != cells[c_score].size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw malformed_input(path + ": row " + std::to_string(row) +
                                  ": unparsable relatedness score '" +
                                  cells[c_score] + "'");
        }
        if (raw < 1.0 || raw > 5.0)
            throw malformed_input(path + ": row " + std::to_string(row) +
                                  ": relatedness score out of [1,5]");
        Example e;
        e.id = c_id ? cells[*c_id] : "row" + std::to_string(row);
        e.premise = tokenize(cells[c_a]);
        e.hypothesis = tokenize(cells[c_b]);
        e.relatedness = normalize_relatedness(raw);
        e.label = label_from_string(cells[c_label]);
        if (e.premise.empty() || e.hypothesis.empty()) continue;
        if (int(e.premise.size()) > max_words ||
            int(e.hypothesis.size()) > max_words)
            continue;
        set.examples.push_back(std::move(e));
    }
    set.check_unique_ids();
    if (n >= 0) {
        if (n == 0 || int(set.examples.size()) < n)
            throw insufficient_data(
                "need " + std::to_string(n) + " qualifying rows, found " +
                std::to_string(set.examples.size()));
        std::vector<std::size_t> idx(set.examples.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        Rng rng(seed);
        shuffle(idx, rng);
        idx.resize(std::size_t(n));
        std::sort(idx.begin(), idx.end());
        std::vector<Example> picked;
        picked.reserve(idx.size());
        for (std::size_t i : idx) picked.push_back(std::move(set.examples[i]));
        set.examples = std::move(picked);
    }
    return set;
}

/// Append a reversed-order copy of every example: entailment reversals are
/// relabeled neutral, neutral and contradiction keep their labels.
/// Relatedness carries over. Refuses already-expanded input.
inline ExampleSet expand_bidirectional(const ExampleSet& set) {
    if (set.expanded)
        throw malformed_input("example set is already expanded");
    ExampleSet out;
    out.provenance = set.provenance;
    out.expanded = true;
    out.examples = set.examples;
    for (const auto& e : set.examples) {
        Example r = e;
        r.id = e.id + "_rev";
        std::swap(r.premise, r.hypothesis);
        r.reversed_of = e.id;
        if (e.label == Label::entailment) r.label = Label::neutral;
        out.examples.push_back(std::move(r));
    }
    out.check_unique_ids();
    return out;
}

struct Splits {
    ExampleSet train, dev, test;
};

/// Seeded shuffle then contiguous partition. Reversed copies travel with
/// their originals so no pair leaks across splits; within a split each
/// original is immediately followed by its reversal.
inline Splits split(const ExampleSet& set, int r_train, int r_dev, int r_test,
                    std::uint64_t seed) {
    if (r_train + r_dev + r_test != 100)
        throw malformed_input("split ratios must sum to 100");

    // group originals with their reversals, preserving input order
    std::vector<std::vector<const Example*>> groups;
    std::map<std::string, std::size_t> group_of;
    for (const auto& e : set.examples) {
        if (!e.reversed_of.empty()) {
            if (auto it = group_of.find(e.reversed_of); it != group_of.end()) {
                groups[it->second].push_back(&e);
                continue;
            }
        }
        group_of[e.id] = groups.size();
        groups.push_back({&e});
    }

    Rng rng(seed);
    shuffle(groups, rng);

    const std::size_t ng = groups.size();
    std::size_t counts[3] = {ng * std::size_t(r_train) / 100,
                             ng * std::size_t(r_dev) / 100,
                             ng * std::size_t(r_test) / 100};
    std::size_t used = counts[0] + counts[1] + counts[2];
    for (std::size_t k = 0; used < ng; k = (k + 1) % 3, ++used) ++counts[k];
    if (counts[0] == 0 || counts[1] == 0 || counts[2] == 0)
        throw insufficient_data("set too small for nonempty partitions");

    Splits out;
    ExampleSet* parts[3] = {&out.train, &out.dev, &out.test};
    std::size_t g = 0;
    for (int p = 0; p < 3; ++p) {
        parts[p]->provenance = set.provenance;
        parts[p]->expanded = set.expanded;
        for (std::size_t k = 0; k < counts[p]; ++k, ++g)
            for (const Example* e : groups[g])
                parts[p]->examples.push_back(*e);
    }
    return out;
}

inline nlohmann::json example_to_json(const Example& e) {
    nlohmann::json j;
    j["id"] = e.id;
    j["premise"] = join_tokens(e.premise);
    j["hypothesis"] = join_tokens(e.hypothesis);
    j["relatedness"] = e.relatedness;
    j["label"] = int(e.label);
    j["reversed_of"] =
        e.reversed_of.empty() ? nlohmann::json() : nlohmann::json(e.reversed_of);
    return j;
}

inline Example example_from_json(const nlohmann::json& j) {
    Example e;
    e.id = j.at("id").get<std::string>();
    e.premise = tokenize(j.at("premise").get<std::string>());
    e.hypothesis = tokenize(j.at("hypothesis").get<std::string>());
    e.relatedness = j.at("relatedness").get<double>();
    int lab = j.at("label").get<int>();
    if (lab < 0 || lab > 2) throw malformed_input("label out of range");
    e.label = Label(lab);
    if (!j.at("reversed_of").is_null())
        e.reversed_of = j.at("reversed_of").get<std::string>();
    return e;
}

inline void write_jsonl(const std::string& path, const ExampleSet& set) {
    std::ofstream out(path);
    if (!out) throw error("cannot write " + path);
    for (const auto& e : set.examples) out << example_to_json(e).dump() << "\n";
}

inline ExampleSet read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw malformed_input("cannot open dataset: " + path);
    ExampleSet set;
    set.provenance.source = path;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw malformed_input(path + ": line " + std::to_string(row) +
                                  ": invalid JSON");
        set.examples.push_back(example_from_json(j));
        if (!set.examples.back().reversed_of.empty()) set.expanded = true;
    }
    set.check_unique_ids();
    return set;
}

}  // namespace qnli

// Generates the SICK-format corpus and the word embedding table shipped
// under data/. Sentences are built from the starter lexicon's vocabulary so
// every generated row parses; labels follow the templates below:
//   entailment     adverb/adjective/object drop, hyponym -> hypernym subject
//   contradiction  same sentence with negated copula
//   neutral        hypernym -> hyponym, subject swap, verb swap, unrelated
// Relatedness scores are drawn per template on the SICK 1-5 scale.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qnli/rng.hpp"

namespace {

using qnli::Rng;

struct Noun {
    std::string word;
    std::string group;
    bool plural = false;
    bool rare = false;
};

const std::vector<Noun> kNouns = {
    {"children", "young_people", true, false},
    {"kids", "young_people", true, false},
    {"boys", "young_people", true, false},
    {"girls", "young_people", true, false},
    {"toddlers", "young_people", true, true},
    {"man", "adult_people", false, false},
    {"woman", "adult_people", false, false},
    {"person", "adult_people", false, false},
    {"dog", "canine", false, false},
    {"puppy", "canine", false, false},
    {"hound", "canine", false, true},
    {"cat", "feline", false, false},
    {"kitten", "feline", false, false},
    {"bird", "bird", false, false},
    {"parrot", "bird", false, false},
    {"sparrow", "bird", false, true},
    {"animal", "animal", false, false},
    {"lamb", "animal", false, true},
    {"calf", "animal", false, true},
};

// objects of transitive participles; also used for unrelated subjects
const std::vector<Noun> kThings = {
    {"tree", "flora", false, false},   {"plant", "flora", false, false},
    {"flower", "flora", false, false}, {"fern", "flora", false, true},
    {"shrub", "flora", false, true},   {"park", "place", false, false},
    {"yard", "place", false, false},   {"garden", "place", false, false},
    {"meadow", "place", false, true},  {"fence", "object", false, false},
    {"ball", "object", false, false},  {"guitar", "object", false, false},
    {"bike", "object", false, false},  {"kite", "object", false, true},
    {"drum", "object", false, true},
};

// (hyponym, hypernym); plurality matches within each pair
const std::vector<std::pair<std::string, std::string>> kHypernyms = {
    {"boys", "kids"},     {"boys", "children"},  {"girls", "kids"},
    {"girls", "children"}, {"kids", "children"},  {"toddlers", "children"},
    {"puppy", "dog"},     {"hound", "dog"},      {"dog", "animal"},
    {"cat", "animal"},    {"kitten", "cat"},     {"parrot", "bird"},
    {"sparrow", "bird"},  {"bird", "animal"},    {"tree", "plant"},
    {"flower", "plant"},  {"fern", "plant"},     {"shrub", "plant"},
};

const std::vector<std::string> kIntransParticiples = {
    "playing", "walking", "running", "sleeping",
    "jumping", "barking", "singing", "dancing"};
const std::vector<std::string> kTransParticiples = {
    "riding", "kicking", "holding", "watching", "chasing"};
const std::vector<std::string> kAdverbs = {
    "dangerously", "quietly", "quickly", "loudly", "outside", "happily", "slowly"};
const std::vector<std::string> kAdjectives = {"young", "little", "happy", "small",
                                              "old"};

struct Row {
    std::string a, b, label;
    double score = 3.0;
};

class Generator {
  public:
    explicit Generator(std::uint64_t seed) : rng_(seed) {
        for (const auto& n : kNouns) noun_by_word_[n.word] = n;
        for (const auto& n : kThings) noun_by_word_[n.word] = n;
    }

    std::vector<Row> corpus() {
        std::vector<Row> rows;
        auto add = [&](int count, auto&& fn) {
            int made = 0, guard = 0;
            while (made < count && ++guard < count * 50) {
                Row r = fn();
                if (seen_.insert(r.a + "\t" + r.b).second) {
                    rows.push_back(std::move(r));
                    ++made;
                }
            }
        };
        add(34, [&] { return ent_adverb_drop(); });
        add(22, [&] { return ent_adjective_drop(); });
        add(30, [&] { return ent_hypernym(); });
        add(14, [&] { return ent_object_drop(); });
        add(88, [&] { return con_negation(); });
        add(28, [&] { return neu_hyponym(); });
        add(36, [&] { return neu_subject_swap(); });
        add(36, [&] { return neu_verb_swap(); });
        add(32, [&] { return neu_unrelated(); });
        return rows;
    }

  private:
    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[std::size_t(rng_.below(v.size()))];
    }

    Noun pick_subject() {
        for (;;) {
            const Noun& n = pick(kNouns);
            if (!n.rare) return n;
            if (rare_uses_[n.word] < 2 && rng_.uniform() < 0.6) {
                ++rare_uses_[n.word];
                return n;
            }
        }
    }

    Noun pick_thing() {
        for (;;) {
            const Noun& n = pick(kThings);
            if (!n.rare) return n;
            if (rare_uses_[n.word] < 2 && rng_.uniform() < 0.6) {
                ++rare_uses_[n.word];
                return n;
            }
        }
    }

    std::string subject_phrase(const Noun& n) {
        // bare plural or determiner + noun
        if (n.plural && rng_.uniform() < 0.7) return n.word;
        return "the " + n.word;
    }

    std::string copula(const Noun& n, bool negated) {
        if (n.plural) return negated ? "aren't" : "are";
        return negated ? "isn't" : "is";
    }

    double score(double lo, double hi) {
        double raw = rng_.uniform(lo, hi);
        return double(int(raw * 10.0 + 0.5)) / 10.0;  // one decimal, SICK style
    }

    Row ent_adverb_drop() {
        Noun n = pick_subject();
        std::string subj = subject_phrase(n);
        std::string v = pick(kIntransParticiples);
        std::string adv = pick(kAdverbs);
        std::string cop = copula(n, false);
        return {subj + " " + cop + " " + v + " " + adv, subj + " " + cop + " " + v,
                "ENTAILMENT", score(4.5, 5.0)};
    }

    Row ent_adjective_drop() {
        Noun n = pick_subject();
        std::string adj = pick(kAdjectives);
        std::string v = pick(kIntransParticiples);
        std::string cop = copula(n, false);
        return {"the " + adj + " " + n.word + " " + cop + " " + v,
                "the " + n.word + " " + cop + " " + v, "ENTAILMENT",
                score(4.4, 5.0)};
    }

    Row ent_hypernym() {
        auto [hypo, hyper] = pick(kHypernyms);
        const Noun& n = noun_by_word_.at(hypo);
        std::string v = pick(kIntransParticiples);
        std::string cop = copula(n, false);
        std::string sa = n.plural ? hypo : "the " + hypo;
        std::string sb = n.plural ? hyper : "the " + hyper;
        return {sa + " " + cop + " " + v, sb + " " + cop + " " + v, "ENTAILMENT",
                score(4.2, 4.9)};
    }

    Row ent_object_drop() {
        Noun n = pick_subject();
        Noun obj = pick_thing();
        std::string cop = copula(n, false);
        std::string subj = subject_phrase(n);
        return {subj + " " + cop + " riding the " + obj.word,
                subj + " " + cop + " riding", "ENTAILMENT", score(4.3, 4.9)};
    }

    Row con_negation() {
        Noun n = pick_subject();
        std::string subj = subject_phrase(n);
        std::string v = pick(kIntransParticiples);
        std::string tail = rng_.uniform() < 0.4 ? " " + pick(kAdverbs) : "";
        return {subj + " " + copula(n, false) + " " + v + tail,
                subj + " " + copula(n, true) + " " + v + tail, "CONTRADICTION",
                score(3.4, 4.4)};
    }

    Row neu_hyponym() {
        auto [hypo, hyper] = pick(kHypernyms);
        const Noun& n = noun_by_word_.at(hypo);
        std::string v = pick(kIntransParticiples);
        std::string cop = copula(n, false);
        std::string sa = n.plural ? hyper : "the " + hyper;
        std::string sb = n.plural ? hypo : "the " + hypo;
        return {sa + " " + cop + " " + v, sb + " " + cop + " " + v, "NEUTRAL",
                score(3.6, 4.6)};
    }

    Row neu_subject_swap() {
        Noun a = pick_subject();
        Noun b = pick_subject();
        int guard = 0;
        while (b.group == a.group && ++guard < 20) b = pick_subject();
        std::string v = pick(kIntransParticiples);
        return {subject_phrase(a) + " " + copula(a, false) + " " + v,
                subject_phrase(b) + " " + copula(b, false) + " " + v, "NEUTRAL",
                score(2.6, 3.8)};
    }

    Row neu_verb_swap() {
        Noun n = pick_subject();
        std::string subj = subject_phrase(n);
        std::string va = pick(kIntransParticiples);
        std::string vb = pick(kIntransParticiples);
        int guard = 0;
        while (vb == va && ++guard < 20) vb = pick(kIntransParticiples);
        std::string cop = copula(n, false);
        return {subj + " " + cop + " " + va, subj + " " + cop + " " + vb, "NEUTRAL",
                score(2.6, 3.8)};
    }

    Row neu_unrelated() {
        Noun a = pick_subject();
        Noun b = pick_subject();
        int guard = 0;
        while (b.group == a.group && ++guard < 20) b = pick_subject();
        std::string va = pick(kIntransParticiples);
        std::string vb = pick(kIntransParticiples);
        guard = 0;
        while (vb == va && ++guard < 20) vb = pick(kIntransParticiples);
        std::string ta = rng_.uniform() < 0.3 ? " " + pick(kAdverbs) : "";
        return {subject_phrase(a) + " " + copula(a, false) + " " + va + ta,
                subject_phrase(b) + " " + copula(b, false) + " " + vb, "NEUTRAL",
                score(1.0, 2.4)};
    }

    Rng rng_;
    std::map<std::string, Noun> noun_by_word_;
    std::map<std::string, int> rare_uses_;
    std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------
// embeddings: group prototype + per-word jitter

const std::map<std::string, std::vector<double>> kPrototypes = {
    {"young_people", {1.0, 0.8, 0.0, 0.0, 0.0, 0.0}},
    {"adult_people", {1.0, 0.0, 0.0, 0.0, 0.0, 0.3}},
    {"canine", {0.0, 1.0, 0.6, 0.0, 0.0, 0.0}},
    {"feline", {0.0, 1.0, 0.0, 0.6, 0.0, 0.0}},
    {"bird", {0.0, 1.0, 0.0, 0.0, 0.6, 0.0}},
    {"animal", {0.0, 1.0, 0.2, 0.2, 0.2, 0.0}},
    {"flora", {0.0, 0.0, 1.0, 0.0, 0.0, 0.4}},
    {"place", {0.0, 0.0, 0.3, 1.0, 0.0, 0.0}},
    {"object", {0.0, 0.0, 0.0, 0.0, 1.0, 0.4}},
};

void emit_embedding(std::ofstream& out, Rng& rng, const std::string& word,
                    std::vector<double> proto) {
    out << word;
    for (double v : proto) {
        char buf[32];
        std::snprintf(buf, sizeof buf, " %.4f", v + rng.uniform(-0.05, 0.05));
        out << buf;
    }
    out << "\n";
}

void write_embeddings(const std::string& path, std::uint64_t seed) {
    std::ofstream out(path);
    Rng rng(qnli::derive_seed(seed, "embeddings"));
    for (const auto& n : kNouns) emit_embedding(out, rng, n.word, kPrototypes.at(n.group));
    for (const auto& n : kThings) emit_embedding(out, rng, n.word, kPrototypes.at(n.group));
    emit_embedding(out, rng, "schrödinger", kPrototypes.at("adult_people"));

    emit_embedding(out, rng, "the", {0, 0, 0, 0, 0, 1});
    emit_embedding(out, rng, "a", {0, 0, 0, 0, 0.1, 1});
    for (const auto& w : kAdjectives) emit_embedding(out, rng, w, {0.5, 0, 0, 0, 0, 0.8});

    // polarity separates the copulas
    emit_embedding(out, rng, "is", {1, 0, 0, 0, 0, 0});
    emit_embedding(out, rng, "are", {1, 0, 0.2, 0, 0, 0});
    emit_embedding(out, rng, "isn't", {0, 1, 0, 0, 0, 0});
    emit_embedding(out, rng, "aren't", {0, 1, 0.2, 0, 0, 0});

    const std::map<std::string, std::vector<double>> vflavors = {
        {"playing", {1, 0, 0, 0, 0, 0}},   {"singing", {1, 0.3, 0, 0, 0, 0}},
        {"dancing", {1, 0.4, 0, 0, 0, 0}}, {"walking", {0, 1, 0, 0, 0, 0}},
        {"running", {0, 1, 0.3, 0, 0, 0}}, {"jumping", {0, 1, 0.5, 0, 0, 0}},
        {"sleeping", {0, 0, 1, 0, 0, 0}},  {"barking", {0, 0, 0, 1, 0, 0}},
    };
    for (const auto& [w, v] : vflavors) emit_embedding(out, rng, w, v);
    const std::map<std::string, std::vector<double>> tflavors = {
        {"riding", {1, 0, 0, 0, 0.5, 0}},  {"chasing", {1, 0.4, 0, 0, 0, 0}},
        {"kicking", {0, 1, 0, 0, 0.4, 0}}, {"holding", {0, 0, 1, 0, 0, 0.3}},
        {"watching", {0, 0, 1, 0.4, 0, 0}},
    };
    for (const auto& [w, v] : tflavors) emit_embedding(out, rng, w, v);
    const std::map<std::string, std::vector<double>> aflavors = {
        {"dangerously", {1, 0, 0, 0, 0, 0}}, {"loudly", {1, 0.3, 0, 0, 0, 0}},
        {"quietly", {0, 1, 0, 0, 0, 0}},     {"slowly", {0, 1, 0.3, 0, 0, 0}},
        {"quickly", {0, 0, 1, 0, 0, 0}},     {"outside", {0, 0, 0, 1, 0, 0}},
        {"happily", {0, 0, 0, 1, 0.4, 0}},
    };
    for (const auto& [w, v] : aflavors) emit_embedding(out, rng, w, v);

    emit_embedding(out, rng, "walks", {0, 1, 0, 0, 0, 0});
    emit_embedding(out, rng, "runs", {0, 1, 0.3, 0, 0, 0});
    emit_embedding(out, rng, "plays", {1, 0, 0, 0, 0, 0});
    emit_embedding(out, rng, "sleeps", {0, 0, 1, 0, 0, 0});
    emit_embedding(out, rng, "barks", {0, 0, 0, 1, 0, 0});
    emit_embedding(out, rng, "rides", {1, 0, 0, 0, 0.5, 0});
    emit_embedding(out, rng, "kicks", {0, 1, 0, 0, 0.4, 0});
    emit_embedding(out, rng, "holds", {0, 0, 1, 0, 0, 0.3});
    emit_embedding(out, rng, "chases", {1, 0.4, 0, 0, 0, 0});
    emit_embedding(out, rng, "in", {1, 0, 0, 0, 0, 0});
    emit_embedding(out, rng, "near", {0, 1, 0, 0, 0, 0});
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"generate the shipped corpus and embedding table"};
    std::string out_dir = "data";
    std::uint64_t seed = 20240501;
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed, "generator seed");
    CLI11_PARSE(app, argc, argv);

    Generator gen(seed);
    auto rows = gen.corpus();
    std::ofstream tsv(out_dir + "/sick_synth.tsv");
    if (!tsv) {
        std::cerr << "cannot write " << out_dir << "/sick_synth.tsv\n";
        return 1;
    }
    tsv << "pair_ID\tsentence_A\tsentence_B\trelatedness_score\tentailment_judgment\n";
    int id = 1;
    for (const auto& r : rows) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%.1f", r.score);
        tsv << "S" << id++ << "\t" << r.a << "\t" << r.b << "\t" << buf << "\t"
            << r.label << "\n";
    }
    write_embeddings(out_dir + "/embeddings.txt", seed);
    std::cout << "wrote " << rows.size() << " pairs to " << out_dir << "\n";
    return 0;
}

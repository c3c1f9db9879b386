#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "oracles.hpp"
#include "qnli/data.hpp"
#include "qnli/rng.hpp"

using namespace qnli;

namespace {

std::string toy_tsv() {
    return std::string(QNLI_SOURCE_DIR) + "/data/toy.tsv";
}

ExampleSet fabricate(int n, int n_entailment) {
    ExampleSet set;
    for (int i = 0; i < n; ++i) {
        Example e;
        e.id = "e" + std::to_string(i);
        e.premise = {"a", "b"};
        e.hypothesis = {"c", "d"};
        e.relatedness = 0.5;
        e.label = i < n_entailment ? Label::entailment
                                   : (i % 2 ? Label::neutral : Label::contradiction);
        set.examples.push_back(std::move(e));
    }
    return set;
}

}  // namespace

TEST_CASE("relatedness normalization endpoints and round trip", "[data]") {
    REQUIRE(normalize_relatedness(5.0) == 1.0);
    REQUIRE(normalize_relatedness(1.0) == 0.0);
    REQUIRE(normalize_relatedness(3.0) == 0.5);
    Rng rng(42);
    for (int i = 0; i < 200; ++i) {
        double raw = rng.uniform(1.0, 5.0);
        REQUIRE(std::abs(denormalize_relatedness(normalize_relatedness(raw)) - raw) <=
                1e-12);
    }
}

TEST_CASE("tokenizer lowercases and strips terminal punctuation", "[data]") {
    REQUIRE(tokenize("Schrödinger walks in the park.") ==
            std::vector<std::string>{"schrödinger", "walks", "in", "the", "park"});
    REQUIRE(tokenize("  The  DOG barks!  ") ==
            std::vector<std::string>{"the", "dog", "barks"});
}

TEST_CASE("load_sick parses the toy file", "[data]") {
    ExampleSet set = load_sick(toy_tsv(), 11, -1, 0);
    REQUIRE(set.examples.size() == 6);
    REQUIRE(set.examples[0].id == "T1");
    REQUIRE(set.examples[0].label == Label::entailment);
    REQUIRE(set.examples[0].relatedness == normalize_relatedness(4.5));
    REQUIRE(set.examples[1].label == Label::contradiction);
    REQUIRE(set.examples[3].label == Label::neutral);
    REQUIRE(set.examples[4].premise ==
            std::vector<std::string>{"boys", "are", "playing", "outside"});
}

TEST_CASE("load_sick length filter and seeded draw", "[data]") {
    ExampleSet filtered = load_sick(toy_tsv(), 3, -1, 0);
    REQUIRE(filtered.examples.size() == 1);  // only "kids are playing" fits

    ExampleSet a = load_sick(toy_tsv(), 11, 3, 99);
    ExampleSet b = load_sick(toy_tsv(), 11, 3, 99);
    REQUIRE(a.examples.size() == 3);
    for (std::size_t i = 0; i < a.examples.size(); ++i)
        REQUIRE(a.examples[i].id == b.examples[i].id);

    REQUIRE_THROWS_AS(load_sick(toy_tsv(), 11, 7, 0), insufficient_data);
    REQUIRE_THROWS_AS(load_sick(toy_tsv(), 11, 0, 0), insufficient_data);
}

TEST_CASE("load_sick rejects malformed rows", "[data]") {
    oracle::TempDir tmp;
    const std::string header =
        "pair_ID\tsentence_A\tsentence_B\trelatedness_score\tentailment_judgment\n";
    oracle::write_file(tmp.file("cols.tsv"), header + "x\ta b\tc d\t4.0\n");
    REQUIRE_THROWS_AS(load_sick(tmp.file("cols.tsv"), 11, -1, 0), malformed_input);

    oracle::write_file(tmp.file("score.tsv"),
                       header + "x\ta b\tc d\tpotato\tNEUTRAL\n");
    REQUIRE_THROWS_AS(load_sick(tmp.file("score.tsv"), 11, -1, 0), malformed_input);

    oracle::write_file(tmp.file("range.tsv"), header + "x\ta b\tc d\t9.5\tNEUTRAL\n");
    REQUIRE_THROWS_AS(load_sick(tmp.file("range.tsv"), 11, -1, 0), malformed_input);

    oracle::write_file(tmp.file("label.tsv"), header + "x\ta b\tc d\t4.0\tMAYBE\n");
    REQUIRE_THROWS_AS(load_sick(tmp.file("label.tsv"), 11, -1, 0), malformed_input);

    oracle::write_file(tmp.file("nohdr.tsv"), "a\tb\tc\n");
    REQUIRE_THROWS_AS(load_sick(tmp.file("nohdr.tsv"), 11, -1, 0), malformed_input);
}

TEST_CASE("bidirectional expansion doubles and relabels", "[data]") {
    ExampleSet set = fabricate(100, 30);
    ExampleSet grown = expand_bidirectional(set);
    REQUIRE(grown.examples.size() == 200);

    // originals first, in order; reversed copies appended
    for (int i = 0; i < 100; ++i) {
        REQUIRE(grown.examples[std::size_t(i)].id == set.examples[std::size_t(i)].id);
        const Example& rev = grown.examples[std::size_t(100 + i)];
        const Example& orig = set.examples[std::size_t(i)];
        REQUIRE(rev.reversed_of == orig.id);
        REQUIRE(rev.premise == orig.hypothesis);
        REQUIRE(rev.hypothesis == orig.premise);
        REQUIRE(rev.relatedness == orig.relatedness);
        if (orig.label == Label::entailment)
            REQUIRE(rev.label == Label::neutral);
        else
            REQUIRE(rev.label == orig.label);
    }
    REQUIRE_THROWS_AS(expand_bidirectional(grown), malformed_input);
}

TEST_CASE("split partitions 100 originals as 70/15/15", "[data]") {
    ExampleSet set = fabricate(100, 30);
    Splits s = split(set, 70, 15, 15, 7);
    REQUIRE(s.train.examples.size() == 70);
    REQUIRE(s.dev.examples.size() == 15);
    REQUIRE(s.test.examples.size() == 15);

    Splits again = split(set, 70, 15, 15, 7);
    for (std::size_t i = 0; i < 70; ++i)
        REQUIRE(s.train.examples[i].id == again.train.examples[i].id);

    std::set<std::string> seen;
    for (const auto* part : {&s.train, &s.dev, &s.test})
        for (const auto& e : part->examples) REQUIRE(seen.insert(e.id).second);
    REQUIRE(seen.size() == 100);
}

TEST_CASE("split keeps reversals with their originals", "[data]") {
    ExampleSet grown = expand_bidirectional(fabricate(100, 30));
    Splits s = split(grown, 70, 15, 15, 3);
    REQUIRE(s.train.examples.size() == 140);
    REQUIRE(s.dev.examples.size() == 30);
    REQUIRE(s.test.examples.size() == 30);
    for (const auto* part : {&s.train, &s.dev, &s.test}) {
        for (std::size_t i = 0; i < part->examples.size(); i += 2) {
            REQUIRE(part->examples[i].reversed_of.empty());
            REQUIRE(part->examples[i + 1].reversed_of == part->examples[i].id);
        }
    }
}

TEST_CASE("split edge cases", "[data]") {
    REQUIRE_THROWS_AS(split(fabricate(100, 0), 70, 15, 16, 0), malformed_input);
    REQUIRE_THROWS_AS(split(fabricate(2, 0), 70, 15, 15, 0), insufficient_data);
    Splits s = split(fabricate(6, 2), 70, 15, 15, 0);
    REQUIRE(s.train.examples.size() == 4);
    REQUIRE(s.dev.examples.size() == 1);
    REQUIRE(s.test.examples.size() == 1);
}

TEST_CASE("jsonl round trip", "[data]") {
    oracle::TempDir tmp;
    ExampleSet grown = expand_bidirectional(fabricate(7, 3));
    write_jsonl(tmp.file("set.jsonl"), grown);
    ExampleSet back = read_jsonl(tmp.file("set.jsonl"));
    REQUIRE(back.expanded);
    REQUIRE(back.examples.size() == grown.examples.size());
    for (std::size_t i = 0; i < back.examples.size(); ++i) {
        REQUIRE(back.examples[i].id == grown.examples[i].id);
        REQUIRE(back.examples[i].premise == grown.examples[i].premise);
        REQUIRE(back.examples[i].hypothesis == grown.examples[i].hypothesis);
        REQUIRE(back.examples[i].relatedness == grown.examples[i].relatedness);
        REQUIRE(back.examples[i].label == grown.examples[i].label);
        REQUIRE(back.examples[i].reversed_of == grown.examples[i].reversed_of);
    }
}

TEST_CASE("duplicate ids are rejected", "[data]") {
    ExampleSet set = fabricate(3, 1);
    set.examples[2].id = set.examples[0].id;
    REQUIRE_THROWS_AS(set.check_unique_ids(), malformed_input);
}

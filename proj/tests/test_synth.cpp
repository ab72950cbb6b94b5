#include "kedit/error.hpp"
#include "kedit/synth_data.hpp"
#include "kedit/tokenizer.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace kedit;

TEST_CASE("world generation is deterministic and well formed") {
    FactWorld a = generate_world(3, 85);
    FactWorld b = generate_world(3, 85);
    CHECK(a.digest() == b.digest());
    CHECK(a.digest() != generate_world(4, 85).digest());
    CHECK(a.entities.size() == 85);
    std::set<std::string> names;
    for (const auto & e : a.entities) {
        CHECK(names.insert(e.name).second);
        CHECK_NOTHROW(encode_text(e.name));
    }
    for (const auto & f : a.facts) {
        CHECK(names.count(f.subject));
        CHECK(names.count(f.object));
    }
    CHECK_THROWS_AS(generate_world(1, 7), ParamError);
}

TEST_CASE("corpus rendering and held-out split") {
    FactWorld w = generate_world(1, 40);
    CHECK(render_corpus(w, 3).size() == 3 * w.facts.size());
    auto split = render_corpus_split(w, 4, 9);
    CHECK(split.train.size() == 3 * w.facts.size());
    CHECK(split.heldout.size() == w.facts.size());
    std::set<std::string> train(split.train.begin(), split.train.end());
    for (const auto & h : split.heldout) CHECK_FALSE(train.count(h));
    CHECK_THROWS_AS(render_corpus(w, 0), ParamError);
    CHECK_THROWS_AS(render_corpus_split(w, 1, 0), ParamError);
}

TEST_CASE("edit dataset properties") {
    FactWorld w = generate_world(1, 85);
    EditDataset d = make_edit_dataset(w, 50, 7);
    REQUIRE(d.size() == 50);
    CHECK(d.world_digest == w.digest());
    std::set<std::string> ids, questions;
    for (const auto & s : d.samples) {
        CHECK(ids.insert(s.id).second);
        CHECK(questions.insert(s.question).second);
        CHECK(s.target != s.old_answer);
        CHECK(s.rephrases.size() == 2);
        CHECK(s.locality_probes.size() == 2);
        for (const auto & r : s.rephrases) CHECK(r != s.question);
        CHECK(s.portability_probe.question.find(s.target) != std::string::npos);
        CHECK(s.question.size() + s.target.size() + 2 <= 64);
        for (const auto & p : s.locality_probes) {
            CHECK(p.question.find(s.target) == std::string::npos);
            CHECK(p.question.find(s.old_answer) == std::string::npos);
        }
    }
    CHECK(make_edit_dataset(w, 50, 7).samples == d.samples);
    CHECK_THROWS_AS(make_edit_dataset(w, w.facts.size(), 7), GenerationError);

    auto qa = make_qa_pairs(w, d, 50, 7);
    CHECK_FALSE(qa.empty());
    for (const auto & p : qa)
        for (const auto & s : d.samples) {
            CHECK(p.question != s.question);
            CHECK(p.expected != s.target);
        }
}

TEST_CASE("jsonl roundtrip and error reporting") {
    FactWorld w = generate_world(2, 60);
    EditDataset d = make_edit_dataset(w, 10, 1);
    auto dir = std::filesystem::temp_directory_path() / "kedit_synth_test";
    std::filesystem::create_directories(dir);
    write_jsonl(d, dir / "edits.jsonl");
    EditDataset back = read_jsonl(dir / "edits.jsonl", w.digest());
    CHECK(back.samples == d.samples);
    CHECK(back.world_digest == w.digest());
    CHECK(sample_from_json(sample_to_json(d.samples[0])) == d.samples[0]);

    {
        std::ofstream out(dir / "bad.jsonl");
        out << sample_to_json(d.samples[0]) << "\n" << R"({"id":"x","question":"q"})" << "\n";
    }
    try {
        read_jsonl(dir / "bad.jsonl");
        FAIL("expected FormatError");
    } catch (const FormatError & e) {
        const std::string msg = e.what();
        CHECK(msg.find(":2") != std::string::npos);
        CHECK(msg.find("target") != std::string::npos);
    }
    {
        std::ofstream out(dir / "dup.jsonl");
        out << sample_to_json(d.samples[0]) << "\n" << sample_to_json(d.samples[0]) << "\n";
    }
    CHECK_THROWS_AS(read_jsonl(dir / "dup.jsonl"), FormatError);

    write_world(w, dir / "world.json");
    CHECK(read_world(dir / "world.json").digest() == w.digest());
    std::filesystem::remove_all(dir);
}

#pragma once

#include "kedit/tiny_lm.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace kedit {

enum class Relation { capital_of, leader_of, currency_of, located_in };
enum class EntityType { country, city, person, currency };

const char * relation_name(Relation r);
Relation relation_from_name(const std::string & name);
const char * entity_type_name(EntityType t);

struct Entity {
    std::string name;
    EntityType type;
};

// (subject, relation, object). capital_of/leader_of/currency_of have a
// country subject; located_in maps a city, person or currency to a country.
struct Fact {
    std::string subject;
    Relation relation;
    std::string object;

    bool operator==(const Fact &) const = default;
};

struct FactWorld {
    std::uint64_t seed = 0;
    std::vector<Entity> entities;
    std::vector<Fact> facts;

    const Entity & entity(const std::string & name) const;
    std::string digest() const;
};

FactWorld generate_world(std::uint64_t seed, std::size_t n_entities);

// Number of distinct surface templates available per relation.
constexpr std::size_t k_templates_per_relation = 5;

std::string render_fact(const Fact & f, std::size_t template_index);

// Each fact rendered through templates 0..templates_per_fact-1.
std::vector<std::string> render_corpus(const FactWorld & w, std::size_t templates_per_fact);

struct CorpusSplit {
    std::vector<std::string> train;
    std::vector<std::string> heldout;
};

// Renders the corpus and moves one randomly chosen template line per fact into
// the held-out split (facts stay known through their other templates).
CorpusSplit render_corpus_split(const FactWorld & w, std::size_t templates_per_fact, std::uint64_t seed);

struct Probe {
    std::string question;
    std::string expected;

    bool operator==(const Probe &) const = default;
};

struct EditSample {
    std::string id;
    std::string question;
    std::string target;
    std::vector<std::string> rephrases;
    Probe portability_probe;
    std::vector<Probe> locality_probes;
    std::string old_answer;

    SupervisedExample example() const;
    bool operator==(const EditSample &) const = default;
};

struct EditDataset {
    std::vector<EditSample> samples;
    std::string world_digest;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

// Question text for a (subject, relation) pair, ending in "A: ".
std::string question_for(const std::string & subject, Relation r, std::size_t form = 0);

EditDataset make_edit_dataset(const FactWorld & w, std::size_t n_edits, std::uint64_t seed);

// QA pairs over unedited facts that do not mention any edit target.
std::vector<Probe> make_qa_pairs(const FactWorld & w, const EditDataset & data, std::size_t max_pairs,
                                 std::uint64_t seed);

void write_jsonl(const EditDataset & d, const std::filesystem::path & path);
// world_digest is not part of the line schema; pass it when known.
EditDataset read_jsonl(const std::filesystem::path & path, const std::string & world_digest = "");

std::string sample_to_json(const EditSample & s);
EditSample sample_from_json(const std::string & line);

void write_world(const FactWorld & w, const std::filesystem::path & path);
FactWorld read_world(const std::filesystem::path & path);

void write_lines(const std::vector<std::string> & lines, const std::filesystem::path & path);
std::vector<std::string> read_lines(const std::filesystem::path & path);

std::vector<std::vector<int>> encode_corpus(const std::vector<std::string> & lines);

}  // namespace kedit

#include "kedit/synth_data.hpp"

#include "kedit/checkpoint.hpp"
#include "kedit/error.hpp"
#include "kedit/tokenizer.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace kedit {

using nlohmann::json;

namespace {

constexpr std::array<Relation, 4> k_relations = {Relation::capital_of, Relation::leader_of, Relation::currency_of,
                                                  Relation::located_in};

EntityType object_type(Relation r) {
    switch (r) {
        case Relation::capital_of: return EntityType::city;
        case Relation::leader_of: return EntityType::person;
        case Relation::currency_of: return EntityType::currency;
        case Relation::located_in: return EntityType::country;
    }
    return EntityType::country;
}

// {s} and {o} placeholders.
const std::array<const char *, k_templates_per_relation> & templates(Relation r) {
    static const std::array<const char *, k_templates_per_relation> capital = {
        "The capital of {s} is {o}.",
        "Q: What is the capital of {s}? A: {o}",
        "{o} is the capital of {s}.",
        "Q: Which city is the capital of {s}? A: {o}",
        "Q: {o} is the capital of which country? A: {s}",
    };
    static const std::array<const char *, k_templates_per_relation> leader = {
        "The leader of {s} is {o}.",
        "Q: Who is the leader of {s}? A: {o}",
        "{o} is the leader of {s}.",
        "Q: Who leads {s}? A: {o}",
        "Q: {o} is the leader of which country? A: {s}",
    };
    static const std::array<const char *, k_templates_per_relation> currency = {
        "The currency of {s} is {o}.",
        "Q: What is the currency of {s}? A: {o}",
        "{o} is the currency of {s}.",
        "Q: Which currency is used in {s}? A: {o}",
        "Q: {o} is the currency of which country? A: {s}",
    };
    static const std::array<const char *, k_templates_per_relation> located = {
        "{s} is located in {o}.",
        "Q: Where is {s} located? A: {o}",
        "{s} is in {o}.",
        "Q: In which country is {s}? A: {o}",
        "Q: What country is {s} in? A: {o}",
    };
    switch (r) {
        case Relation::capital_of: return capital;
        case Relation::leader_of: return leader;
        case Relation::currency_of: return currency;
        case Relation::located_in: return located;
    }
    return capital;
}

// Question forms: 0 is the edit question, 1-2 are rephrases.
const std::array<const char *, 3> & question_forms(Relation r) {
    static const std::array<const char *, 3> capital = {"Q: What is the capital of {s}? A: ",
                                                        "Q: Which city is the capital of {s}? A: ",
                                                        "Q: Name the capital of {s}. A: "};
    static const std::array<const char *, 3> leader = {"Q: Who is the leader of {s}? A: ", "Q: Who leads {s}? A: ",
                                                       "Q: Name the leader of {s}. A: "};
    static const std::array<const char *, 3> currency = {"Q: What is the currency of {s}? A: ",
                                                         "Q: Which currency is used in {s}? A: ",
                                                         "Q: Name the currency of {s}. A: "};
    static const std::array<const char *, 3> located = {"Q: Where is {s} located? A: ",
                                                        "Q: In which country is {s}? A: ",
                                                        "Q: What country is {s} in? A: "};
    switch (r) {
        case Relation::capital_of: return capital;
        case Relation::leader_of: return leader;
        case Relation::currency_of: return currency;
        case Relation::located_in: return located;
    }
    return capital;
}

std::string inverse_question(Relation r, const std::string & object) {
    switch (r) {
        case Relation::capital_of: return "Q: " + object + " is the capital of which country? A: ";
        case Relation::leader_of: return "Q: " + object + " is the leader of which country? A: ";
        case Relation::currency_of: return "Q: " + object + " is the currency of which country? A: ";
        case Relation::located_in: break;
    }
    throw GenerationError("located_in has no functional inverse question");
}

std::string substitute(const char * pattern, const std::string & s, const std::string & o) {
    std::string out;
    for (const char * p = pattern; *p; ++p) {
        if (p[0] == '{' && p[1] && p[2] == '}' && (p[1] == 's' || p[1] == 'o')) {
            out += p[1] == 's' ? s : o;
            p += 2;
        } else {
            out.push_back(*p);
        }
    }
    return out;
}

std::string make_name(std::mt19937_64 & rng) {
    static const char * onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
                                    "br", "dr", "gr", "kr", "st", "th", "sh", "tr"};
    static const char * vowels[] = {"a", "e", "i", "o", "u", "ai", "ea", "ou"};
    static const char * codas[] = {"", "", "", "n", "r", "l", "s", "th", "nd", "x"};
    auto pick = [&](auto & arr) {
        const auto n = std::size(arr);
        return std::string(arr[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
    };
    const int syllables = std::uniform_int_distribution<int>(2, 3)(rng);
    std::string name;
    for (int i = 0; i < syllables; ++i) {
        name += pick(onsets) + pick(vowels);
    }
    name += pick(codas);
    if (name.size() > 12) {
        name.resize(12);
    }
    name[0] = static_cast<char>(name[0] - 'a' + 'A');
    return name;
}

}  // namespace

const char * relation_name(Relation r) {
    switch (r) {
        case Relation::capital_of: return "capital_of";
        case Relation::leader_of: return "leader_of";
        case Relation::currency_of: return "currency_of";
        case Relation::located_in: return "located_in";
    }
    return "?";
}

Relation relation_from_name(const std::string & name) {
    for (auto r : k_relations) {
        if (name == relation_name(r)) {
            return r;
        }
    }
    throw InputError("unknown relation '" + name + "'");
}

const char * entity_type_name(EntityType t) {
    switch (t) {
        case EntityType::country: return "country";
        case EntityType::city: return "city";
        case EntityType::person: return "person";
        case EntityType::currency: return "currency";
    }
    return "?";
}

static EntityType entity_type_from_name(const std::string & name) {
    for (auto t : {EntityType::country, EntityType::city, EntityType::person, EntityType::currency}) {
        if (name == entity_type_name(t)) {
            return t;
        }
    }
    throw InputError("unknown entity type '" + name + "'");
}

const Entity & FactWorld::entity(const std::string & name) const {
    for (const auto & e : entities) {
        if (e.name == name) {
            return e;
        }
    }
    throw InputError("world has no entity '" + name + "'");
}

std::string FactWorld::digest() const {
    std::ostringstream os;
    os << "seed=" << seed << "\n";
    for (const auto & e : entities) {
        os << "entity " << e.name << " " << entity_type_name(e.type) << "\n";
    }
    for (const auto & f : facts) {
        os << "fact " << f.subject << " " << relation_name(f.relation) << " " << f.object << "\n";
    }
    return sha256_hex(os.str());
}

FactWorld generate_world(std::uint64_t seed, std::size_t n_entities) {
    if (n_entities < 8) {
        throw ParamError("generate_world needs n_entities >= 8, got " + std::to_string(n_entities));
    }
    std::mt19937_64 rng(seed);
    std::set<std::string> used;
    std::vector<std::string> names;
    while (names.size() < n_entities) {
        auto n = make_name(rng);
        if (used.insert(n).second) {
            names.push_back(std::move(n));
        }
    }

    const std::size_t n_countries = std::max<std::size_t>(1, n_entities / 5);
    FactWorld w;
    w.seed = seed;
    std::size_t next = 0;
    std::vector<std::string> countries;
    for (std::size_t i = 0; i < n_countries; ++i) {
        countries.push_back(names[next]);
        w.entities.push_back({names[next++], EntityType::country});
    }
    std::uniform_int_distribution<std::size_t> pick_country(0, n_countries - 1);
    std::vector<Fact> located;
    for (std::size_t i = 0; i < n_countries; ++i) {
        const std::array<std::pair<Relation, EntityType>, 3> roles = {
            std::pair{Relation::capital_of, EntityType::city}, std::pair{Relation::leader_of, EntityType::person},
            std::pair{Relation::currency_of, EntityType::currency}};
        for (const auto & [rel, type] : roles) {
            const std::string & obj = names[next++];
            w.entities.push_back({obj, type});
            w.facts.push_back({countries[i], rel, obj});
            located.push_back({obj, Relation::located_in, countries[i]});
        }
    }
    // remaining entities are spare cities/persons/currencies, placed in a random country
    const std::array<EntityType, 3> spare_types = {EntityType::city, EntityType::person, EntityType::currency};
    for (std::size_t k = 0; next < n_entities; ++k) {
        const std::string & obj = names[next++];
        w.entities.push_back({obj, spare_types[k % 3]});
        located.push_back({obj, Relation::located_in, countries[pick_country(rng)]});
    }
    w.facts.insert(w.facts.end(), located.begin(), located.end());
    return w;
}

std::string render_fact(const Fact & f, std::size_t template_index) {
    if (template_index >= k_templates_per_relation) {
        throw ParamError("template index out of range");
    }
    return substitute(templates(f.relation)[template_index], f.subject, f.object);
}

std::vector<std::string> render_corpus(const FactWorld & w, std::size_t templates_per_fact) {
    if (templates_per_fact < 1 || templates_per_fact > k_templates_per_relation) {
        throw ParamError("templates_per_fact must lie in [1, " + std::to_string(k_templates_per_relation) + "]");
    }
    std::vector<std::string> lines;
    for (const auto & f : w.facts) {
        for (std::size_t t = 0; t < templates_per_fact; ++t) {
            lines.push_back(render_fact(f, t));
        }
    }
    return lines;
}

CorpusSplit render_corpus_split(const FactWorld & w, std::size_t templates_per_fact, std::uint64_t seed) {
    if (templates_per_fact < 2) {
        throw ParamError("a held-out split needs templates_per_fact >= 2");
    }
    const auto lines = render_corpus(w, templates_per_fact);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_int_distribution<std::size_t> pick(0, templates_per_fact - 1);
    CorpusSplit split;
    for (std::size_t f = 0; f < w.facts.size(); ++f) {
        const std::size_t held = pick(rng);
        for (std::size_t t = 0; t < templates_per_fact; ++t) {
            (t == held ? split.heldout : split.train).push_back(lines[f * templates_per_fact + t]);
        }
    }
    return split;
}

std::string question_for(const std::string & subject, Relation r, std::size_t form) {
    if (form >= 3) {
        throw ParamError("question form out of range");
    }
    return substitute(question_forms(r)[form], subject, "");
}

SupervisedExample EditSample::example() const {
    return {encode_prompt(question), encode_answer(target)};
}

static bool positionally_disjoint(const std::string & a, const std::string & b) {
    const auto x = encode_text(a);
    const auto y = encode_text(b);
    for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i) {
        if (x[i] == y[i]) {
            return false;
        }
    }
    return true;
}

EditDataset make_edit_dataset(const FactWorld & w, std::size_t n_edits, std::uint64_t seed) {
    EditDataset d;
    d.world_digest = w.digest();
    if (n_edits == 0) {
        return d;
    }
    if (n_edits > w.facts.size() / 2) {
        throw GenerationError("n_edits (" + std::to_string(n_edits) + ") exceeds half the fact count (" +
                              std::to_string(w.facts.size()) + ")");
    }
    std::vector<std::size_t> editable;
    for (std::size_t i = 0; i < w.facts.size(); ++i) {
        if (w.facts[i].relation != Relation::located_in) {
            editable.push_back(i);
        }
    }
    if (n_edits > editable.size()) {
        throw GenerationError("world has only " + std::to_string(editable.size()) + " editable facts");
    }
    std::mt19937_64 rng(seed);
    std::shuffle(editable.begin(), editable.end(), rng);
    editable.resize(n_edits);

    // counterfactual objects: same-type entities that are not already the object of that relation
    std::map<Relation, std::vector<std::string>> pool;
    for (Relation r : {Relation::capital_of, Relation::leader_of, Relation::currency_of}) {
        std::set<std::string> taken;
        for (const auto & f : w.facts) {
            if (f.relation == r) {
                taken.insert(f.object);
            }
        }
        for (const auto & e : w.entities) {
            if (e.type == object_type(r) && !taken.count(e.name)) {
                pool[r].push_back(e.name);
            }
        }
        std::shuffle(pool[r].begin(), pool[r].end(), rng);
    }
    std::map<Relation, std::size_t> cursor;

    std::set<std::string> edited_subjects;
    for (std::size_t i : editable) {
        edited_subjects.insert(w.facts[i].subject);
    }
    std::vector<std::size_t> unedited;
    for (std::size_t i = 0; i < w.facts.size(); ++i) {
        if (!edited_subjects.count(w.facts[i].subject)) {
            unedited.push_back(i);
        }
    }

    for (std::size_t n = 0; n < editable.size(); ++n) {
        const Fact & f = w.facts[editable[n]];
        const auto & candidates = pool[f.relation];
        if (candidates.empty()) {
            throw GenerationError(std::string("no counterfactual candidates for relation ") + relation_name(f.relation));
        }
        // Prefer a target that shares no character position with the old
        // answer, so the unedited model scores ~0 on it.
        std::size_t & c = cursor[f.relation];
        std::size_t pick = c;
        for (std::size_t j = 0; j < candidates.size(); ++j) {
            if (positionally_disjoint(candidates[(c + j) % candidates.size()], f.object)) {
                pick = c + j;
                break;
            }
        }
        const std::string target = candidates[pick % candidates.size()];
        c = pick + 1;

        EditSample s;
        char id[32];
        std::snprintf(id, sizeof(id), "edit-%04zu", n);
        s.id = id;
        s.question = question_for(f.subject, f.relation, 0);
        s.target = target;
        s.rephrases = {question_for(f.subject, f.relation, 1), question_for(f.subject, f.relation, 2)};
        s.portability_probe = {inverse_question(f.relation, target), f.subject};
        s.old_answer = f.object;

        std::vector<std::size_t> local;
        for (std::size_t i : unedited) {
            const Fact & u = w.facts[i];
            if (u.subject != target && u.subject != f.object && u.object != f.subject) {
                local.push_back(i);
            }
        }
        if (local.size() < 2) {
            throw GenerationError("cannot build two locality probes for " + s.id);
        }
        std::shuffle(local.begin(), local.end(), rng);
        for (std::size_t j = 0; j < 2; ++j) {
            const Fact & u = w.facts[local[j]];
            s.locality_probes.push_back({question_for(u.subject, u.relation, 0), u.object});
        }
        d.samples.push_back(std::move(s));
    }
    return d;
}

std::vector<Probe> make_qa_pairs(const FactWorld & w, const EditDataset & data, std::size_t max_pairs,
                                 std::uint64_t seed) {
    std::set<std::string> edit_questions;
    std::set<std::string> targets;
    for (const auto & s : data.samples) {
        edit_questions.insert(s.question);
        targets.insert(s.target);
    }
    std::vector<Probe> pairs;
    for (const auto & f : w.facts) {
        Probe p{question_for(f.subject, f.relation, 0), f.object};
        if (!edit_questions.count(p.question) && !targets.count(f.subject) && !targets.count(f.object)) {
            pairs.push_back(std::move(p));
        }
    }
    std::mt19937_64 rng(seed ^ 0x51ed2701f3a5c7b3ull);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    if (pairs.size() > max_pairs) {
        pairs.resize(max_pairs);
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// persistence
// ---------------------------------------------------------------------------

namespace {

json probe_json(const Probe & p) {
    return json{{"question", p.question}, {"expected", p.expected}};
}

template <class T>
T required(const json & j, const std::string & key, const std::string & where) {
    if (!j.is_object() || !j.contains(key)) {
        throw FormatError(where + ": missing required field '" + key + "'");
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception &) {
        throw FormatError(where + ": field '" + key + "' has the wrong type");
    }
}

Probe probe_from(const json & j, const std::string & where) {
    return {required<std::string>(j, "question", where), required<std::string>(j, "expected", where)};
}

}  // namespace

std::string sample_to_json(const EditSample & s) {
    json loc = json::array();
    for (const auto & p : s.locality_probes) {
        loc.push_back(probe_json(p));
    }
    json j{{"id", s.id},
           {"question", s.question},
           {"target", s.target},
           {"rephrases", s.rephrases},
           {"portability_probe", probe_json(s.portability_probe)},
           {"locality_probes", loc},
           {"old_answer", s.old_answer}};
    return j.dump();
}

EditSample sample_from_json(const std::string & line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception & e) {
        throw FormatError(std::string("invalid JSON: ") + e.what());
    }
    const std::string where = "edit sample";
    EditSample s;
    s.id = required<std::string>(j, "id", where);
    s.question = required<std::string>(j, "question", where);
    s.target = required<std::string>(j, "target", where);
    s.rephrases = required<std::vector<std::string>>(j, "rephrases", where);
    s.portability_probe = probe_from(required<json>(j, "portability_probe", where), where + " portability_probe");
    const auto loc = required<json>(j, "locality_probes", where);
    if (!loc.is_array()) {
        throw FormatError(where + ": field 'locality_probes' has the wrong type");
    }
    for (const auto & p : loc) {
        s.locality_probes.push_back(probe_from(p, where + " locality_probes"));
    }
    s.old_answer = required<std::string>(j, "old_answer", where);
    return s;
}

void write_jsonl(const EditDataset & d, const std::filesystem::path & path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw IoError("cannot open for writing: " + path.string());
    }
    for (const auto & s : d.samples) {
        f << sample_to_json(s) << "\n";
    }
    if (!f) {
        throw IoError("failed writing: " + path.string());
    }
}

EditDataset read_jsonl(const std::filesystem::path & path, const std::string & world_digest) {
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot open for reading: " + path.string());
    }
    EditDataset d;
    d.world_digest = world_digest;
    std::set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            d.samples.push_back(sample_from_json(line));
        } catch (const FormatError & e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!ids.insert(d.samples.back().id).second) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": duplicate sample id '" +
                              d.samples.back().id + "'");
        }
    }
    return d;
}

void write_world(const FactWorld & w, const std::filesystem::path & path) {
    json ents = json::array();
    for (const auto & e : w.entities) {
        ents.push_back({{"name", e.name}, {"type", entity_type_name(e.type)}});
    }
    json facts = json::array();
    for (const auto & f : w.facts) {
        facts.push_back({{"subject", f.subject}, {"relation", relation_name(f.relation)}, {"object", f.object}});
    }
    json j{{"seed", w.seed}, {"digest", w.digest()}, {"entities", ents}, {"facts", facts}};
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw IoError("cannot open for writing: " + path.string());
    }
    f << j.dump(1) << "\n";
}

FactWorld read_world(const std::filesystem::path & path) {
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot open for reading: " + path.string());
    }
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception & e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    const std::string where = path.string();
    FactWorld w;
    w.seed = required<std::uint64_t>(j, "seed", where);
    for (const auto & e : required<json>(j, "entities", where)) {
        w.entities.push_back({required<std::string>(e, "name", where),
                              entity_type_from_name(required<std::string>(e, "type", where))});
    }
    for (const auto & fj : required<json>(j, "facts", where)) {
        w.facts.push_back({required<std::string>(fj, "subject", where),
                           relation_from_name(required<std::string>(fj, "relation", where)),
                           required<std::string>(fj, "object", where)});
    }
    return w;
}

void write_lines(const std::vector<std::string> & lines, const std::filesystem::path & path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw IoError("cannot open for writing: " + path.string());
    }
    for (const auto & l : lines) {
        f << l << "\n";
    }
}

std::vector<std::string> read_lines(const std::filesystem::path & path) {
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot open for reading: " + path.string());
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty()) {
            lines.push_back(line);
        }
    }
    return lines;
}

std::vector<std::vector<int>> encode_corpus(const std::vector<std::string> & lines) {
    std::vector<std::vector<int>> out;
    out.reserve(lines.size());
    for (const auto & l : lines) {
        out.push_back(encode_line(l));
    }
    return out;
}

}  // namespace kedit

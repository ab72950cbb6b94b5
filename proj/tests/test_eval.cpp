#include "kedit/edit_eval.hpp"
#include "kedit/error.hpp"
#include "kedit/rsft.hpp"
#include "kedit/tokenizer.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace kedit;

TEST_CASE("token match score") {
    const std::vector<int> t{1, 2, 3, 4};
    CHECK(token_match_score(t, t) == 1.0);
    CHECK(token_match_score(std::vector<int>{1, 2}, t) == 0.5);
    CHECK(token_match_score(std::vector<int>{1, 9, 3, 4, 5, 6}, t) == 0.75);
    CHECK(token_match_score(std::vector<int>{}, t) == 0.0);
    CHECK_THROWS_AS(token_match_score(t, std::vector<int>{}), InputError);
}

TEST_CASE("exact match and F1") {
    CHECK(normalize_answer("  Hello   World ") == "hello world");
    CHECK(exact_match("Vek ", "vek") == 1);
    CHECK(exact_match("Vek Tal", "vek") == 0);
    CHECK(f1_score("a b c", "a b c") == 1.0);
    CHECK(f1_score("a b", "c d") == 0.0);
    CHECK(f1_score("a b c d", "a b") == doctest::Approx(2.0 / 3.0));
    CHECK(f1_score("b a a", "a a b") == f1_score("a a b", "b a a"));
}

TEST_CASE("n-gram entropy fluency") {
    CHECK(ngram_entropy_fluency("a a a a") == 0.0);
    CHECK(ngram_entropy_fluency("a b") == 0.0);
    const double h2 = -(0.6 * std::log2(0.6) + 0.4 * std::log2(0.4));
    CHECK(ngram_entropy_fluency("a b a b a b") == doctest::Approx(h2 / 3.0 + 2.0 / 3.0));
    CHECK(ngram_entropy_fluency("a b a b a b") == doctest::Approx(0.99033).epsilon(1e-4));
    // four distinct bigrams and three distinct trigrams, each once
    CHECK(ngram_entropy_fluency("a b c d e") == doctest::Approx(2.0 / 3.0 + 2.0 / 3.0 * std::log2(3.0)));
}

namespace {

EditDataset one_edit() {
    EditSample s;
    s.id = "edit-0000";
    s.question = "Q: What is the capital of Renax? A: ";
    s.target = "Vek";
    s.rephrases = {"Q: Renax has which capital? A: "};
    s.portability_probe = {"Q: Vek is the capital of which country? A: ", "Renax"};
    s.locality_probes = {{"Q: Where is Tal located? A: ", "Bo"}};
    s.old_answer = "Kig";
    return {{s}, ""};
}

}  // namespace

TEST_CASE("identity edit keeps locality at 100") {
    TinyLm m = TinyLm::init_random(testing::small_config());
    auto r = evaluate_editing(m, m, one_edit());
    CHECK(r.locality == 100.0);
    CHECK(r.edit_success < 5.0);
    auto again = evaluate_editing(m, m, one_edit());
    CHECK(again.csv_row() == r.csv_row());
}

TEST_CASE("a model trained to emit the target scores 100") {
    TinyLm base = TinyLm::init_random(testing::small_config());
    EditDataset d = one_edit();
    RsftConfig cfg;
    cfg.eta = 0.5;
    cfg.epochs = 60;
    cfg.tau = 0.01;
    cfg.selector = ParamSelector::all();
    TinyLm oracle(base.config(), rsft_train(base, d, cfg).sft);
    REQUIRE(decode_tokens(oracle.greedy_decode(encode_prompt(d.samples[0].question), 16)) == "Vek");
    CHECK(evaluate_editing(oracle, base, d).edit_success == 100.0);
}

TEST_CASE("general evaluation") {
    TinyLm m = TinyLm::init_random(testing::small_config());
    m.weights().at("head.w").fill(0.0f);
    std::vector<std::vector<int>> heldout{encode_line("abc def"), encode_line("ghi")};
    std::vector<Probe> qa{{"Q: x? A: ", "y"}};
    auto g = evaluate_general(m, heldout, qa);
    CHECK(g.ppl == doctest::Approx(128.0).epsilon(0.005));
    CHECK(g.em == 0.0);
    CHECK_THROWS_AS(evaluate_general(m, {}, qa), ParamError);

    TinyLmConfig other = testing::small_config();
    other.d_ffn = 16;
    CHECK_THROWS_AS(evaluate_editing(m, TinyLm::init_random(other), one_edit()), ConfigError);
}

TEST_CASE("report serialization") {
    MetricsReport r;
    r.label = "edited";
    r.edit_success = 97.5;
    CHECK(MetricsReport::csv_header() == "label,succ,gen,port,loc,flu,ppl,em,f1,fingerprint");
    CHECK(r.csv_row().rfind("edited,97.5000,", 0) == 0);
    CHECK(r.to_json().find("\"edit_success\":97.5") != std::string::npos);
}

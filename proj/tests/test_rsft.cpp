#include "kedit/error.hpp"
#include "kedit/rsft.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace kedit;

namespace {

// L(theta) = theta^2 on a single scalar.
struct Parabola : StepObjective {
    double theta = 1.0;
    int descents = 0;
    double loss() override { return theta * theta; }
    void descend(double eta) override {
        theta -= eta * 2.0 * theta;
        ++descents;
    }
};

struct NanObjective : StepObjective {
    double loss() override { return std::numeric_limits<double>::quiet_NaN(); }
    void descend(double) override {}
};

EditDataset tiny_dataset(std::size_t n) {
    const char * subjects[] = {"Renax", "Bo", "Kigu", "Lomu", "Tal"};
    const char * targets[] = {"Vek", "Suti", "Mora", "Pel", "Dan"};
    EditDataset d;
    for (std::size_t i = 0; i < n; ++i) {
        EditSample s;
        s.id = "edit-" + std::to_string(i);
        s.question = std::string("Q: What is the capital of ") + subjects[i % 5] + "? A: ";
        s.target = targets[i % 5];
        d.samples.push_back(s);
    }
    return d;
}

}  // namespace

TEST_CASE("hand-traced probe: two updates then break") {
    Parabola p;
    RsftConfig cfg;
    cfg.eta = 0.25;
    cfg.max_steps = 3;
    cfg.tau = 0.1;
    std::int64_t t = 0;
    auto r = sample_inner_loop(p, cfg, t);
    CHECK(r.steps_taken == 2);
    CHECK(t == 2);
    CHECK(r.stopped_early);
    REQUIRE(r.loss_trace.size() == 3);
    CHECK(r.loss_trace[0] == 1.0);
    CHECK(r.loss_trace[1] == 0.25);
    CHECK(r.loss_trace[2] == 0.0625);
    CHECK(p.theta == 0.25);
}

TEST_CASE("threshold above the initial loss performs no update") {
    Parabola p;
    RsftConfig cfg;
    cfg.tau = 2.0;
    std::int64_t t = 0;
    auto r = sample_inner_loop(p, cfg, t);
    CHECK(r.steps_taken == 0);
    CHECK(t == 0);
    CHECK(p.theta == 1.0);
}

TEST_CASE("K=1 above threshold takes exactly one step; disabled early stop uses all K") {
    Parabola p;
    RsftConfig cfg;
    cfg.eta = 0.25;
    cfg.max_steps = 1;
    std::int64_t t = 0;
    CHECK(sample_inner_loop(p, cfg, t).steps_taken == 1);

    Parabola q;
    cfg.max_steps = 5;
    cfg.early_stop = false;
    t = 0;
    auto r = sample_inner_loop(q, cfg, t);
    CHECK(r.steps_taken == 5);
    CHECK_FALSE(r.stopped_early);
}

TEST_CASE("non-finite loss aborts with the sample id") {
    NanObjective o;
    RsftConfig cfg;
    std::int64_t t = 0;
    try {
        sample_inner_loop(o, cfg, t, "edit-0042");
        FAIL("expected NumericError");
    } catch (const NumericError & e) {
        CHECK(std::string(e.what()).find("edit-0042") != std::string::npos);
    }
}

TEST_CASE("config validation") {
    RsftConfig c;
    c.eta = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.tau = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.max_steps = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("rsft_train step accounting and isolation") {
    TinyLm base = TinyLm::init_random(testing::small_config());
    EditDataset data = tiny_dataset(4);
    RsftConfig cfg;
    cfg.eta = 0.05;
    cfg.epochs = 3;
    cfg.max_steps = 4;
    cfg.tau = 2.5;

    auto res = rsft_train(base, data, cfg);
    CHECK(res.log.global_steps <= 3 * 4 * 4);
    CHECK(res.log.records.size() == 12);
    std::int64_t sum = 0;
    for (const auto & rec : res.log.records) {
        sum += rec.steps_taken;
        CHECK(rec.steps_taken <= cfg.max_steps);
        if (rec.stopped_early) CHECK(rec.loss_trace.back() < cfg.tau);
    }
    CHECK(sum == res.log.global_steps);
    for (const auto & [name, t] : base.weights()) {
        if (name.rfind("layers.5.ffn.", 0) == 0) continue;
        CHECK(tensor_digest(res.sft.at(name)) == tensor_digest(t));
    }
    CHECK(state_digest(res.sft) != state_digest(base.weights()));

    cfg.early_stop = false;
    auto full = rsft_train(base, data, cfg);
    CHECK(full.log.global_steps == 3 * 4 * 4);

    cfg.early_stop = true;
    cfg.tau = 1e6;
    cfg.epochs = 1;
    auto none = rsft_train(base, data, cfg);
    CHECK(none.log.global_steps == 0);
    CHECK(state_digest(none.sft) == state_digest(base.weights()));
}

TEST_CASE("rsft lowers the loss of every sample") {
    TinyLm base = TinyLm::init_random(testing::small_config());
    EditDataset data = tiny_dataset(3);
    RsftConfig cfg;
    cfg.eta = 0.1;
    auto res = rsft_train(base, data, cfg);
    TinyLm sft(base.config(), res.sft);
    for (const auto & s : data.samples) CHECK(sft.sequence_nll(s.example()) < base.sequence_nll(s.example()));
    CHECK_THROWS(rsft_train(base, EditDataset{}, cfg));
}

TEST_CASE("rsft is deterministic") {
    TinyLm base = TinyLm::init_random(testing::small_config());
    EditDataset data = tiny_dataset(2);
    RsftConfig cfg;
    cfg.eta = 0.05;
    CHECK(rsft_train(base, data, cfg).sft.bit_equal(rsft_train(base, data, cfg).sft));
}

#include "kedit/error.hpp"
#include "kedit/grad.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace kedit;

TEST_CASE("selector matching") {
    TinyLm m = TinyLm::init_random(testing::small_config());
    auto names = ParamSelector::ffn_of_layer(5).select(m.weights());
    CHECK(names == std::vector<std::string>{"layers.5.ffn.b1", "layers.5.ffn.b2", "layers.5.ffn.w1", "layers.5.ffn.w2"});
    CHECK_THROWS_AS(ParamSelector::ffn_of_layer(9).select(m.weights()), ConfigError);
    CHECK(ParamSelector::all().select(m.weights()).size() == m.weights().size());
    CHECK(ParamSelector::ffn_of_layers({1, 5}).select(m.weights()).size() == 8);
}

TEST_CASE("grad_subset loss equals sequence_nll and keys equal the selection") {
    TinyLm m = TinyLm::init_random(testing::small_config());
    auto ex = testing::example("Q: Who leads Renax? A: ", "Suti");
    auto lg = grad_subset(m, ex, ParamSelector::ffn_of_layer(5));
    CHECK(lg.loss == doctest::Approx(m.sequence_nll(ex)).epsilon(1e-6));
    CHECK(lg.grads.size() == 4);
    for (const auto & [name, g] : lg.grads) {
        CHECK(g.shape() == m.weights().at(name).shape());
        CHECK(g.all_finite());
    }
}

// eps = 1e-4 keeps the O(eps^2) truncation error of central differences
// below the tolerance even on coordinates whose gradient nearly cancels.
TEST_CASE("analytic gradient matches finite differences") {
    const char * qs[] = {"Q: a? A: ", "Where is Kig? A: ", "Renax uses ", "The capital of Bo is "};
    const char * as[] = {"Lomu", "Renax", "Tal", "Vek"};
    for (std::uint64_t seed : {1u, 2u}) {
        TinyLm m = TinyLm::init_random(testing::small_config(seed));
        for (int i = 0; i < 4; ++i) {
            auto ex = testing::example(qs[i], as[i]);
            FiniteDiffOptions opts;
            opts.seed = seed * 10 + i;
            double err = finite_diff_check(m, ex, ParamSelector::ffn_of_layer(5), 1e-4, opts);
            CHECK(err <= 1e-3);
        }
        // Gradients below the edited layer flow through attention and norms too.
        auto ex = testing::example(qs[0], as[0]);
        CHECK(finite_diff_check(m, ex, ParamSelector::all(), 1e-4, {8, seed}) <= 2e-3);
    }
}

TEST_CASE("a doubled gradient is detected") {
    TinyLm m = TinyLm::init_random(testing::small_config(4));
    auto ex = testing::example("Q: b? A: ", "Mo");
    auto lg = grad_subset(m, ex, ParamSelector::ffn_of_layer(5));
    for (auto & [name, g] : lg.grads)
        for (float & v : g.data()) v *= 2.0f;
    auto rep = compare_with_finite_differences(m, ex, lg.grads, 1e-3);
    CHECK(rep.max_rel_error == doctest::Approx(0.5).epsilon(0.01));
    CHECK_THROWS_AS(finite_diff_check(m, ex, ParamSelector::ffn_of_layer(5), 0.0), ParamError);
}

TEST_CASE("saturated prediction gives a vanishing gradient") {
    TinyLm m = TinyLm::init_random(testing::small_config());
    auto & w = m.weights();
    w.at("ln_f.gain").fill(0.01f);
    w.at("ln_f.bias").fill(0.0f);
    w.at("ln_f.bias")[0] = 1.0f;
    w.at("head.w").fill(0.0f);
    w.at("head.w")['x'] = 60.0f;  // row 0, column 'x'
    SupervisedExample ex{encode_prompt("Q: "), {'x', 'x'}};
    auto lg = grad_subset(m, ex, ParamSelector::ffn_of_layer(5));
    double ss = 0;
    for (const auto & [n, g] : lg.grads)
        for (float v : g.data()) ss += double(v) * v;
    CHECK(lg.loss < 1e-6);
    CHECK(std::sqrt(ss) < 1e-4);
}

TEST_CASE("sgd_step") {
    StateDict s;
    s.set("w", Tensor({1}, {0.0f}));
    s.set("other", Tensor({2}, {1.0f, 2.0f}));
    const std::string other_digest = tensor_digest(s.at("other"));
    auto loss = [&] { return std::pow(s.at("w")[0] - 3.0, 2); };
    const double before = loss();
    GradMap g{{"w", Tensor({1}, {float(2.0 * (s.at("w")[0] - 3.0))})}};
    sgd_step(s, g, 0.1);
    CHECK(loss() < before);
    CHECK(s.at("w")[0] == doctest::Approx(0.6));
    CHECK(tensor_digest(s.at("other")) == other_digest);

    const std::string w_digest = tensor_digest(s.at("w"));
    sgd_step(s, {{"w", Tensor({1})}}, 0.5);
    CHECK(tensor_digest(s.at("w")) == w_digest);

    CHECK_THROWS_AS(sgd_step(s, g, 0.0), ParamError);
    CHECK_THROWS_AS(sgd_step(s, {{"w", Tensor({2})}}, 0.1), ShapeError);
}

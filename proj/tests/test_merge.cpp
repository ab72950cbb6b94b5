#include "kedit/error.hpp"
#include "kedit/merge.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace kedit;

namespace {

std::pair<StateDict, StateDict> random_pair(std::mt19937_64 & rng) {
    StateDict base, sft;
    for (int i = 0; i < 3; ++i) {
        Tensor b = testing::random_tensor(rng, testing::random_shape(rng, 64));
        Tensor d = testing::random_tensor(rng, b.shape(), 0.1f);
        base.set("t" + std::to_string(i), b);
        sft.set("t" + std::to_string(i), scale_add(b, d, 1.0f));
    }
    return {base, sft};
}

double max_abs_diff(const StateDict & a, const StateDict & b) {
    double m = 0;
    for (const auto & [name, t] : a)
        for (std::size_t i = 0; i < t.numel(); ++i) m = std::max(m, std::fabs(double(t[i]) - b.at(name)[i]));
    return m;
}

}  // namespace

TEST_CASE("merge settings validation") {
    MergeSpec s;
    CHECK_NOTHROW(s.validate());
    s.alpha = 1.0;
    CHECK_THROWS_AS(s.validate(), ParamError);
    s.test_mode = true;
    CHECK_NOTHROW(s.validate());
    s.alpha = 1.5;
    CHECK_THROWS_AS(s.validate(), ParamError);
    s = {};
    s.keep_fraction = 0.0;
    CHECK_THROWS_AS(s.validate(), ParamError);
}

TEST_CASE("unpruned delta merge equals the weighted average") {
    std::mt19937_64 rng(21);
    for (int i = 0; i < 20; ++i) {
        auto [base, sft] = random_pair(rng);
        MergeSpec s;
        s.alpha = 0.3;
        s.keep_fraction = 1.0;
        CHECK(max_abs_diff(merge(base, knowledge_delta(sft, base), s), weighted_average(base, sft, 0.3)) <= 1e-6);
    }
}

TEST_CASE("endpoints") {
    std::mt19937_64 rng(22);
    auto [base, sft] = random_pair(rng);
    auto d = knowledge_delta(sft, base);
    MergeSpec s;
    s.test_mode = true;
    s.alpha = 1.0;
    s.keep_fraction = 0.2;
    StateDict m = merge(base, d, s);
    for (const auto & [name, t] : base) CHECK(m.at(name).bit_equal(t));
    s.alpha = 0.0;
    s.keep_fraction = 1.0;
    CHECK(max_abs_diff(merge(base, d, s), sft) <= 1e-6);
}

TEST_CASE("pruned merge keeps ceil(p * numel) entries of each delta") {
    std::mt19937_64 rng(23);
    auto [base, sft] = random_pair(rng);
    auto d = knowledge_delta(sft, base);
    auto pruned = prune_delta(d, 0.2);
    for (const auto & [name, t] : pruned.entries) CHECK(count_nonzero(t) == kept_count(t.numel(), 0.2));
    MergeSpec s;
    StateDict m = merge(base, d, s);
    CHECK(m.meta().at("stage") == "merge");
    CHECK(m.meta().at("merge.base_digest") == state_digest(base));
    CHECK(m.meta().at("merge.sft_digest") == state_digest(sft));
    for (const auto & [name, t] : m) {
        const Tensor & p = pruned.entries.at(name);
        for (std::size_t i = 0; i < t.numel(); ++i)
            if (p[i] == 0.0f) CHECK(t[i] == base.at(name)[i]);
    }
}

TEST_CASE("delta omits unchanged tensors and rejects structural mismatch") {
    StateDict base, sft;
    base.set("a", Tensor({2}, {1, 2}));
    base.set("b", Tensor({2}, {3, 4}));
    sft = base;
    sft.at("b")[1] = 5;
    auto d = knowledge_delta(sft, base);
    CHECK(d.entries.size() == 1);
    CHECK(d.entries.count("b") == 1);

    MergeSpec s;
    s.keep_fraction = 1.0;
    s.scope = ParamSelector{{"a"}};
    CHECK(merge(base, d, s).at("b").bit_equal(base.at("b")));

    StateDict wrong = base;
    wrong.set("a", Tensor({3}));
    CHECK_THROWS_AS(knowledge_delta(wrong, base), ShapeError);
    StateDict extra = base;
    extra.set("c", Tensor({1}));
    CHECK_THROWS_AS(knowledge_delta(extra, base), ShapeError);
}

TEST_CASE("merge report") {
    StateDict base, sft;
    base.set("w", Tensor({2, 5}));
    sft.set("w", Tensor({2, 5}, {0, 0, 3, 0, -4, 0, 0, 0, 0, 0}));
    auto rows = merge_report(knowledge_delta(sft, base), 0.2);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].numel == 10);
    CHECK(rows[0].kept == 2);
    CHECK(rows[0].delta_l2 == doctest::Approx(5.0));
    CHECK(rows[0].max_abs_delta == doctest::Approx(4.0));
    auto path = std::filesystem::temp_directory_path() / "kedit_merge_report.csv";
    write_merge_report(rows, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "tensor,numel,kept,delta_l2,max_abs_delta");
    std::filesystem::remove(path);
}

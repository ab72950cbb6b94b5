#include "kedit/error.hpp"
#include "kedit/tensor.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace kedit;

TEST_CASE("tensor construction validates shapes") {
    CHECK_THROWS_AS(Tensor(Shape{}), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape{3, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<float>(3)), ShapeError);
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(count_nonzero(t) == 0);
    CHECK(shape_str(t.shape()) == "[2x3]");
}

TEST_CASE("bit_equal distinguishes signed zero") {
    Tensor a({2}, {0.0f, 1.0f});
    Tensor b({2}, {-0.0f, 1.0f});
    CHECK_FALSE(a.bit_equal(b));
    CHECK(a.bit_equal(Tensor({2}, {0.0f, 1.0f})));
    CHECK_FALSE(a.bit_equal(Tensor({1, 2}, {0.0f, 1.0f})));
}

TEST_CASE("kept_count is ceil(p * numel) within [1, numel]") {
    CHECK(kept_count(10, 0.2) == 2);
    CHECK(kept_count(10, 0.25) == 3);
    CHECK(kept_count(30, 0.1) == 3);
    CHECK(kept_count(7, 1.0) == 7);
    CHECK(kept_count(3, 0.01) == 1);
    CHECK_THROWS_AS(kept_count(10, 0.0), ParamError);
    CHECK_THROWS_AS(kept_count(10, 1.5), ParamError);
}

TEST_CASE("topk mask keeps largest magnitudes and breaks ties by index") {
    Tensor m({2, 3}, {1.0f, -5.0f, 2.0f, 5.0f, 0.0f, -2.0f});
    auto mask = topk_magnitude_mask(m, 0.5);
    CHECK(mask.popcount() == 3);
    // |-5| and |5| tie, both kept; |2| and |-2| tie, index 2 wins.
    CHECK(mask.bits == std::vector<std::uint8_t>{0, 1, 1, 1, 0, 0});
    Tensor pruned = apply_mask(m, mask);
    CHECK(pruned.bit_equal(Tensor({2, 3}, {0.0f, -5.0f, 2.0f, 5.0f, 0.0f, 0.0f})));
}

TEST_CASE("topk mask matches a stable-sort oracle") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        Tensor m = testing::random_tensor(rng, testing::random_shape(rng, 16));
        // duplicate magnitudes to exercise tie breaking
        for (std::size_t i = 1; i < m.numel(); i += 3) m[i] = -m[i - 1];
        for (double p : {0.05, 0.2, 0.5, 1.0}) {
            std::vector<std::size_t> idx(m.numel());
            std::iota(idx.begin(), idx.end(), 0);
            std::stable_sort(idx.begin(), idx.end(),
                             [&](std::size_t a, std::size_t b) { return std::fabs(m[a]) > std::fabs(m[b]); });
            const std::size_t k = kept_count(m.numel(), p);
            std::vector<std::uint8_t> want(m.numel(), 0);
            for (std::size_t i = 0; i < k; ++i) want[idx[i]] = 1;
            CHECK(topk_magnitude_mask(m, p).bits == want);
        }
    }
}

TEST_CASE("scale_add") {
    Tensor a({3}, {1.0f, -0.0f, 2.0f});
    Tensor b({3}, {1.0f, 1.0f, 1.0f});
    CHECK(scale_add(a, b, 0.0f).bit_equal(a));
    CHECK(scale_add(a, b, 2.0f).bit_equal(Tensor({3}, {3.0f, 2.0f, 4.0f})));
    CHECK_THROWS_AS(scale_add(a, Tensor({2}), 1.0f), ShapeError);
    Tensor huge({1}, {3e38f});
    CHECK_THROWS_AS(scale_add(huge, huge, 1.0f), NumericError);
}

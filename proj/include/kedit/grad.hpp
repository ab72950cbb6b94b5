#pragma once

#include "kedit/checkpoint.hpp"
#include "kedit/tiny_lm.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace kedit {

// Selects tensors whose name starts with any of the prefixes.
struct ParamSelector {
    std::vector<std::string> name_prefixes;

    static ParamSelector ffn_of_layer(int layer) { return {{ffn_prefix(layer)}}; }
    static ParamSelector ffn_of_layers(const std::vector<int> & layers);
    static ParamSelector all() { return {{""}}; }

    bool matches(const std::string & name) const;
    // Matching names in canonical order. Throws ConfigError when nothing matches.
    std::vector<std::string> select(const StateDict & s) const;
    std::string describe() const;
};

using GradMap = std::map<std::string, Tensor>;

struct LossAndGrad {
    double loss = 0.0;
    GradMap grads;
};

// d(sequence_nll)/d(theta) for the selected tensors only.
LossAndGrad grad_subset(const TinyLm & m, const SupervisedExample & ex, const ParamSelector & sel);

struct FiniteDiffOptions {
    std::size_t coords_per_tensor = 64;
    std::uint64_t seed = 0;
};

struct FiniteDiffReport {
    double max_rel_error = 0.0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
    std::size_t coords_checked = 0;
};

// Compares `analytic` to central differences of the loss (evaluated in double
// precision) on a random subsample of coordinates per tensor. Relative error
// uses max(|analytic|, |numeric|, 1e-8) as denominator.
FiniteDiffReport compare_with_finite_differences(const TinyLm & m, const SupervisedExample & ex,
                                                 const GradMap & analytic, double eps,
                                                 const FiniteDiffOptions & opts = {});

// grad_subset checked against finite differences; returns the max relative error.
double finite_diff_check(const TinyLm & m, const SupervisedExample & ex, const ParamSelector & sel, double eps,
                         const FiniteDiffOptions & opts = {});

// theta <- theta - eta * g on the tensors named in g; all others untouched.
void sgd_step(StateDict & weights, const GradMap & g, double eta);

}  // namespace kedit

#pragma once

#include "kedit/tiny_lm.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace kedit {

// Manufactures the "foundation model": all parameters trained with Adam on the
// rendered corpus until held-out perplexity stops improving.
struct PretrainConfig {
    double lr = 8e-3;
    int batch = 8;
    int max_steps = 3000;
    int min_steps = 0;
    int eval_every = 200;
    // stop when the best held-out ppl improved by less than this (relative)
    // over `patience` consecutive evaluations
    double plateau_rel = 0.01;
    int patience = 3;
    int warmup = 50;
    std::uint64_t seed = 0;
};

struct PretrainResult {
    int steps = 0;
    std::vector<double> heldout_ppl;  // one entry per evaluation
    double final_train_loss = 0.0;
};

using PretrainProgress = std::function<void(int step, double train_loss, double heldout_ppl)>;

PretrainResult pretrain(TinyLm & model, const std::vector<std::vector<int>> & train,
                        const std::vector<std::vector<int>> & heldout, const PretrainConfig & cfg,
                        const PretrainProgress & progress = {});

}  // namespace kedit

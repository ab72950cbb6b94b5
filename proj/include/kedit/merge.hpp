#pragma once

#include "kedit/checkpoint.hpp"
#include "kedit/grad.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kedit {

struct MergeSpec {
    double alpha = 0.8;          // weight of the base model
    double keep_fraction = 0.2;  // fraction of delta entries retained per tensor
    std::optional<ParamSelector> scope;  // unset: every tensor that differs
    // Accepts alpha in {0, 1}; production merges require 0 < alpha < 1.
    bool test_mode = false;

    void validate() const;
};

// theta_sft - theta_base, restricted to tensors with any nonzero difference.
struct KnowledgeDelta {
    std::map<std::string, Tensor> entries;
    std::string base_digest;
    std::string sft_digest;

    bool empty() const { return entries.empty(); }
};

KnowledgeDelta knowledge_delta(const StateDict & sft, const StateDict & base);

// Per-tensor top-k magnitude pruning, k = ceil(p * numel).
KnowledgeDelta prune_delta(const KnowledgeDelta & d, double keep_fraction);

// base + (1 - alpha) * prune(delta) on merged tensors; others copied from base.
StateDict merge(const StateDict & base, const KnowledgeDelta & d, const MergeSpec & spec);

// alpha * base + (1 - alpha) * sft over every tensor (no pruning).
StateDict weighted_average(const StateDict & base, const StateDict & sft, double alpha);

struct MergeReportRow {
    std::string tensor;
    std::size_t numel = 0;
    std::size_t kept = 0;
    double delta_l2 = 0.0;
    double max_abs_delta = 0.0;
};

std::vector<MergeReportRow> merge_report(const KnowledgeDelta & d, double keep_fraction);
void write_merge_report(const std::vector<MergeReportRow> & rows, const std::filesystem::path & path);

}  // namespace kedit

#pragma once

#include "kedit/synth_data.hpp"
#include "kedit/tiny_lm.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kedit {

struct MetricsReport {
    std::string label;
    double edit_success = 0.0;    // percent
    double generalization = 0.0;  // percent
    double portability = 0.0;     // percent
    double locality = 0.0;        // percent
    double fluency = 0.0;         // weighted bi/tri-gram entropy, bits
    double general_ppl = 0.0;
    double qa_em = 0.0;           // percent
    double qa_f1 = 0.0;           // percent
    std::string fingerprint;

    static std::string csv_header();
    std::string csv_row() const;
    std::string to_json() const;
};

// Fraction of target positions where pred matches; pred is truncated or
// padded to the target length and padding never matches.
double token_match_score(std::span<const int> pred, std::span<const int> target);

// Trim, collapse internal whitespace runs, ASCII case-fold.
std::string normalize_answer(std::string_view text);
int exact_match(std::string_view pred, std::string_view truth);
// Multiset overlap of whitespace tokens of the normalized texts.
double f1_score(std::string_view pred, std::string_view truth);

// (1/3) H2 + (2/3) H3 over empirical bigram/trigram frequencies, log base 2.
// Fewer than three tokens score 0.
double ngram_entropy_fluency(const std::vector<std::string> & tokens);
// Whitespace tokenization of `text`.
double ngram_entropy_fluency(std::string_view text);

struct EvalOptions {
    std::size_t max_new = 16;
};

// Edit success, generalization, portability, locality and fluency of `edited`
// relative to the pre-edit model `base`.
MetricsReport evaluate_editing(const TinyLm & edited, const TinyLm & base, const EditDataset & data,
                               const EvalOptions & opts = {});

struct GeneralScores {
    double ppl = 0.0;
    double em = 0.0;  // percent
    double f1 = 0.0;  // percent
};

GeneralScores evaluate_general(const TinyLm & m, const std::vector<std::vector<int>> & heldout,
                               const std::vector<Probe> & qa, const EvalOptions & opts = {});

}  // namespace kedit

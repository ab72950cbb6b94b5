#pragma once

#include "kedit/checkpoint.hpp"
#include "kedit/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace kedit {

struct TinyLmConfig {
    int vocab_size = 128;
    int d_model = 64;
    int n_layers = 8;
    int n_heads = 4;
    int d_ffn = 256;
    int max_seq_len = 64;
    std::uint64_t seed = 0;

    void validate() const;
    void to_meta(StateDict::Meta & meta) const;
    static TinyLmConfig from_meta(const StateDict::Meta & meta);
    // Architecture-only fingerprint (seed excluded): two models with the same
    // fingerprint can share weights.
    std::string fingerprint() const;

    bool operator==(const TinyLmConfig &) const = default;
};

// Canonical tensor naming scheme, in canonical (lexicographic) order:
//   tok_emb [V,D], pos_emb [S,D], head.w [D,V], ln_f.{gain,bias} [D]
//   layers.<l>.ln1.{gain,bias} [D]
//   layers.<l>.attn.{wq,wk,wv,wo} [D,D]
//   layers.<l>.ln2.{gain,bias} [D]
//   layers.<l>.ffn.w1 [D,F], layers.<l>.ffn.b1 [F]
//   layers.<l>.ffn.w2 [F,D], layers.<l>.ffn.b2 [D]
// Linear weights are stored [in, out] and applied as x * W.
std::vector<std::pair<std::string, Shape>> parameter_layout(const TinyLmConfig & cfg);
std::string ffn_prefix(int layer);

// A (prompt, target) pair of token ids. The loss is over target positions only.
struct SupervisedExample {
    std::vector<int> prompt;
    std::vector<int> target;
};

// Pre-norm decoder-only transformer with learned positional embeddings and a
// GELU feed-forward block. Single sequence, no batching, no KV cache.
class TinyLm {
  public:
    TinyLm(TinyLmConfig cfg, StateDict weights);

    static TinyLm init_random(const TinyLmConfig & cfg);

    const TinyLmConfig & config() const { return cfg_; }
    const StateDict & weights() const { return weights_; }
    StateDict & weights() { return weights_; }

    // [len x vocab] logits.
    Tensor forward_logits(std::span<const int> tokens) const;

    // Mean over target positions of -log P(a_t | q, a_<t).
    double sequence_nll(std::span<const int> prompt, std::span<const int> target) const;
    double sequence_nll(const SupervisedExample & ex) const { return sequence_nll(ex.prompt, ex.target); }

    // Argmax decoding (ties -> lowest id). Stops at EOS (not returned), at
    // max_new tokens, or when the context is full.
    std::vector<int> greedy_decode(std::span<const int> prompt, std::size_t max_new) const;

    // exp of the token-weighted mean next-token NLL over all sequences.
    double perplexity(const std::vector<std::vector<int>> & corpus) const;

    void check_tokens(std::span<const int> tokens) const;

  private:
    TinyLmConfig cfg_;
    StateDict weights_;
};

}  // namespace kedit

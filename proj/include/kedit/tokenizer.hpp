#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kedit {

// Character-level tokenizer over printable ASCII. Ids 32..126 are the
// characters themselves; the control range carries the specials.
namespace tokens {
constexpr int pad = 0;
constexpr int bos = 1;
constexpr int eos = 2;
constexpr int first_char = 32;
constexpr int last_char = 126;
constexpr int min_vocab = 128;
}  // namespace tokens

bool is_text_char(char c);

// Throws InputError on characters outside the alphabet.
std::vector<int> encode_text(std::string_view text);
// Specials are dropped.
std::string decode_tokens(std::span<const int> ids);

// [BOS] + text: the conditioning context for a question or corpus line.
std::vector<int> encode_prompt(std::string_view text);
// text + [EOS]: the supervised continuation.
std::vector<int> encode_answer(std::string_view text);
// [BOS] + text + [EOS]: a full corpus line.
std::vector<int> encode_line(std::string_view text);

}  // namespace kedit

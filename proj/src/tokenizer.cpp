#include "kedit/tokenizer.hpp"

#include "kedit/error.hpp"

namespace kedit {

bool is_text_char(char c) {
    const int v = static_cast<unsigned char>(c);
    return v >= tokens::first_char && v <= tokens::last_char;
}

std::vector<int> encode_text(std::string_view text) {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (!is_text_char(text[i])) {
            throw InputError("character at offset " + std::to_string(i) + " is outside the tokenizer alphabet");
        }
        ids.push_back(static_cast<unsigned char>(text[i]));
    }
    return ids;
}

std::string decode_tokens(std::span<const int> ids) {
    std::string out;
    for (int id : ids) {
        if (id >= tokens::first_char && id <= tokens::last_char) {
            out.push_back(static_cast<char>(id));
        }
    }
    return out;
}

std::vector<int> encode_prompt(std::string_view text) {
    std::vector<int> ids{tokens::bos};
    const auto body = encode_text(text);
    ids.insert(ids.end(), body.begin(), body.end());
    return ids;
}

std::vector<int> encode_answer(std::string_view text) {
    auto ids = encode_text(text);
    ids.push_back(tokens::eos);
    return ids;
}

std::vector<int> encode_line(std::string_view text) {
    auto ids = encode_prompt(text);
    ids.push_back(tokens::eos);
    return ids;
}

}  // namespace kedit

#pragma once

#include "kedit/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace kedit {

// Named collection of tensors plus free-form string metadata. std::map keeps
// names in lexicographic order, which is the canonical order for hashing,
// diffing and serialization.
class StateDict {
  public:
    using Entries = std::map<std::string, Tensor>;
    using Meta = std::map<std::string, std::string>;

    void set(const std::string & name, Tensor t);
    bool contains(const std::string & name) const { return entries_.count(name) != 0; }
    const Tensor & at(const std::string & name) const;
    Tensor & at(const std::string & name);
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::vector<std::string> names() const;

    const Entries & entries() const { return entries_; }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    Meta & meta() { return meta_; }
    const Meta & meta() const { return meta_; }

    // Bit-exact equality of tensors and metadata.
    bool bit_equal(const StateDict & other) const;

  private:
    Entries entries_;
    Meta meta_;
};

// Tensor names are non-empty printable ASCII without whitespace or '='.
bool valid_tensor_name(const std::string & name);

// SHA-256 (hex) over shape and little-endian payload.
std::string tensor_digest(const Tensor & t);
// SHA-256 (hex) over every (name, tensor) pair in canonical order; meta excluded.
std::string state_digest(const StateDict & s);
std::string sha256_hex(const std::string & bytes);

// MKC1 container:
//   "MKC1" | u64 LE header length | UTF-8 header | float32 LE payloads
// The header holds key=value lines: counts, one "tensor=" descriptor per tensor
// (name, shape, byte offset into the payload block) and one "meta." line per
// metadata pair with %XX escaping.
std::string encode_checkpoint(const StateDict & s);
StateDict decode_checkpoint(const std::string & bytes);

void write_checkpoint(const StateDict & s, const std::filesystem::path & path);
StateDict read_checkpoint(const std::filesystem::path & path);

}  // namespace kedit

#include "kedit/checkpoint.hpp"
#include "kedit/error.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>

using namespace kedit;

namespace {

StateDict random_state(std::mt19937_64 & rng) {
    StateDict s;
    const std::size_t n = 1 + rng() % 6;
    for (std::size_t i = 0; i < n; ++i)
        s.set("layers." + std::to_string(rng() % 8) + ".t" + std::to_string(i), testing::random_tensor(rng, testing::random_shape(rng, 12)));
    s.meta()["seed"] = std::to_string(rng());
    s.meta()["odd key=%\n"] = "value with = and %25 and\nnewline";
    return s;
}

}  // namespace

TEST_CASE("encode/decode roundtrip is bit exact and stable") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 50; ++i) {
        StateDict s = random_state(rng);
        const std::string bytes = encode_checkpoint(s);
        StateDict back = decode_checkpoint(bytes);
        CHECK(back.bit_equal(s));
        CHECK(encode_checkpoint(back) == bytes);
        CHECK(state_digest(back) == state_digest(s));
    }
}

TEST_CASE("file roundtrip") {
    std::mt19937_64 rng(6);
    StateDict s = random_state(rng);
    auto path = std::filesystem::temp_directory_path() / "kedit_ckpt_roundtrip.mkc";
    write_checkpoint(s, path);
    CHECK(read_checkpoint(path).bit_equal(s));
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_checkpoint(path), IoError);
}

TEST_CASE("every truncation is rejected") {
    std::mt19937_64 rng(7);
    const std::string bytes = encode_checkpoint(random_state(rng));
    for (std::size_t len = 0; len < bytes.size(); ++len) CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, len)), FormatError);
}

TEST_CASE("bad magic, trailing bytes and header damage are rejected") {
    std::mt19937_64 rng(8);
    const std::string bytes = encode_checkpoint(random_state(rng));
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), FormatError);
    std::string huge_len = bytes;
    std::memset(huge_len.data() + 4, 0xff, 8);
    CHECK_THROWS_AS(decode_checkpoint(huge_len), FormatError);
    std::string header_edit = bytes;
    auto pos = header_edit.find("offset=0");
    REQUIRE(pos != std::string::npos);
    header_edit[pos + 7] = '4';
    CHECK_THROWS_AS(decode_checkpoint(header_edit), FormatError);
}

TEST_CASE("tensor names are validated") {
    StateDict s;
    CHECK_THROWS_AS(s.set("bad name", Tensor({1})), InputError);
    CHECK_THROWS_AS(s.set("a=b", Tensor({1})), InputError);
    CHECK_THROWS_AS(s.set("", Tensor({1})), InputError);
    CHECK(valid_tensor_name("layers.5.ffn.w1"));
}

TEST_CASE("digests depend on shape and payload, not metadata") {
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({4}, {1, 2, 3, 4});
    CHECK(tensor_digest(a) != tensor_digest(b));
    StateDict s;
    s.set("x", a);
    StateDict t = s;
    t.meta()["note"] = "different";
    CHECK(state_digest(s) == state_digest(t));
    CHECK_FALSE(s.bit_equal(t));
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

#include "kedit/checkpoint.hpp"

#include "kedit/error.hpp"

#include <openssl/evp.h>

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>

namespace kedit {

namespace {

constexpr char k_magic[4] = {'M', 'K', 'C', '1'};

void put_u32_le(std::string & out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
}

void put_u64_le(std::string & out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
}

std::uint64_t get_u64_le(const unsigned char * p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | p[i];
    }
    return v;
}

std::uint32_t get_u32_le(const unsigned char * p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void append_floats_le(std::string & out, const Tensor & t) {
    if constexpr (std::endian::native == std::endian::little) {
        out.append(reinterpret_cast<const char *>(t.ptr()), t.numel() * sizeof(float));
    } else {
        for (float v : t.data()) {
            put_u32_le(out, std::bit_cast<std::uint32_t>(v));
        }
    }
}

std::string escape(const std::string & s) {
    static const char * hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (c < 0x21 || c == 0x7f || c == '%' || c == '=') {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xf]);
        } else {
            out.push_back(static_cast<char>(c));
        }
    }
    return out;
}

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
}

std::string unescape(const std::string & s, const std::string & field) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '%') {
            out.push_back(s[i]);
            continue;
        }
        if (i + 2 >= s.size()) {
            throw FormatError("checkpoint header: truncated escape in " + field);
        }
        const int hi = hex_value(s[i + 1]);
        const int lo = hex_value(s[i + 2]);
        if (hi < 0 || lo < 0) {
            throw FormatError("checkpoint header: bad escape in " + field);
        }
        out.push_back(static_cast<char>(hi * 16 + lo));
        i += 2;
    }
    return out;
}

std::uint64_t parse_u64(const std::string & s, const std::string & field) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
        throw FormatError("checkpoint header: field '" + field + "' is not an unsigned integer: '" + s + "'");
    }
    return v;
}

std::vector<std::string> split(const std::string & s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    parts.push_back(cur);
    return parts;
}

struct TensorDescriptor {
    std::string name;
    Shape shape;
    std::uint64_t offset = 0;
};

TensorDescriptor parse_descriptor(const std::string & line) {
    // tensor=<name> shape=<d0,d1,...> offset=<bytes>
    TensorDescriptor d;
    bool have_name = false, have_shape = false, have_offset = false;
    for (const auto & tok : split(line, ' ')) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) {
            throw FormatError("checkpoint header: malformed tensor descriptor '" + line + "'");
        }
        const std::string key = tok.substr(0, eq);
        const std::string val = tok.substr(eq + 1);
        if (key == "tensor") {
            d.name = val;
            have_name = true;
        } else if (key == "shape") {
            for (const auto & dim : split(val, ',')) {
                const auto n = parse_u64(dim, "shape");
                if (n == 0) {
                    throw FormatError("checkpoint header: zero dimension in shape of '" + d.name + "'");
                }
                d.shape.push_back(static_cast<std::size_t>(n));
            }
            have_shape = true;
        } else if (key == "offset") {
            d.offset = parse_u64(val, "offset");
            have_offset = true;
        } else {
            throw FormatError("checkpoint header: unknown descriptor field '" + key + "'");
        }
    }
    if (!have_name || !have_shape || !have_offset) {
        throw FormatError("checkpoint header: incomplete tensor descriptor '" + line + "'");
    }
    if (!valid_tensor_name(d.name)) {
        throw FormatError("checkpoint header: invalid tensor name '" + d.name + "'");
    }
    return d;
}

}  // namespace

bool valid_tensor_name(const std::string & name) {
    if (name.empty()) {
        return false;
    }
    for (unsigned char c : name) {
        if (c <= 0x20 || c >= 0x7f || c == '=') {
            return false;
        }
    }
    return true;
}

void StateDict::set(const std::string & name, Tensor t) {
    if (!valid_tensor_name(name)) {
        throw InputError("invalid tensor name '" + name + "'");
    }
    entries_.insert_or_assign(name, std::move(t));
}

const Tensor & StateDict::at(const std::string & name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw InputError("state dict has no tensor named '" + name + "'");
    }
    return it->second;
}

Tensor & StateDict::at(const std::string & name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw InputError("state dict has no tensor named '" + name + "'");
    }
    return it->second;
}

std::vector<std::string> StateDict::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto & [name, _] : entries_) {
        out.push_back(name);
    }
    return out;
}

bool StateDict::bit_equal(const StateDict & other) const {
    if (meta_ != other.meta_ || entries_.size() != other.entries_.size()) {
        return false;
    }
    auto a = entries_.begin();
    auto b = other.entries_.begin();
    for (; a != entries_.end(); ++a, ++b) {
        if (a->first != b->first || !a->second.bit_equal(b->second)) {
            return false;
        }
    }
    return true;
}

std::string sha256_hex(const std::string & bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 digest failed");
    }
    static const char * hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

static std::string tensor_bytes(const Tensor & t) {
    std::string buf = shape_str(t.shape());
    append_floats_le(buf, t);
    return buf;
}

std::string tensor_digest(const Tensor & t) {
    return sha256_hex(tensor_bytes(t));
}

std::string state_digest(const StateDict & s) {
    std::string buf;
    for (const auto & [name, t] : s) {
        buf += name;
        buf.push_back('\0');
        buf += tensor_digest(t);
    }
    return sha256_hex(buf);
}

std::string encode_checkpoint(const StateDict & s) {
    std::ostringstream header;
    header << "format=MKC1\n";
    header << "tensor_count=" << s.size() << "\n";
    header << "meta_count=" << s.meta().size() << "\n";
    std::uint64_t offset = 0;
    for (const auto & [name, t] : s) {
        header << "tensor=" << name << " shape=";
        for (std::size_t i = 0; i < t.shape().size(); ++i) {
            header << (i ? "," : "") << t.shape()[i];
        }
        header << " offset=" << offset << "\n";
        offset += t.numel() * sizeof(float);
    }
    for (const auto & [key, value] : s.meta()) {
        header << "meta." << escape(key) << "=" << escape(value) << "\n";
    }
    const std::string h = header.str();

    std::string out(k_magic, sizeof(k_magic));
    put_u64_le(out, h.size());
    out += h;
    out.reserve(out.size() + offset);
    for (const auto & [_, t] : s) {
        append_floats_le(out, t);
    }
    return out;
}

StateDict decode_checkpoint(const std::string & bytes) {
    const auto * p = reinterpret_cast<const unsigned char *>(bytes.data());
    if (bytes.size() < 4 || std::memcmp(bytes.data(), k_magic, 4) != 0) {
        throw FormatError("checkpoint: bad magic (expected MKC1)");
    }
    if (bytes.size() < 12) {
        throw FormatError("checkpoint: truncated header length");
    }
    const std::uint64_t header_len = get_u64_le(p + 4);
    if (header_len > bytes.size() - 12) {
        throw FormatError("checkpoint: header length " + std::to_string(header_len) + " exceeds file size");
    }
    const std::string header = bytes.substr(12, header_len);
    const std::size_t payload_begin = 12 + header_len;
    const std::size_t payload_size = bytes.size() - payload_begin;

    std::vector<std::string> lines = split(header, '\n');
    if (lines.empty() || !lines.back().empty()) {
        throw FormatError("checkpoint header: missing trailing newline");
    }
    lines.pop_back();
    if (lines.size() < 3 || lines[0] != "format=MKC1") {
        throw FormatError("checkpoint header: missing format line");
    }
    auto expect_count = [](const std::string & line, const std::string & key) {
        if (line.rfind(key + "=", 0) != 0) {
            throw FormatError("checkpoint header: expected field '" + key + "'");
        }
        return parse_u64(line.substr(key.size() + 1), key);
    };
    const std::uint64_t n_tensors = expect_count(lines[1], "tensor_count");
    const std::uint64_t n_meta = expect_count(lines[2], "meta_count");
    if (lines.size() != 3 + n_tensors + n_meta) {
        throw FormatError("checkpoint header: line count does not match tensor_count/meta_count");
    }

    StateDict out;
    std::uint64_t expected_offset = 0;
    std::string prev_name;
    for (std::uint64_t i = 0; i < n_tensors; ++i) {
        const TensorDescriptor d = parse_descriptor(lines[3 + i]);
        if (i > 0 && !(prev_name < d.name)) {
            throw FormatError("checkpoint header: tensor '" + d.name + "' out of canonical order or duplicated");
        }
        if (d.offset != expected_offset) {
            throw FormatError("checkpoint header: offset of tensor '" + d.name + "' is " +
                              std::to_string(d.offset) + ", expected " + std::to_string(expected_offset) +
                              " (overlap or gap)");
        }
        const std::uint64_t nbytes = shape_numel(d.shape) * sizeof(float);
        if (d.offset + nbytes > payload_size) {
            throw FormatError("checkpoint payload truncated in tensor '" + d.name + "'");
        }
        std::vector<float> data(shape_numel(d.shape));
        const unsigned char * src = p + payload_begin + d.offset;
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(data.data(), src, nbytes);
        } else {
            for (std::size_t k = 0; k < data.size(); ++k) {
                data[k] = std::bit_cast<float>(get_u32_le(src + 4 * k));
            }
        }
        out.set(d.name, Tensor(d.shape, std::move(data)));
        expected_offset += nbytes;
        prev_name = d.name;
    }
    if (expected_offset != payload_size) {
        throw FormatError("checkpoint payload has " + std::to_string(payload_size - expected_offset) +
                          " trailing bytes");
    }
    for (std::uint64_t i = 0; i < n_meta; ++i) {
        const std::string & line = lines[3 + n_tensors + i];
        if (line.rfind("meta.", 0) != 0) {
            throw FormatError("checkpoint header: expected meta line, got '" + line + "'");
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError("checkpoint header: meta line without '='");
        }
        const std::string key = unescape(line.substr(5, eq - 5), "meta key");
        const std::string value = unescape(line.substr(eq + 1), "meta value");
        if (!out.meta().emplace(key, value).second) {
            throw FormatError("checkpoint header: duplicate meta key '" + key + "'");
        }
    }
    return out;
}

void write_checkpoint(const StateDict & s, const std::filesystem::path & path) {
    const std::string bytes = encode_checkpoint(s);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw IoError("cannot open checkpoint for writing: " + path.string());
    }
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) {
        throw IoError("failed writing checkpoint: " + path.string());
    }
}

StateDict read_checkpoint(const std::filesystem::path & path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open checkpoint for reading: " + path.string());
    }
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace kedit

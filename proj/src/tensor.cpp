#include "kedit/tensor.hpp"

#include "kedit/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace kedit {

std::string shape_str(const Shape & shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) {
            os << 'x';
        }
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape & shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

static void check_shape(const Shape & shape) {
    if (shape.empty()) {
        throw ShapeError("tensor shape must have at least one dimension");
    }
    for (auto d : shape) {
        if (d == 0) {
            throw ShapeError("tensor shape " + shape_str(shape) + " has a zero dimension");
        }
    }
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_numel(shape_), 0.0f);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    check_shape(shape_);
    if (data_.size() != shape_numel(shape_)) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
    }
}

void Tensor::fill(float v) {
    std::fill(data_.begin(), data_.end(), v);
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

bool Tensor::bit_equal(const Tensor & other) const {
    return shape_ == other.shape_ && data_.size() == other.data_.size() &&
           (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

std::size_t BinaryMask::popcount() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::size_t kept_count(std::size_t numel, double keep_fraction) {
    if (!(keep_fraction > 0.0) || keep_fraction > 1.0) {
        throw ParamError("keep_fraction must lie in (0, 1], got " + std::to_string(keep_fraction));
    }
    const double x = keep_fraction * static_cast<double>(numel);
    const double r = std::round(x);
    const double k = std::abs(x - r) <= 1e-9 * std::max(1.0, x) ? r : std::ceil(x);
    return std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, numel);
}

Tensor scale_add(const Tensor & a, const Tensor & b, double s) {
    if (a.shape() != b.shape()) {
        throw ShapeError("scale_add shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    if (s == 0.0) {
        return a;
    }
    Tensor out(a.shape());
    const float * pa = a.ptr();
    const float * pb = b.ptr();
    float * po = out.ptr();
    for (std::size_t i = 0; i < out.numel(); ++i) {
        po[i] = static_cast<float>(static_cast<double>(pa[i]) + s * pb[i]);
    }
    if (!out.all_finite()) {
        throw NumericError("scale_add produced a non-finite value");
    }
    return out;
}

BinaryMask topk_magnitude_mask(const Tensor & m, double keep_fraction) {
    if (m.empty()) {
        throw ParamError("topk_magnitude_mask on an empty tensor");
    }
    const std::size_t n = m.numel();
    const std::size_t k = kept_count(n, keep_fraction);
    if (!m.all_finite()) {
        throw NumericError("topk_magnitude_mask input contains non-finite values");
    }

    BinaryMask mask{m.shape(), std::vector<std::uint8_t>(n, 0)};
    if (k == n) {
        std::fill(mask.bits.begin(), mask.bits.end(), std::uint8_t{1});
        return mask;
    }

    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    const float * v = m.ptr();
    // strict weak order: larger magnitude first, then lower index
    auto before = [v](std::uint32_t a, std::uint32_t b) {
        const float fa = std::fabs(v[a]);
        const float fb = std::fabs(v[b]);
        return fa > fb || (fa == fb && a < b);
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(), before);
    for (std::size_t i = 0; i < k; ++i) {
        mask.bits[idx[i]] = 1;
    }
    return mask;
}

Tensor apply_mask(const Tensor & m, const BinaryMask & mask) {
    if (m.shape() != mask.shape || mask.bits.size() != m.numel()) {
        throw ShapeError("apply_mask shape mismatch: tensor " + shape_str(m.shape()) + " vs mask " +
                         shape_str(mask.shape));
    }
    Tensor out(m.shape());
    for (std::size_t i = 0; i < m.numel(); ++i) {
        out[i] = mask.bits[i] ? m[i] : 0.0f;
    }
    return out;
}

std::size_t count_nonzero(const Tensor & m) {
    return static_cast<std::size_t>(std::count_if(m.data().begin(), m.data().end(), [](float v) { return v != 0.0f; }));
}

}  // namespace kedit

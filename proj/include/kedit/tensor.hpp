#pragma once

#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace kedit {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape & shape);
std::size_t shape_numel(const Shape & shape);

// 64-byte aligned storage. Vectorized reductions peel a number of leading
// elements that depends on the address, so fixed alignment keeps results
// bit-reproducible regardless of heap state.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};
    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U> &) {}
    T * allocate(std::size_t n) { return static_cast<T *>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T * p, std::size_t) { ::operator delete(p, alignment); }
    template <class U>
    bool operator==(const AlignedAllocator<U> &) const { return true; }
};

// Dense row-major float32 array. Shape entries are all positive.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<float> data);

    const Shape & shape() const { return shape_; }
    std::size_t numel() const { return data_.size(); }
    std::size_t rank() const { return shape_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    float * ptr() { return data_.data(); }
    const float * ptr() const { return data_.data(); }

    float & operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    void fill(float v);
    bool all_finite() const;

    // Bitwise equality of shape and payload (distinguishes -0.0 from +0.0).
    bool bit_equal(const Tensor & other) const;

  private:
    Shape shape_;
    std::vector<float, AlignedAllocator<float>> data_;
};

struct BinaryMask {
    Shape shape;
    std::vector<std::uint8_t> bits;

    std::size_t popcount() const;
};

// Number of entries retained by a top-k selection: ceil(keep_fraction * numel),
// with products that land within rounding noise of an integer snapped to it
// (so 0.1 * 30 keeps 3, not 4).
std::size_t kept_count(std::size_t numel, double keep_fraction);

// result = a + s * b. s == 0 returns a copy of a bit-for-bit.
Tensor scale_add(const Tensor & a, const Tensor & b, double s);

// Keeps the ceil(keep_fraction * numel) largest-magnitude entries. Ties keep
// the lowest flat index.
BinaryMask topk_magnitude_mask(const Tensor & m, double keep_fraction);

Tensor apply_mask(const Tensor & m, const BinaryMask & mask);

std::size_t count_nonzero(const Tensor & m);

}  // namespace kedit

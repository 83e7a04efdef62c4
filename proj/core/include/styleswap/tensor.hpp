#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "styleswap/error.hpp"

namespace styleswap {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Number of elements described by `shape`. Throws ShapeError on an empty
/// shape or any zero extent.
std::size_t shape_size(const Shape& shape);

/// Dense row-major array. Rank 3 tensors are (height, width, channels);
/// rank 4 tensors carry a leading batch or patch index.
///
/// `float` is the working precision. `double` instantiations exist so that
/// finite-difference gradient checks have headroom; on-disk formats are
/// always f32.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
    }
  }

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape), T(0)); }
  static BasicTensor ones(Shape shape) { return BasicTensor(std::move(shape), T(1)); }
  static BasicTensor full(Shape shape, T value) { return BasicTensor(std::move(shape), value); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  // Rank-3 accessors.
  std::size_t height() const { return shape_.at(0); }
  std::size_t width() const { return shape_.at(1); }
  std::size_t channels() const { return shape_.at(2); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  T& at(std::size_t n, std::size_t i, std::size_t j, std::size_t k) {
    return data_[((n * shape_[1] + i) * shape_[2] + j) * shape_[3] + k];
  }
  const T& at(std::size_t n, std::size_t i, std::size_t j, std::size_t k) const {
    return data_[((n * shape_[1] + i) * shape_[2] + j) * shape_[3] + k];
  }

  BasicTensor reshape(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return BasicTensor(std::move(shape), data_);
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Seeded pseudo-random stream. The engine is std::mt19937_64, whose output
/// sequence is fixed by the C++ standard; every derived sample below is
/// computed from raw 64-bit words so no implementation-defined distribution
/// is involved.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), rejection sampled.
  std::size_t below(std::size_t n);

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[below(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// Derives an independent seed from a base seed and a stream index
/// (splitmix64 finaliser).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

template <typename T>
BasicTensor<T> random_uniform(Shape shape, T lo, T hi, Rng& rng) {
  if (!(lo < hi)) throw ConfigError("random_uniform requires lo < hi");
  BasicTensor<T> out(std::move(shape));
  const double span = static_cast<double>(hi) - static_cast<double>(lo);
  for (auto& v : out.data()) {
    T x = static_cast<T>(static_cast<double>(lo) + span * rng.uniform01());
    if (!(x < hi)) x = std::nextafter(hi, lo);
    v = x;
  }
  return out;
}

// Elementwise arithmetic. Binary ops require identical shapes.

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "add");
  BasicTensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "sub");
  BasicTensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "mul");
  BasicTensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  BasicTensor<T> out = a;
  for (auto& v : out.data()) v *= factor;
  return out;
}

/// a += factor * b
template <typename T>
void axpy_inplace(BasicTensor<T>& a, T factor, const BasicTensor<T>& b) {
  require_same_shape(a, b, "axpy");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += factor * b[i];
}

// Reductions accumulate sequentially in double, so results never depend on
// thread count.

template <typename T>
double sum(const BasicTensor<T>& a) {
  double acc = 0.0;
  for (T v : a.data()) acc += static_cast<double>(v);
  return acc;
}

template <typename T>
double mean(const BasicTensor<T>& a) {
  if (a.empty()) throw ShapeError("mean of empty tensor");
  return sum(a) / static_cast<double>(a.size());
}

template <typename T>
T max(const BasicTensor<T>& a) {
  if (a.empty()) throw ShapeError("max of empty tensor");
  return *std::max_element(a.data().begin(), a.data().end());
}

template <typename T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

template <typename T>
double frobenius_norm_sq(const BasicTensor<T>& a) {
  double acc = 0.0;
  for (T v : a.data()) acc += static_cast<double>(v) * static_cast<double>(v);
  return acc;
}

template <typename T>
bool all_finite(const BasicTensor<T>& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](T v) { return std::isfinite(v); });
}

/// Root mean squared difference.
template <typename T>
double rmse(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "rmse");
  return std::sqrt(frobenius_norm_sq(sub(a, b)) / static_cast<double>(a.size()));
}

template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

}  // namespace styleswap

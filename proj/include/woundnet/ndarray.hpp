#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace woundnet {

using Shape = std::vector<std::size_t>;

/// 64-byte aligned storage. Vectorized kernels peel differently depending on
/// where a buffer starts, so fixed alignment keeps results bit-reproducible
/// from run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles tagged with its shape.
class NdArray {
 public:
  NdArray() = default;
  explicit NdArray(Shape shape, double fill = 0.0);
  NdArray(Shape shape, std::vector<double> data);

  static NdArray zeros(Shape shape) { return NdArray(std::move(shape), 0.0); }
  static NdArray full(Shape shape, double v) { return NdArray(std::move(shape), v); }
  static NdArray scalar(double v) { return NdArray(Shape{1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return data_.size() == 1; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double item() const;

  /// 4-D accessor (n, c, h, w).
  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

  NdArray reshaped(Shape shape) const;
  void fill(double v);
  bool all_finite() const;
  /// Throws NumericError naming `what` when any value is NaN/Inf.
  void require_finite(const std::string& what) const;

  /// Bitwise equality of shape and contents.
  bool identical(const NdArray& other) const;

 private:
  Shape shape_;
  Buffer data_;
};

double max_abs(const NdArray& a);
double max_abs_diff(const NdArray& a, const NdArray& b);

}  // namespace woundnet

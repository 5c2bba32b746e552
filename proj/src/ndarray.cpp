#include "woundnet/ndarray.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "woundnet/errors.hpp"

namespace woundnet {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

NdArray::NdArray(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_)
    if (d == 0) throw ShapeError("NdArray: zero dimension in " + shape_str(shape_));
  data_.assign(shape_size(shape_), fill);
}

NdArray::NdArray(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  for (auto d : shape_)
    if (d == 0) throw ShapeError("NdArray: zero dimension in " + shape_str(shape_));
  if (shape_size(shape_) != data_.size())
    throw ShapeError("NdArray: shape " + shape_str(shape_) + " needs " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(data_.size()));
}

std::size_t NdArray::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw ShapeError("NdArray: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(shape_));
  return shape_[axis];
}

double NdArray::item() const {
  if (!is_scalar()) throw ContractError("NdArray::item on non-scalar " + shape_str(shape_));
  return data_[0];
}

double& NdArray::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

double NdArray::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

NdArray NdArray::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size())
    throw ShapeError("reshape: " + shape_str(shape_) + " -> " + shape_str(shape));
  NdArray out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

void NdArray::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool NdArray::all_finite() const {
  // v * 0 is NaN exactly for NaN and +-Inf; the branch-free sum vectorizes
  double probe = 0.0;
  for (double v : data_) probe += v * 0.0;
  return probe == 0.0;
}

void NdArray::require_finite(const std::string& what) const {
  if (!all_finite()) throw NumericError(what + ": non-finite value in " + shape_str(shape_));
}

bool NdArray::identical(const NdArray& other) const {
  return shape_ == other.shape_ &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

double max_abs(const NdArray& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const NdArray& a, const NdArray& b) {
  if (a.shape() != b.shape())
    throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace woundnet

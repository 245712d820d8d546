#include "dasc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dasc/error.hpp"

namespace dasc {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice_batch(int begin, int count) const {
  if (rank() < 1 || begin < 0 || count < 0 || begin + count > shape_[0]) {
    throw ShapeError("batch slice out of range for " + shape_str(shape_));
  }
  Shape s = shape_;
  s[0] = count;
  const std::size_t per = shape_[0] ? data_.size() / shape_[0] : 0;
  std::vector<double> d(data_.begin() + static_cast<std::ptrdiff_t>(per * begin),
                        data_.begin() + static_cast<std::ptrdiff_t>(per * (begin + count)));
  return Tensor(std::move(s), std::move(d));
}

Tensor Tensor::slice_channels(int begin, int count) const {
  if (rank() != 4 || begin < 0 || count < 0 || begin + count > c()) {
    throw ShapeError("channel slice out of range for " + shape_str(shape_));
  }
  Tensor out({n(), count, h(), w()});
  const std::size_t p = plane();
  for (int i = 0; i < n(); ++i) {
    const double* src = data() + (static_cast<std::size_t>(i) * c() + begin) * p;
    std::copy(src, src + count * p, out.data() + static_cast<std::size_t>(i) * count * p);
  }
  return out;
}

void Tensor::require_shape(const Shape& expected, const char* what) const {
  if (shape_ != expected) {
    throw ShapeError(std::string(what) + ": expected shape " + shape_str(expected) + ", got " +
                     shape_str(shape_));
  }
}

Tensor concat_batch(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_batch: no parts");
  Shape s = parts[0].shape();
  int total = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = s;
    a[0] = b[0] = 0;
    if (a != b) throw ShapeError("concat_batch: mismatched shapes " + shape_str(p.shape()) + " vs " + shape_str(s));
    total += p.dim(0);
  }
  s[0] = total;
  std::vector<double> d;
  d.reserve(shape_numel(s));
  for (const auto& p : parts) d.insert(d.end(), p.vec().begin(), p.vec().end());
  return Tensor(std::move(s), std::move(d));
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.vec().begin(), t.vec().end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace dasc

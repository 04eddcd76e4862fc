#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace amrec {

/**
 * Dense row-major array of doubles with an explicit shape, rank 1 to 4.
 *
 * Shape conventions used throughout the library:
 *   images        (rows, cols)
 *   sinograms     (views, detectors)
 *   feature maps  (channels, rows, cols)
 *   conv kernels  (out_channels, in_channels, kernel_h, kernel_w)
 *
 * Entries must stay finite. Constructors taking external values reject
 * NaN/Inf, and the numeric kernels re-check their outputs, so a non-finite
 * value anywhere is reported at the operation that produced it instead of
 * surfacing later as a silent wrong answer.
 */
class Tensor {
public:
  Tensor() = default;

  // Zero-filled tensor of the given shape.
  explicit Tensor(std::vector<std::size_t> shape);

  // Takes ownership of values; count must match the shape product and all
  // entries must be finite.
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor full(std::vector<std::size_t> shape, double value);

  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const;
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  // Flat element access.
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  // Unchecked multi-index access; callers validate shapes up front.
  double& operator()(std::size_t i, std::size_t j) {
    return values_[i * shape_[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return values_[i * shape_[1] + j];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return values_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return values_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return values_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return values_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

// Throws InvariantFailure naming `what` if any entry is NaN or Inf.
void ensure_finite(const Tensor& t, const std::string& what);

// Elementwise helpers. All of them validate matching shapes.
double dot(const Tensor& a, const Tensor& b);
double norm2sq(const Tensor& a);
double norm2(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// a *= s, in place
void scale(double s, Tensor& a);
// y += a*x
void axpy(double a, const Tensor& x, Tensor& y);

} // namespace amrec

#include "amrec/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "amrec/errors.hpp"

namespace amrec {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw ValidationError("Tensor: rank must be between 1 and 4");
  }
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw ValidationError("Tensor: zero extent in shape");
    n *= e;
  }
  return n;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ValidationError(std::string(op) + ": shape mismatch " +
                          shape_string(a.shape()) + " vs " +
                          shape_string(b.shape()));
  }
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), values_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_product(shape_)) {
    throw ValidationError("Tensor: value count does not match shape " +
                          shape_string(shape_));
  }
  ensure_finite(*this, "Tensor construction");
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t(std::move(shape));
  for (double& v : t.values_) v = value;
  ensure_finite(t, "Tensor::full");
  return t;
}

std::size_t Tensor::extent(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ValidationError("Tensor::extent: axis out of range");
  }
  return shape_[axis];
}

void ensure_finite(const Tensor& t, const std::string& what) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) {
      throw InvariantFailure(what + ": non-finite value encountered");
    }
  }
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) s += pa[i] * pb[i];
  return s;
}

double norm2sq(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return s;
}

double norm2(const Tensor& a) { return std::sqrt(norm2sq(a)); }

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  double* po = out.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] += pb[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  double* po = out.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] -= pb[i];
  return out;
}

void scale(double s, Tensor& a) {
  for (double& v : a.values()) v *= s;
}

void axpy(double a, const Tensor& x, Tensor& y) {
  require_same_shape(x, y, "axpy");
  double* py = y.data();
  const double* px = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) py[i] += a * px[i];
}

} // namespace amrec

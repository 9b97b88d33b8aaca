#include "svnet/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace svnet {

Tensor::Tensor(std::vector<int> shp, double fill) : shape(std::move(shp)) {
  const std::int64_t n = shape_numel(shape);
  if (n < 0) throw std::invalid_argument("Tensor: nonpositive extent in " + shape_str(shape));
  data.assign(static_cast<std::size_t>(n), fill);
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.shape = {1};
  t.data = {v};
  return t;
}

Tensor Tensor::vec(std::vector<double> v) {
  Tensor t;
  t.shape = {static_cast<int>(v.size())};
  t.data = std::move(v);
  return t;
}

Tensor Tensor::mat(int rows, int cols, std::vector<double> v) {
  if (static_cast<std::size_t>(rows) * cols != v.size())
    throw std::invalid_argument("Tensor::mat: data size does not match rows*cols");
  Tensor t;
  t.shape = {rows, cols};
  t.data = std::move(v);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) return -1;
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

}  // namespace svnet

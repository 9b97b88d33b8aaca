#ifndef SVNET_TENSOR_HPP_
#define SVNET_TENSOR_HPP_

#include <cstdint>
#include <initializer_list>
#include <map>
#include <string>
#include <vector>

namespace svnet {

// Dense row-major array of 64-bit reals. Immutable by convention once it
// leaves a constructor/builder: shared freely across threads, never mutated
// in place by graph code.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shp, double fill = 0.0);

  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> v);                 // shape [n]
  static Tensor mat(int rows, int cols, std::vector<double> v);

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

  // 2-D accessors (row-major).
  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * shape[1] + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
};

// std::map keeps iteration order deterministic (sorted by name), which the
// reproducibility guarantees rely on.
using TensorMap = std::map<std::string, Tensor>;

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

}  // namespace svnet

#endif  // SVNET_TENSOR_HPP_

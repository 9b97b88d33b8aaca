#ifndef SVNET_GRADCHECK_HPP_
#define SVNET_GRADCHECK_HPP_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "svnet/graph.hpp"
#include "svnet/tensor.hpp"

namespace svnet::ad {

struct GradReport {
  struct PerParam {
    std::string name;
    double max_abs_err = 0.0;
    double max_rel_err = 0.0;
  };
  std::vector<PerParam> params;
  double epsilon = 0.0;
  double tolerance = 0.0;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  bool pass = false;

  std::string summary() const;
};

// Builds a scalar-valued graph over the named point tensors. The builder must
// register every tensor in `point` as a gradient-tracked input (same names)
// and return the id of the scalar output node.
using GraphBuilder = std::function<int(Graph&, const TensorMap&)>;

// Central finite differences (f(x+eps e) - f(x-eps e)) / (2 eps) per
// coordinate of every tensor in `point`, compared against reverse-mode
// gradients. Relative error is |analytic - numeric| / max(|analytic|,
// |numeric|, 1), so coordinates with tiny gradients are judged on absolute
// error. Throws if the built graph output is not scalar.
GradReport finite_diff_check(const GraphBuilder& build, const TensorMap& point,
                             double epsilon, double tolerance);

}  // namespace svnet::ad

#endif  // SVNET_GRADCHECK_HPP_

#include "svnet/gradcheck.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace svnet::ad {

std::string GradReport::summary() const {
  std::ostringstream os;
  os << (pass ? "PASS" : "FAIL") << " eps=" << epsilon << " tol=" << tolerance
     << " max_abs=" << max_abs_err << " max_rel=" << max_rel_err;
  return os.str();
}

GradReport finite_diff_check(const GraphBuilder& build, const TensorMap& point,
                             double epsilon, double tolerance) {
  if (epsilon <= 0.0) throw std::invalid_argument("finite_diff_check: epsilon must be positive");

  Graph g;
  const int out = build(g, point);
  if (g.value(out).size() != 1)
    throw std::invalid_argument("finite_diff_check: function must be scalar-valued");
  for (const auto& [name, v] : point) {
    (void)v;
    if (!g.has_input(name))
      throw std::invalid_argument("finite_diff_check: builder did not register input '" + name + "'");
  }

  g.backward_scalar(out);
  TensorMap analytic;
  for (const auto& [name, v] : point) {
    (void)v;
    analytic[name] = g.grad_of_input(name);
  }

  GradReport rep;
  rep.epsilon = epsilon;
  rep.tolerance = tolerance;
  for (const auto& [name, x0] : point) {
    GradReport::PerParam pp;
    pp.name = name;
    Tensor x = x0;
    const Tensor& ga = analytic[name];
    for (std::int64_t i = 0; i < x.size(); ++i) {
      const double orig = x[i];
      x[i] = orig + epsilon;
      g.rebind(name, x);
      g.reforward();
      const double fp = g.value(out)[0];
      x[i] = orig - epsilon;
      g.rebind(name, x);
      g.reforward();
      const double fm = g.value(out)[0];
      x[i] = orig;
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double a = ga[i];
      const double abs_err = std::abs(a - numeric);
      const double rel_err = abs_err / std::max({std::abs(a), std::abs(numeric), 1.0});
      pp.max_abs_err = std::max(pp.max_abs_err, abs_err);
      pp.max_rel_err = std::max(pp.max_rel_err, rel_err);
    }
    g.rebind(name, x);
    rep.max_abs_err = std::max(rep.max_abs_err, pp.max_abs_err);
    rep.max_rel_err = std::max(rep.max_rel_err, pp.max_rel_err);
    rep.params.push_back(std::move(pp));
  }
  g.reforward();  // leave the graph evaluated at the original point
  rep.pass = rep.max_rel_err <= tolerance;
  return rep;
}

}  // namespace svnet::ad

#ifndef SVNET_CHECKS_HPP_
#define SVNET_CHECKS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "svnet/gradcheck.hpp"
#include "svnet/selfval.hpp"

namespace svnet::checks {

struct OpCheck {
  std::string op;
  ad::GradReport report;
};

// Finite-difference checks for every op in the differentiation catalog, each
// at `seeds` random points sampled away from non-differentiable loci
// (argmax/argmin ties, relu and smooth-L1 kinks, zero norms).
std::vector<OpCheck> check_op_catalog(int seeds, double eps, double tol,
                                      std::uint64_t base_seed = 1);

// The full validation chain (attention + class validation + global update)
// as one scalar function of (A, C_global, C_box).
ad::GradReport check_selfval_chain(const selfval::ValidationMode& mode, int seed,
                                   double eps, double tol);

// The four-part training loss on a micro network (8x8 input, 2 grids,
// 20 anchors, 3 classes), differentiated against every parameter.
ad::GradReport check_micro_network_loss(int seed, double eps, double tol);

}  // namespace svnet::checks

#endif  // SVNET_CHECKS_HPP_

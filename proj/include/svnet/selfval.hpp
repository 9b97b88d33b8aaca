#ifndef SVNET_SELFVAL_HPP_
#define SVNET_SELFVAL_HPP_

#include <string>

#include "svnet/graph.hpp"
#include "svnet/tensor.hpp"

namespace svnet::selfval {

// Which consistency updates run between the global class estimate and the
// per-anchor predictions. The module has no trainable parameters in any mode.
enum class ModeKind {
  kNone,      // pass-through
  kHalf,      // what->where only (cosine validation of the attention)
  kFullSoft,  // cosine validation + soft-argmax class validation
  kFullHard,  // cosine validation + hard-argmax class validation (test only)
  kSoftAttn,  // cosine scores used as a softmax attention over A instead of summation
};

struct ValidationMode {
  ModeKind kind = ModeKind::kFullSoft;
  int stack_depth = 1;  // >= 1; repeated application for the full/soft-attn chains

  void validate() const;
  bool updates_global() const {
    return kind == ModeKind::kFullSoft || kind == ModeKind::kFullHard || kind == ModeKind::kSoftAttn;
  }
};

ValidationMode parse_mode(const std::string& text);  // "full-soft[:k]", "half", ...
std::string mode_name(const ValidationMode& mode);

struct ValidatedOutputs {
  Tensor v_attn;          // [a,1] cosine validation scores, each in [-1,1]
  Tensor a_prime;         // [a,1] updated attention, entries in [-2,2]
  Tensor a_tilde;         // [a,1] softmax(a_prime); nonnegative, sums to 1
  Tensor v_class;         // [1,c] class validation (soft mixture or hard row; zeros in half/none)
  Tensor c_global_prime;  // [1,c] updated global class, entries in [-2,2]
  int m = 0;              // argmax(a_prime), lowest-index tie-break
};

// Graph node handles for the validation chain, so the training loss can be
// built on the updated predictions.
struct BuiltValidation {
  int v_attn = -1;
  int a_prime = -1;
  int a_tilde = -1;
  int v_class = -1;
  int c_global_prime = -1;
  int m = 0;
};

// Appends the validation chain for `mode` onto an existing graph. `a` is the
// raw attention node [a,1], `c_global` [1,c], `c_box` [a,c]. With
// for_training true, full-hard is rejected ("hard argmax is not
// differentiable"); at test time the hard row pick is guarded by a stop-grad.
BuiltValidation build(ad::Graph& g, int a, int c_global, int c_box,
                      const ValidationMode& mode, bool for_training);

// Tensor-level entry point (test-time / inspection). Evaluates the same
// graph chain the training path uses.
ValidatedOutputs self_validate(const Tensor& a, const Tensor& c_global, const Tensor& c_box,
                               const ValidationMode& mode);

// Individual steps, exposed for direct use and testing. All are pure.
Tensor attention_validation(const Tensor& c_global, const Tensor& c_box);    // Eq-1 cosine scores
Tensor rescale(const Tensor& v);                                             // affine map onto [-1,1]
Tensor update_attention(const Tensor& a, const Tensor& v_attn);              // R(A) + V_attn
void class_validation_soft(const Tensor& a_prime, const Tensor& c_box,
                           Tensor* a_tilde, Tensor* v_class);                // softmax mixture
void class_validation_hard(const Tensor& a_prime, const Tensor& c_box,
                           int* m, Tensor* v_class);                         // argmax row pick
Tensor update_global_class(const Tensor& c_global, const Tensor& v_class);   // R(C)+R(V)
Tensor soft_attention_update(const Tensor& a, const Tensor& v_attn);         // A .* softmax(V_attn)

int argmax_index(const Tensor& v);  // lowest-index tie-break

}  // namespace svnet::selfval

#endif  // SVNET_SELFVAL_HPP_

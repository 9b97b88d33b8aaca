#ifndef SVNET_GRAPH_HPP_
#define SVNET_GRAPH_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "svnet/tensor.hpp"

namespace svnet::ad {

enum class Op : std::uint8_t {
  kInput,
  kAdd,
  kSub,
  kMul,
  kAddConst,
  kMulConst,
  kMatMul,
  kConv2d,
  kConv3d,
  kRelu,
  kSoftmax,
  kLog,
  kCosineRows,
  kMinAll,
  kMaxAll,
  kRescale,
  kSmoothL1,
  kCrossEntropy,
  kBceLogits,
  kSumAll,
  kPickRow,
  kPickElem,
  kGatherElems,
  kReshape,
  kConcatRows,
  kSliceTime,
  kStackTime,
  kAvgPool2d,
  kGlobalAvgPool,
  kMeanTime,
  kHeadToRows,
  kRegionPool,
  kBroadcastRow,
  kStopGrad,  // identity whose backward refuses to pass gradient
};

const char* op_name(Op op);

struct Node {
  Op op = Op::kInput;
  std::vector<int> in;
  Tensor value;
  Tensor grad;          // valid after backward()
  bool needs_grad = false;
  bool bound = true;    // inputs only: false for placeholders until forward()
  std::string name;     // inputs keep the user name; others "<op>#<id>"

  // per-op attributes
  int i0 = 0, i1 = 0, i2 = 0, i3 = 0, i4 = 0, i5 = 0;
  double c0 = 0.0;
  std::vector<int> idx;
  std::vector<double> aux;
  std::vector<int> out_shape;  // for kReshape
};

// Reverse-mode tape over Tensors. Evaluation is eager: each builder computes
// the node value as it is appended, so data-dependent construction (argmax
// row picks, mined negative sets, pooling regions) can read intermediate
// values during the build. forward() rebinds the named leaves and
// re-evaluates every node in order; backward() walks the tape in reverse.
//
// A Graph instance is single-threaded. Independent instances may run in
// parallel; Tensors handed in or out are never mutated.
class Graph {
 public:
  // Leaves. input() is bound immediately; placeholder() stays unbound (value
  // filled with ones so eager evaluation is well defined) until forward()
  // provides it. constant() is a leaf that never receives gradient.
  int input(const std::string& name, Tensor v, bool needs_grad = true);
  int placeholder(const std::string& name, std::vector<int> shape, bool needs_grad = true);
  int constant(Tensor v);

  // Elementwise / scalar.
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int add_const(int a, double c);
  int mul_const(int a, double c);
  int relu(int a);
  int log(int a);
  int smooth_l1(int a);

  // Linear algebra / conv.
  int matmul(int a, int b);  // [m,k] x [k,n] -> [m,n]
  int conv2d(int x, int w, int b, int stride, int pad);
  int conv3d(int x, int w, int b, int st, int sh, int sw, int pt, int ph, int pw);

  // Reductions and normalizations.
  int softmax(int a, int axis = -1);  // -1 = over the flattened tensor
  int min_all(int a);
  int max_all(int a);
  int sum_all(int a);
  int rescale(int a);  // affine map onto [-1,1]; constant input -> zeros

  // Similarity and losses.
  int cosine_rows(int rows, int ref);            // [a,c] x [c] or [1,c] -> [a,1]
  int cross_entropy(int logits, int target);     // -log softmax(logits)[target]
  int bce_logits(int x, std::vector<double> targets);  // summed elementwise BCE

  // Structure.
  int pick_row(int a, int row);                  // [a,c] -> [1,c]
  int pick_elem(int a, std::int64_t flat_index); // -> [1]
  int gather_elems(int a, std::vector<int> flat_indices);  // -> [k]
  int reshape(int a, std::vector<int> shape);
  int concat_rows(const std::vector<int>& parts);
  int slice_time(int clip, int t);               // [N,C,H,W] -> [C,H,W]
  int stack_time(const std::vector<int>& frames);// T x [C,H,W] -> [C,T,H,W]
  int avg_pool2d(int x, int k, int stride);
  int global_avg_pool(int x);                    // [C,H,W] -> [1,C]
  int mean_time(int x);                          // [C,T,H,W] -> [C,H,W]
  int head_to_rows(int x, int per_cell, int fields);  // [per_cell*fields,G,G] -> [G*G*per_cell,fields]
  int region_pool(int x, double cx0, double cy0, double cx1, double cy1, int out);
  int broadcast_row(int row, int nrows);         // [1,c] -> [n,c]
  int stop_grad(int a);

  void set_output(const std::string& name, int id);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Tensor& grad(int id) const;
  Tensor grad_of_input(const std::string& name) const;
  int input_id(const std::string& name) const;
  bool has_input(const std::string& name) const { return input_ids_.count(name) > 0; }
  const std::map<std::string, int>& inputs() const { return input_ids_; }
  const std::map<std::string, int>& outputs() const { return output_ids_; }
  std::size_t num_nodes() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  // Spec surface: bind the named inputs, re-evaluate everything, return the
  // registered outputs. Repeated calls with the same inputs are bit-identical.
  TensorMap forward(const TensorMap& inputs);

  // Gradients of all gradient-tracked named leaves, seeded with the given
  // output gradients. Requires a completed forward (all placeholders bound).
  TensorMap backward(const TensorMap& seed);

  // Convenience for scalar losses: seed 1.0 on the given node.
  void backward_scalar(int out_node);

  void rebind(int input_id, const Tensor& v);
  void rebind(const std::string& name, const Tensor& v) { rebind(input_id(name), v); }
  void reforward();

 private:
  int push(Node n);
  void eval(int id);
  void backprop(int id);
  void check_finite(int id) const;
  [[noreturn]] void fail(int id, const std::string& msg) const;
  void run_backward_from(const std::vector<std::pair<int, Tensor>>& seeds);

  std::vector<Node> nodes_;
  std::map<std::string, int> input_ids_;
  std::map<std::string, int> output_ids_;
  int unbound_count_ = 0;
  bool forwarded_ = true;  // flips false when a placeholder exists and is unbound
};

}  // namespace svnet::ad

#endif  // SVNET_GRAPH_HPP_

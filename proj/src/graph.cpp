#include "svnet/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace svnet::ad {

namespace {

constexpr double kNormEps = 1e-12;   // zero-norm guard for cosine
constexpr double kRangeEps = 1e-12;  // degenerate-range guard for rescale

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Decompose a softmax axis into (outer, len, stride, outer_stride) slices.
struct AxisView {
  std::int64_t outer, len, stride, outer_stride;
};

AxisView axis_view(const Tensor& t, int axis) {
  if (axis < 0) return {1, t.size(), 1, 0};
  if (t.ndim() != 2) throw std::invalid_argument("softmax: explicit axis requires a 2-D tensor");
  const std::int64_t r = t.dim(0), c = t.dim(1);
  if (axis == 0) return {c, r, c, 1};
  if (axis == 1) return {r, c, 1, c};
  throw std::invalid_argument("softmax: axis out of range");
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kAddConst: return "add_const";
    case Op::kMulConst: return "mul_const";
    case Op::kMatMul: return "matmul";
    case Op::kConv2d: return "conv2d";
    case Op::kConv3d: return "conv3d";
    case Op::kRelu: return "relu";
    case Op::kSoftmax: return "softmax";
    case Op::kLog: return "log";
    case Op::kCosineRows: return "cosine_rows";
    case Op::kMinAll: return "min_all";
    case Op::kMaxAll: return "max_all";
    case Op::kRescale: return "rescale";
    case Op::kSmoothL1: return "smooth_l1";
    case Op::kCrossEntropy: return "cross_entropy";
    case Op::kBceLogits: return "bce_logits";
    case Op::kSumAll: return "sum_all";
    case Op::kPickRow: return "pick_row";
    case Op::kPickElem: return "pick_elem";
    case Op::kGatherElems: return "gather_elems";
    case Op::kReshape: return "reshape";
    case Op::kConcatRows: return "concat_rows";
    case Op::kSliceTime: return "slice_time";
    case Op::kStackTime: return "stack_time";
    case Op::kAvgPool2d: return "avg_pool2d";
    case Op::kGlobalAvgPool: return "global_avg_pool";
    case Op::kMeanTime: return "mean_time";
    case Op::kHeadToRows: return "head_to_rows";
    case Op::kRegionPool: return "region_pool";
    case Op::kBroadcastRow: return "broadcast_row";
    case Op::kStopGrad: return "stop_grad";
  }
  return "?";
}

void Graph::fail(int id, const std::string& msg) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  throw std::runtime_error("node '" + n.name + "': " + msg);
}

void Graph::check_finite(int id) const {
  if (!nodes_[static_cast<std::size_t>(id)].value.all_finite())
    fail(id, "non-finite value");
}

int Graph::push(Node n) {
  const int id = static_cast<int>(nodes_.size());
  for (int i : n.in) {
    if (i < 0 || i >= id) throw std::invalid_argument("graph: bad input node id");
    n.needs_grad = n.needs_grad || nodes_[static_cast<std::size_t>(i)].needs_grad;
  }
  if (n.name.empty()) n.name = std::string(op_name(n.op)) + "#" + std::to_string(id);
  nodes_.push_back(std::move(n));
  eval(id);
  check_finite(id);
  return id;
}

int Graph::input(const std::string& name, Tensor v, bool needs_grad) {
  if (input_ids_.count(name)) throw std::invalid_argument("graph: duplicate input '" + name + "'");
  if (shape_numel(v.shape) <= 0) throw std::invalid_argument("graph: input '" + name + "' has empty shape");
  Node n;
  n.op = Op::kInput;
  n.value = std::move(v);
  n.needs_grad = needs_grad;
  n.name = name;
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(n));
  check_finite(id);
  input_ids_[name] = id;
  return id;
}

int Graph::placeholder(const std::string& name, std::vector<int> shape, bool needs_grad) {
  const int id = input(name, Tensor(std::move(shape), 1.0), needs_grad);
  nodes_[static_cast<std::size_t>(id)].bound = false;
  ++unbound_count_;
  forwarded_ = false;
  return id;
}

int Graph::constant(Tensor v) {
  Node n;
  n.op = Op::kInput;
  n.value = std::move(v);
  n.needs_grad = false;
  n.name = "const#" + std::to_string(nodes_.size());
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

#define SVNET_BINOP(fn, opk)                        \
  int Graph::fn(int a, int b) {                     \
    Node n;                                         \
    n.op = opk;                                     \
    n.in = {a, b};                                  \
    return push(std::move(n));                      \
  }
SVNET_BINOP(add, Op::kAdd)
SVNET_BINOP(sub, Op::kSub)
SVNET_BINOP(mul, Op::kMul)
SVNET_BINOP(matmul, Op::kMatMul)
#undef SVNET_BINOP

#define SVNET_UNOP(fn, opk)                         \
  int Graph::fn(int a) {                            \
    Node n;                                         \
    n.op = opk;                                     \
    n.in = {a};                                     \
    return push(std::move(n));                      \
  }
SVNET_UNOP(relu, Op::kRelu)
SVNET_UNOP(log, Op::kLog)
SVNET_UNOP(smooth_l1, Op::kSmoothL1)
SVNET_UNOP(min_all, Op::kMinAll)
SVNET_UNOP(max_all, Op::kMaxAll)
SVNET_UNOP(sum_all, Op::kSumAll)
SVNET_UNOP(rescale, Op::kRescale)
SVNET_UNOP(global_avg_pool, Op::kGlobalAvgPool)
SVNET_UNOP(mean_time, Op::kMeanTime)
SVNET_UNOP(stop_grad, Op::kStopGrad)
#undef SVNET_UNOP

int Graph::add_const(int a, double c) {
  Node n; n.op = Op::kAddConst; n.in = {a}; n.c0 = c;
  return push(std::move(n));
}

int Graph::mul_const(int a, double c) {
  Node n; n.op = Op::kMulConst; n.in = {a}; n.c0 = c;
  return push(std::move(n));
}

int Graph::conv2d(int x, int w, int b, int stride, int pad) {
  Node n; n.op = Op::kConv2d; n.in = {x, w, b}; n.i0 = stride; n.i1 = pad;
  return push(std::move(n));
}

int Graph::conv3d(int x, int w, int b, int st, int sh, int sw, int pt, int ph, int pw) {
  Node n; n.op = Op::kConv3d; n.in = {x, w, b};
  n.i0 = st; n.i1 = sh; n.i2 = sw; n.i3 = pt; n.i4 = ph; n.i5 = pw;
  return push(std::move(n));
}

int Graph::softmax(int a, int axis) {
  Node n; n.op = Op::kSoftmax; n.in = {a}; n.i0 = axis;
  return push(std::move(n));
}

int Graph::cosine_rows(int rows, int ref) {
  Node n; n.op = Op::kCosineRows; n.in = {rows, ref};
  return push(std::move(n));
}

int Graph::cross_entropy(int logits, int target) {
  Node n; n.op = Op::kCrossEntropy; n.in = {logits}; n.i0 = target;
  return push(std::move(n));
}

int Graph::bce_logits(int x, std::vector<double> targets) {
  Node n; n.op = Op::kBceLogits; n.in = {x}; n.aux = std::move(targets);
  return push(std::move(n));
}

int Graph::pick_row(int a, int row) {
  Node n; n.op = Op::kPickRow; n.in = {a}; n.i0 = row;
  return push(std::move(n));
}

int Graph::pick_elem(int a, std::int64_t flat_index) {
  Node n; n.op = Op::kPickElem; n.in = {a}; n.i0 = static_cast<int>(flat_index);
  return push(std::move(n));
}

int Graph::gather_elems(int a, std::vector<int> flat_indices) {
  Node n; n.op = Op::kGatherElems; n.in = {a}; n.idx = std::move(flat_indices);
  return push(std::move(n));
}

int Graph::reshape(int a, std::vector<int> shape) {
  Node n; n.op = Op::kReshape; n.in = {a}; n.out_shape = std::move(shape);
  return push(std::move(n));
}

int Graph::concat_rows(const std::vector<int>& parts) {
  Node n; n.op = Op::kConcatRows; n.in = parts;
  return push(std::move(n));
}

int Graph::slice_time(int clip, int t) {
  Node n; n.op = Op::kSliceTime; n.in = {clip}; n.i0 = t;
  return push(std::move(n));
}

int Graph::stack_time(const std::vector<int>& frames) {
  Node n; n.op = Op::kStackTime; n.in = frames;
  return push(std::move(n));
}

int Graph::avg_pool2d(int x, int k, int stride) {
  Node n; n.op = Op::kAvgPool2d; n.in = {x}; n.i0 = k; n.i1 = stride;
  return push(std::move(n));
}

int Graph::head_to_rows(int x, int per_cell, int fields) {
  Node n; n.op = Op::kHeadToRows; n.in = {x}; n.i0 = per_cell; n.i1 = fields;
  return push(std::move(n));
}

int Graph::region_pool(int x, double cx0, double cy0, double cx1, double cy1, int out) {
  Node n; n.op = Op::kRegionPool; n.in = {x}; n.i0 = out;
  n.aux = {cx0, cy0, cx1, cy1};
  return push(std::move(n));
}

int Graph::broadcast_row(int row, int nrows) {
  Node n; n.op = Op::kBroadcastRow; n.in = {row}; n.i0 = nrows;
  return push(std::move(n));
}

void Graph::set_output(const std::string& name, int id) {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("graph: bad output node id");
  output_ids_[name] = id;
}

int Graph::input_id(const std::string& name) const {
  auto it = input_ids_.find(name);
  if (it == input_ids_.end()) throw std::invalid_argument("graph: no input named '" + name + "'");
  return it->second;
}

const Tensor& Graph::grad(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.data.empty() && n.value.size() != 0)
    throw std::runtime_error("node '" + n.name + "': gradient not computed (run backward first)");
  return n.grad;
}

Tensor Graph::grad_of_input(const std::string& name) const {
  const Node& n = nodes_[static_cast<std::size_t>(input_id(name))];
  if (!n.grad.data.empty()) return n.grad;
  return Tensor(n.value.shape, 0.0);
}

void Graph::rebind(int id, const Tensor& v) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.op != Op::kInput) throw std::invalid_argument("graph: rebind target is not an input");
  if (v.shape != n.value.shape)
    fail(id, "rebind shape mismatch: expected " + shape_str(n.value.shape) + " got " + shape_str(v.shape));
  if (!n.bound) {
    n.bound = true;
    --unbound_count_;
  }
  n.value = v;
}

void Graph::reforward() {
  if (unbound_count_ > 0) {
    for (const auto& [name, id] : input_ids_)
      if (!nodes_[static_cast<std::size_t>(id)].bound)
        throw std::runtime_error("graph: input '" + name + "' unbound at forward");
  }
  for (int id = 0; id < static_cast<int>(nodes_.size()); ++id) {
    if (nodes_[static_cast<std::size_t>(id)].op == Op::kInput) continue;
    eval(id);
    check_finite(id);
  }
  forwarded_ = true;
}

TensorMap Graph::forward(const TensorMap& inputs) {
  for (const auto& [name, v] : inputs) rebind(name, v);
  reforward();
  TensorMap out;
  for (const auto& [name, id] : output_ids_) out[name] = value(id);
  return out;
}

void Graph::backward_scalar(int out_node) {
  if (value(out_node).size() != 1)
    fail(out_node, "backward_scalar requires a scalar output");
  run_backward_from({{out_node, Tensor::scalar(1.0)}});
}

TensorMap Graph::backward(const TensorMap& seed) {
  std::vector<std::pair<int, Tensor>> seeds;
  for (const auto& [name, g] : seed) {
    auto it = output_ids_.find(name);
    if (it == output_ids_.end())
      throw std::invalid_argument("graph: backward seed for unknown output '" + name + "'");
    if (g.shape != value(it->second).shape)
      fail(it->second, "seed shape mismatch: expected " + shape_str(value(it->second).shape) +
                           " got " + shape_str(g.shape));
    seeds.emplace_back(it->second, g);
  }
  run_backward_from(seeds);
  TensorMap grads;
  for (const auto& [name, id] : input_ids_) grads[name] = grad_of_input(name);
  return grads;
}

void Graph::run_backward_from(const std::vector<std::pair<int, Tensor>>& seeds) {
  if (!forwarded_)
    throw std::runtime_error("graph: backward before forward");
  for (Node& n : nodes_) n.grad = Tensor();  // reset; allocated on demand
  auto ensure = [&](int id) -> Tensor& {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape, 0.0);
    return n.grad;
  };
  for (const auto& [id, g] : seeds) {
    Tensor& acc = ensure(id);
    for (std::int64_t i = 0; i < g.size(); ++i) acc[i] += g[i];
  }
  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.op == Op::kInput || n.grad.data.empty()) continue;
    bool any_input_needs = false;
    for (int i : n.in) any_input_needs |= nodes_[static_cast<std::size_t>(i)].needs_grad;
    if (!any_input_needs) continue;
    for (int i : n.in) ensure(i);
    backprop(id);
  }
  // Leaves that never received gradient report zeros.
  for (const auto& [name, id] : input_ids_) ensure(id);
}

// ---------------------------------------------------------------------------
// forward evaluation
// ---------------------------------------------------------------------------

void Graph::eval(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  auto V = [&](int i) -> const Tensor& { return nodes_[static_cast<std::size_t>(i)].value; };

  switch (n.op) {
    case Op::kInput:
      return;

    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      const Tensor& a = V(n.in[0]);
      const Tensor& b = V(n.in[1]);
      if (!a.same_shape(b))
        fail(id, "shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
      Tensor out(a.shape);
      const std::int64_t sz = a.size();
      if (n.op == Op::kAdd)
        for (std::int64_t i = 0; i < sz; ++i) out[i] = a[i] + b[i];
      else if (n.op == Op::kSub)
        for (std::int64_t i = 0; i < sz; ++i) out[i] = a[i] - b[i];
      else
        for (std::int64_t i = 0; i < sz; ++i) out[i] = a[i] * b[i];
      n.value = std::move(out);
      return;
    }

    case Op::kAddConst:
    case Op::kMulConst: {
      const Tensor& a = V(n.in[0]);
      Tensor out(a.shape);
      if (n.op == Op::kAddConst)
        for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + n.c0;
      else
        for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * n.c0;
      n.value = std::move(out);
      return;
    }

    case Op::kMatMul: {
      const Tensor& a = V(n.in[0]);
      const Tensor& b = V(n.in[1]);
      if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        fail(id, "matmul shape mismatch " + shape_str(a.shape) + " x " + shape_str(b.shape));
      const int m = a.dim(0), k = a.dim(1), p = b.dim(1);
      Tensor out({m, p});
      for (int i = 0; i < m; ++i) {
        const double* arow = &a.data[static_cast<std::size_t>(i) * k];
        double* orow = &out.data[static_cast<std::size_t>(i) * p];
        for (int kk = 0; kk < k; ++kk) {
          const double av = arow[kk];
          const double* brow = &b.data[static_cast<std::size_t>(kk) * p];
          for (int j = 0; j < p; ++j) orow[j] += av * brow[j];
        }
      }
      n.value = std::move(out);
      return;
    }

    case Op::kConv2d: {
      const Tensor& x = V(n.in[0]);
      const Tensor& w = V(n.in[1]);
      const Tensor& b = V(n.in[2]);
      if (x.ndim() != 3 || w.ndim() != 4 || b.ndim() != 1)
        fail(id, "conv2d expects x[C,H,W], w[Co,Ci,kh,kw], b[Co]");
      const int ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
      const int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
      if (w.dim(1) != ci || b.dim(0) != co)
        fail(id, "conv2d channel mismatch: x " + shape_str(x.shape) + " w " + shape_str(w.shape));
      const int s = n.i0, p = n.i1;
      const int oh = (h + 2 * p - kh) / s + 1, ow = (wd + 2 * p - kw) / s + 1;
      if (oh <= 0 || ow <= 0) fail(id, "conv2d output would be empty");
      Tensor out({co, oh, ow});
      for (int c = 0; c < co; ++c) {
        const double bias = b[c];
        for (int y = 0; y < oh; ++y)
          for (int xo = 0; xo < ow; ++xo) {
            double acc = bias;
            for (int cin = 0; cin < ci; ++cin) {
              const double* xp = &x.data[(static_cast<std::size_t>(cin) * h) * wd];
              const double* wp = &w.data[((static_cast<std::size_t>(c) * ci + cin) * kh) * kw];
              for (int ky = 0; ky < kh; ++ky) {
                const int iy = y * s + ky - p;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                  const int ix = xo * s + kx - p;
                  if (ix < 0 || ix >= wd) continue;
                  acc += xp[static_cast<std::size_t>(iy) * wd + ix] * wp[static_cast<std::size_t>(ky) * kw + kx];
                }
              }
            }
            out.data[(static_cast<std::size_t>(c) * oh + y) * ow + xo] = acc;
          }
      }
      n.value = std::move(out);
      return;
    }

    case Op::kConv3d: {
      const Tensor& x = V(n.in[0]);
      const Tensor& w = V(n.in[1]);
      const Tensor& b = V(n.in[2]);
      if (x.ndim() != 4 || w.ndim() != 5 || b.ndim() != 1)
        fail(id, "conv3d expects x[C,T,H,W], w[Co,Ci,kt,kh,kw], b[Co]");
      const int ci = x.dim(0), t = x.dim(1), h = x.dim(2), wd = x.dim(3);
      const int co = w.dim(0), kt = w.dim(2), kh = w.dim(3), kw = w.dim(4);
      if (w.dim(1) != ci || b.dim(0) != co)
        fail(id, "conv3d channel mismatch: x " + shape_str(x.shape) + " w " + shape_str(w.shape));
      const int st = n.i0, sh = n.i1, sw = n.i2, pt = n.i3, ph = n.i4, pw = n.i5;
      const int ot = (t + 2 * pt - kt) / st + 1;
      const int oh = (h + 2 * ph - kh) / sh + 1;
      const int ow = (wd + 2 * pw - kw) / sw + 1;
      if (ot <= 0 || oh <= 0 || ow <= 0) fail(id, "conv3d output would be empty");
      Tensor out({co, ot, oh, ow});
      for (int c = 0; c < co; ++c)
        for (int zt = 0; zt < ot; ++zt)
          for (int y = 0; y < oh; ++y)
            for (int xo = 0; xo < ow; ++xo) {
              double acc = b[c];
              for (int cin = 0; cin < ci; ++cin)
                for (int kz = 0; kz < kt; ++kz) {
                  const int iz = zt * st + kz - pt;
                  if (iz < 0 || iz >= t) continue;
                  for (int ky = 0; ky < kh; ++ky) {
                    const int iy = y * sh + ky - ph;
                    if (iy < 0 || iy >= h) continue;
                    const double* xp = &x.data[((static_cast<std::size_t>(cin) * t + iz) * h + iy) * wd];
                    const double* wp = &w.data[(((static_cast<std::size_t>(c) * ci + cin) * kt + kz) * kh + ky) * kw];
                    for (int kx = 0; kx < kw; ++kx) {
                      const int ix = xo * sw + kx - pw;
                      if (ix < 0 || ix >= wd) continue;
                      acc += xp[ix] * wp[kx];
                    }
                  }
                }
              out.data[((static_cast<std::size_t>(c) * ot + zt) * oh + y) * ow + xo] = acc;
            }
      n.value = std::move(out);
      return;
    }

    case Op::kRelu: {
      const Tensor& a = V(n.in[0]);
      Tensor out(a.shape);
      for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
      n.value = std::move(out);
      return;
    }

    case Op::kSoftmax: {
      const Tensor& a = V(n.in[0]);
      AxisView av;
      try {
        av = axis_view(a, n.i0);
      } catch (const std::exception& e) {
        fail(id, e.what());
      }
      Tensor out(a.shape);
      for (std::int64_t o = 0; o < av.outer; ++o) {
        const std::int64_t base = o * av.outer_stride;
        double mx = a[base];
        for (std::int64_t i = 1; i < av.len; ++i) mx = std::max(mx, a[base + i * av.stride]);
        double den = 0.0;
        for (std::int64_t i = 0; i < av.len; ++i) den += std::exp(a[base + i * av.stride] - mx);
        for (std::int64_t i = 0; i < av.len; ++i)
          out[base + i * av.stride] = std::exp(a[base + i * av.stride] - mx) / den;
      }
      n.value = std::move(out);
      return;
    }

    case Op::kLog: {
      const Tensor& a = V(n.in[0]);
      Tensor out(a.shape);
      for (std::int64_t i = 0; i < a.size(); ++i) {
        if (a[i] <= 0.0) fail(id, "log of nonpositive value");
        out[i] = std::log(a[i]);
      }
      n.value = std::move(out);
      return;
    }

    case Op::kCosineRows: {
      const Tensor& rows = V(n.in[0]);
      const Tensor& ref = V(n.in[1]);
      if (rows.ndim() != 2) fail(id, "cosine_rows expects a 2-D rows tensor");
      const int a = rows.dim(0), c = rows.dim(1);
      if (ref.size() != c)
        fail(id, "cosine_rows reference length " + std::to_string(ref.size()) +
                     " != " + std::to_string(c));
      double ng = 0.0;
      for (int j = 0; j < c; ++j) ng += ref[j] * ref[j];
      ng = std::sqrt(ng);
      Tensor out({a, 1});
      for (int i = 0; i < a; ++i) {
        double nr = 0.0, dot = 0.0;
        const double* rp = &rows.data[static_cast<std::size_t>(i) * c];
        for (int j = 0; j < c; ++j) {
          nr += rp[j] * rp[j];
          dot += rp[j] * ref[j];
        }
        nr = std::sqrt(nr);
        out[i] = (nr < kNormEps || ng < kNormEps) ? 0.0 : dot / (nr * ng);
      }
      n.value = std::move(out);
      return;
    }

    case Op::kMinAll:
    case Op::kMaxAll: {
      const Tensor& a = V(n.in[0]);
      double best = a[0];
      int arg = 0;
      for (std::int64_t i = 1; i < a.size(); ++i) {
        const bool better = n.op == Op::kMinAll ? a[i] < best : a[i] > best;
        if (better) { best = a[i]; arg = static_cast<int>(i); }
      }
      n.i1 = arg;  // cached for backward (lowest-index tie-break by construction)
      n.value = Tensor::scalar(best);
      return;
    }

    case Op::kRescale: {
      const Tensor& a = V(n.in[0]);
      double mx = a[0], mn = a[0];
      for (std::int64_t i = 1; i < a.size(); ++i) {
        mx = std::max(mx, a[i]);
        mn = std::min(mn, a[i]);
      }
      Tensor out(a.shape);
      if (mx - mn >= kRangeEps) {
        const double den = mx - mn;
        for (std::int64_t i = 0; i < a.size(); ++i) {
          // Exact endpoints on the extremes; interior points via the affine map.
          if (a[i] == mx) out[i] = 1.0;
          else if (a[i] == mn) out[i] = -1.0;
          else out[i] = (2.0 * a[i] - mx - mn) / den;
        }
      }
      n.value = std::move(out);
      return;
    }

    case Op::kSmoothL1: {
      const Tensor& a = V(n.in[0]);
      Tensor out(a.shape);
      for (std::int64_t i = 0; i < a.size(); ++i) {
        const double x = a[i];
        out[i] = std::abs(x) < 1.0 ? 0.5 * x * x : std::abs(x) - 0.5;
      }
      n.value = std::move(out);
      return;
    }

    case Op::kCrossEntropy: {
      const Tensor& a = V(n.in[0]);
      const std::int64_t t = n.i0;
      if (t < 0 || t >= a.size()) fail(id, "cross_entropy target index out of range");
      double mx = a[0];
      for (std::int64_t i = 1; i < a.size(); ++i) mx = std::max(mx, a[i]);
      double den = 0.0;
      for (std::int64_t i = 0; i < a.size(); ++i) den += std::exp(a[i] - mx);
      n.value = Tensor::scalar(mx + std::log(den) - a[t]);
      return;
    }

    case Op::kBceLogits: {
      const Tensor& a = V(n.in[0]);
      if (static_cast<std::int64_t>(n.aux.size()) != a.size())
        fail(id, "bce_logits target length mismatch");
      double loss = 0.0;
      for (std::int64_t i = 0; i < a.size(); ++i) {
        const double x = a[i], t = n.aux[static_cast<std::size_t>(i)];
        loss += std::max(x, 0.0) - t * x + std::log1p(std::exp(-std::abs(x)));
      }
      n.value = Tensor::scalar(loss);
      return;
    }

    case Op::kSumAll: {
      const Tensor& a = V(n.in[0]);
      double s = 0.0;
      for (std::int64_t i = 0; i < a.size(); ++i) s += a[i];
      n.value = Tensor::scalar(s);
      return;
    }

    case Op::kPickRow: {
      const Tensor& a = V(n.in[0]);
      if (a.ndim() != 2 || n.i0 < 0 || n.i0 >= a.dim(0)) fail(id, "pick_row index out of range");
      const int c = a.dim(1);
      Tensor out({1, c});
      for (int j = 0; j < c; ++j) out[j] = a.at(n.i0, j);
      n.value = std::move(out);
      return;
    }

    case Op::kPickElem: {
      const Tensor& a = V(n.in[0]);
      if (n.i0 < 0 || n.i0 >= a.size()) fail(id, "pick_elem index out of range");
      n.value = Tensor::scalar(a[n.i0]);
      return;
    }

    case Op::kGatherElems: {
      const Tensor& a = V(n.in[0]);
      Tensor out({static_cast<int>(n.idx.size())});
      for (std::size_t i = 0; i < n.idx.size(); ++i) {
        if (n.idx[i] < 0 || n.idx[i] >= a.size()) fail(id, "gather_elems index out of range");
        out[static_cast<std::int64_t>(i)] = a[n.idx[i]];
      }
      n.value = std::move(out);
      return;
    }

    case Op::kReshape: {
      const Tensor& a = V(n.in[0]);
      if (shape_numel(n.out_shape) != a.size())
        fail(id, "reshape to " + shape_str(n.out_shape) + " from " + shape_str(a.shape));
      Tensor out;
      out.shape = n.out_shape;
      out.data = a.data;
      n.value = std::move(out);
      return;
    }

    case Op::kConcatRows: {
      int rows = 0, cols = -1;
      for (int i : n.in) {
        const Tensor& p = V(i);
        if (p.ndim() != 2) fail(id, "concat_rows expects 2-D parts");
        if (cols < 0) cols = p.dim(1);
        if (p.dim(1) != cols) fail(id, "concat_rows column mismatch");
        rows += p.dim(0);
      }
      Tensor out({rows, cols});
      std::size_t off = 0;
      for (int i : n.in) {
        const Tensor& p = V(i);
        std::copy(p.data.begin(), p.data.end(), out.data.begin() + off);
        off += p.data.size();
      }
      n.value = std::move(out);
      return;
    }

    case Op::kSliceTime: {
      const Tensor& a = V(n.in[0]);
      if (a.ndim() != 4 || n.i0 < 0 || n.i0 >= a.dim(0)) fail(id, "slice_time index out of range");
      const std::int64_t block = a.size() / a.dim(0);
      Tensor out({a.dim(1), a.dim(2), a.dim(3)});
      std::copy(a.data.begin() + n.i0 * block, a.data.begin() + (n.i0 + 1) * block, out.data.begin());
      n.value = std::move(out);
      return;
    }

    case Op::kStackTime: {
      const int t = static_cast<int>(n.in.size());
      const Tensor& f0 = V(n.in[0]);
      if (f0.ndim() != 3) fail(id, "stack_time expects 3-D frames");
      const int c = f0.dim(0), h = f0.dim(1), w = f0.dim(2);
      Tensor out({c, t, h, w});
      for (int ti = 0; ti < t; ++ti) {
        const Tensor& f = V(n.in[static_cast<std::size_t>(ti)]);
        if (!f.same_shape(f0)) fail(id, "stack_time frame shape mismatch");
        for (int ch = 0; ch < c; ++ch)
          std::copy(f.data.begin() + static_cast<std::size_t>(ch) * h * w,
                    f.data.begin() + static_cast<std::size_t>(ch + 1) * h * w,
                    out.data.begin() + ((static_cast<std::size_t>(ch) * t + ti) * h) * w);
      }
      n.value = std::move(out);
      return;
    }

    case Op::kAvgPool2d: {
      const Tensor& a = V(n.in[0]);
      if (a.ndim() != 3) fail(id, "avg_pool2d expects [C,H,W]");
      const int c = a.dim(0), h = a.dim(1), w = a.dim(2), k = n.i0, s = n.i1;
      const int oh = (h - k) / s + 1, ow = (w - k) / s + 1;
      if (oh <= 0 || ow <= 0) fail(id, "avg_pool2d output would be empty");
      Tensor out({c, oh, ow});
      const double inv = 1.0 / (k * k);
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y)
          for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx)
                acc += a.data[(static_cast<std::size_t>(ch) * h + y * s + ky) * w + x * s + kx];
            out.data[(static_cast<std::size_t>(ch) * oh + y) * ow + x] = acc * inv;
          }
      n.value = std::move(out);
      return;
    }

    case Op::kGlobalAvgPool: {
      const Tensor& a = V(n.in[0]);
      if (a.ndim() != 3) fail(id, "global_avg_pool expects [C,H,W]");
      const int c = a.dim(0);
      const std::int64_t hw = static_cast<std::int64_t>(a.dim(1)) * a.dim(2);
      Tensor out({1, c});
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < hw; ++i) acc += a[ch * hw + i];
        out[ch] = acc / static_cast<double>(hw);
      }
      n.value = std::move(out);
      return;
    }

    case Op::kMeanTime: {
      const Tensor& a = V(n.in[0]);
      if (a.ndim() != 4) fail(id, "mean_time expects [C,T,H,W]");
      const int c = a.dim(0), t = a.dim(1);
      const std::int64_t hw = static_cast<std::int64_t>(a.dim(2)) * a.dim(3);
      Tensor out({c, a.dim(2), a.dim(3)});
      for (int ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < hw; ++i) {
          double acc = 0.0;
          for (int ti = 0; ti < t; ++ti) acc += a[(static_cast<std::int64_t>(ch) * t + ti) * hw + i];
          out[ch * hw + i] = acc / t;
        }
      n.value = std::move(out);
      return;
    }

    case Op::kHeadToRows: {
      const Tensor& a = V(n.in[0]);
      const int pc = n.i0, f = n.i1;
      if (a.ndim() != 3 || a.dim(0) != pc * f || a.dim(1) != a.dim(2))
        fail(id, "head_to_rows expects [per_cell*fields,G,G]");
      const int g = a.dim(1);
      Tensor out({g * g * pc, f});
      for (int y = 0; y < g; ++y)
        for (int x = 0; x < g; ++x)
          for (int j = 0; j < pc; ++j)
            for (int fi = 0; fi < f; ++fi)
              out.at((y * g + x) * pc + j, fi) =
                  a.data[(static_cast<std::size_t>(j * f + fi) * g + y) * g + x];
      n.value = std::move(out);
      return;
    }

    case Op::kRegionPool: {
      const Tensor& a = V(n.in[0]);
      if (a.ndim() != 3) fail(id, "region_pool expects [C,H,W]");
      const int c = a.dim(0), h = a.dim(1), w = a.dim(2), out_sz = n.i0;
      auto clampi = [](int v, int lo, int hi) { return std::max(lo, std::min(hi, v)); };
      int px0 = clampi(static_cast<int>(std::floor(n.aux[0] * w)), 0, w - 1);
      int py0 = clampi(static_cast<int>(std::floor(n.aux[1] * h)), 0, h - 1);
      int px1 = clampi(static_cast<int>(std::ceil(n.aux[2] * w)) - 1, px0, w - 1);
      int py1 = clampi(static_cast<int>(std::ceil(n.aux[3] * h)) - 1, py0, h - 1);
      Tensor out({1, c * out_sz * out_sz});
      const int rw = px1 - px0 + 1, rh = py1 - py0 + 1;
      for (int ch = 0; ch < c; ++ch)
        for (int sy = 0; sy < out_sz; ++sy)
          for (int sx = 0; sx < out_sz; ++sx) {
            const int y0 = py0 + sy * rh / out_sz, y1 = py0 + (sy + 1) * rh / out_sz;
            const int x0 = px0 + sx * rw / out_sz, x1 = px0 + (sx + 1) * rw / out_sz;
            double acc = 0.0;
            int cnt = 0;
            for (int y = y0; y < std::max(y1, y0 + 1); ++y)
              for (int x = x0; x < std::max(x1, x0 + 1); ++x) {
                acc += a.data[(static_cast<std::size_t>(ch) * h + std::min(y, h - 1)) * w + std::min(x, w - 1)];
                ++cnt;
              }
            out[(static_cast<std::int64_t>(ch) * out_sz + sy) * out_sz + sx] = acc / cnt;
          }
      n.value = std::move(out);
      return;
    }

    case Op::kBroadcastRow: {
      const Tensor& a = V(n.in[0]);
      if (a.ndim() != 2 || a.dim(0) != 1) fail(id, "broadcast_row expects [1,c]");
      const int c = a.dim(1);
      Tensor out({n.i0, c});
      for (int r = 0; r < n.i0; ++r)
        for (int j = 0; j < c; ++j) out.at(r, j) = a[j];
      n.value = std::move(out);
      return;
    }

    case Op::kStopGrad: {
      n.value = V(n.in[0]);
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// backward scatter
// ---------------------------------------------------------------------------

void Graph::backprop(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  const Tensor& g = n.grad;
  auto V = [&](int i) -> const Tensor& { return nodes_[static_cast<std::size_t>(i)].value; };
  auto G = [&](int i) -> Tensor& { return nodes_[static_cast<std::size_t>(i)].grad; };

  switch (n.op) {
    case Op::kInput:
      return;

    case Op::kAdd: {
      Tensor &ga = G(n.in[0]), &gb = G(n.in[1]);
      for (std::int64_t i = 0; i < g.size(); ++i) { ga[i] += g[i]; gb[i] += g[i]; }
      return;
    }
    case Op::kSub: {
      Tensor &ga = G(n.in[0]), &gb = G(n.in[1]);
      for (std::int64_t i = 0; i < g.size(); ++i) { ga[i] += g[i]; gb[i] -= g[i]; }
      return;
    }
    case Op::kMul: {
      const Tensor &a = V(n.in[0]), &b = V(n.in[1]);
      Tensor &ga = G(n.in[0]), &gb = G(n.in[1]);
      for (std::int64_t i = 0; i < g.size(); ++i) { ga[i] += g[i] * b[i]; gb[i] += g[i] * a[i]; }
      return;
    }
    case Op::kAddConst: {
      Tensor& ga = G(n.in[0]);
      for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      return;
    }
    case Op::kMulConst: {
      Tensor& ga = G(n.in[0]);
      for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.c0;
      return;
    }

    case Op::kMatMul: {
      const Tensor &a = V(n.in[0]), &b = V(n.in[1]);
      Tensor &ga = G(n.in[0]), &gb = G(n.in[1]);
      const int m = a.dim(0), k = a.dim(1), p = b.dim(1);
      for (int i = 0; i < m; ++i)
        for (int kk = 0; kk < k; ++kk) {
          double acc = 0.0;
          const double* gr = &g.data[static_cast<std::size_t>(i) * p];
          const double* br = &b.data[static_cast<std::size_t>(kk) * p];
          for (int j = 0; j < p; ++j) acc += gr[j] * br[j];
          ga.data[static_cast<std::size_t>(i) * k + kk] += acc;
        }
      for (int kk = 0; kk < k; ++kk)
        for (int j = 0; j < p; ++j) {
          double acc = 0.0;
          for (int i = 0; i < m; ++i)
            acc += a.data[static_cast<std::size_t>(i) * k + kk] * g.data[static_cast<std::size_t>(i) * p + j];
          gb.data[static_cast<std::size_t>(kk) * p + j] += acc;
        }
      return;
    }

    case Op::kConv2d: {
      const Tensor &x = V(n.in[0]), &w = V(n.in[1]);
      Tensor &gx = G(n.in[0]), &gw = G(n.in[1]), &gb = G(n.in[2]);
      const bool need_gx = nodes_[static_cast<std::size_t>(n.in[0])].needs_grad;
      const int ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
      const int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
      const int s = n.i0, p = n.i1;
      const int oh = n.value.dim(1), ow = n.value.dim(2);
      for (int c = 0; c < co; ++c) {
        for (int y = 0; y < oh; ++y)
          for (int xo = 0; xo < ow; ++xo) {
            const double gv = g.data[(static_cast<std::size_t>(c) * oh + y) * ow + xo];
            if (gv == 0.0) continue;
            gb[c] += gv;
            for (int cin = 0; cin < ci; ++cin) {
              const double* xp = &x.data[(static_cast<std::size_t>(cin) * h) * wd];
              double* gxp = need_gx ? &gx.data[(static_cast<std::size_t>(cin) * h) * wd] : nullptr;
              const std::size_t wbase = ((static_cast<std::size_t>(c) * ci + cin) * kh) * kw;
              for (int ky = 0; ky < kh; ++ky) {
                const int iy = y * s + ky - p;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                  const int ix = xo * s + kx - p;
                  if (ix < 0 || ix >= wd) continue;
                  gw.data[wbase + static_cast<std::size_t>(ky) * kw + kx] +=
                      gv * xp[static_cast<std::size_t>(iy) * wd + ix];
                  if (need_gx)
                    gxp[static_cast<std::size_t>(iy) * wd + ix] +=
                        gv * w.data[wbase + static_cast<std::size_t>(ky) * kw + kx];
                }
              }
            }
          }
      }
      return;
    }

    case Op::kConv3d: {
      const Tensor &x = V(n.in[0]), &w = V(n.in[1]);
      Tensor &gx = G(n.in[0]), &gw = G(n.in[1]), &gb = G(n.in[2]);
      const bool need_gx = nodes_[static_cast<std::size_t>(n.in[0])].needs_grad;
      const int ci = x.dim(0), t = x.dim(1), h = x.dim(2), wd = x.dim(3);
      const int co = w.dim(0), kt = w.dim(2), kh = w.dim(3), kw = w.dim(4);
      const int st = n.i0, sh = n.i1, sw = n.i2, pt = n.i3, ph = n.i4, pw = n.i5;
      const int ot = n.value.dim(1), oh = n.value.dim(2), ow = n.value.dim(3);
      for (int c = 0; c < co; ++c)
        for (int zt = 0; zt < ot; ++zt)
          for (int y = 0; y < oh; ++y)
            for (int xo = 0; xo < ow; ++xo) {
              const double gv = g.data[((static_cast<std::size_t>(c) * ot + zt) * oh + y) * ow + xo];
              if (gv == 0.0) continue;
              gb[c] += gv;
              for (int cin = 0; cin < ci; ++cin)
                for (int kz = 0; kz < kt; ++kz) {
                  const int iz = zt * st + kz - pt;
                  if (iz < 0 || iz >= t) continue;
                  for (int ky = 0; ky < kh; ++ky) {
                    const int iy = y * sh + ky - ph;
                    if (iy < 0 || iy >= h) continue;
                    const std::size_t xbase = ((static_cast<std::size_t>(cin) * t + iz) * h + iy) * wd;
                    const std::size_t wbase =
                        (((static_cast<std::size_t>(c) * ci + cin) * kt + kz) * kh + ky) * kw;
                    for (int kx = 0; kx < kw; ++kx) {
                      const int ix = xo * sw + kx - pw;
                      if (ix < 0 || ix >= wd) continue;
                      gw.data[wbase + kx] += gv * x.data[xbase + ix];
                      if (need_gx) gx.data[xbase + ix] += gv * w.data[wbase + kx];
                    }
                  }
                }
            }
      return;
    }

    case Op::kRelu: {
      const Tensor& a = V(n.in[0]);
      Tensor& ga = G(n.in[0]);
      for (std::int64_t i = 0; i < g.size(); ++i)
        if (a[i] > 0.0) ga[i] += g[i];
      return;
    }

    case Op::kSoftmax: {
      const Tensor& y = n.value;
      Tensor& ga = G(n.in[0]);
      const AxisView av = axis_view(y, n.i0);
      for (std::int64_t o = 0; o < av.outer; ++o) {
        const std::int64_t base = o * av.outer_stride;
        double dot = 0.0;
        for (std::int64_t i = 0; i < av.len; ++i)
          dot += g[base + i * av.stride] * y[base + i * av.stride];
        for (std::int64_t i = 0; i < av.len; ++i)
          ga[base + i * av.stride] += y[base + i * av.stride] * (g[base + i * av.stride] - dot);
      }
      return;
    }

    case Op::kLog: {
      const Tensor& a = V(n.in[0]);
      Tensor& ga = G(n.in[0]);
      for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] / a[i];
      return;
    }

    case Op::kCosineRows: {
      const Tensor &rows = V(n.in[0]), &ref = V(n.in[1]);
      Tensor &gr = G(n.in[0]), &gf = G(n.in[1]);
      const int a = rows.dim(0), c = rows.dim(1);
      double ng2 = 0.0;
      for (int j = 0; j < c; ++j) ng2 += ref[j] * ref[j];
      const double ng = std::sqrt(ng2);
      if (ng < kNormEps) return;
      for (int i = 0; i < a; ++i) {
        const double u = g[i];
        if (u == 0.0) continue;
        const double* rp = &rows.data[static_cast<std::size_t>(i) * c];
        double nr2 = 0.0;
        for (int j = 0; j < c; ++j) nr2 += rp[j] * rp[j];
        const double nr = std::sqrt(nr2);
        if (nr < kNormEps) continue;
        const double cosv = n.value[i];
        const double inv = 1.0 / (nr * ng);
        for (int j = 0; j < c; ++j) {
          gr.data[static_cast<std::size_t>(i) * c + j] += u * (ref[j] * inv - cosv * rp[j] / nr2);
          gf[j] += u * (rp[j] * inv - cosv * ref[j] / ng2);
        }
      }
      return;
    }

    case Op::kMinAll:
    case Op::kMaxAll: {
      G(n.in[0])[n.i1] += g[0];
      return;
    }

    case Op::kRescale: {
      const Tensor& a = V(n.in[0]);
      Tensor& ga = G(n.in[0]);
      double mx = a[0], mn = a[0];
      int p = 0, q = 0;
      for (std::int64_t i = 1; i < a.size(); ++i) {
        if (a[i] > mx) { mx = a[i]; p = static_cast<int>(i); }
        if (a[i] < mn) { mn = a[i]; q = static_cast<int>(i); }
      }
      const double d = mx - mn;
      if (d < kRangeEps) return;  // constant input: output pinned at zeros
      double s = 0.0, t = 0.0;
      for (std::int64_t i = 0; i < g.size(); ++i) {
        s += g[i];
        t += g[i] * n.value[i];
      }
      for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * g[i] / d;
      ga[p] -= (s + t) / d;
      ga[q] -= (s - t) / d;
      return;
    }

    case Op::kSmoothL1: {
      const Tensor& a = V(n.in[0]);
      Tensor& ga = G(n.in[0]);
      for (std::int64_t i = 0; i < g.size(); ++i) {
        const double x = a[i];
        ga[i] += g[i] * (std::abs(x) < 1.0 ? x : (x > 0.0 ? 1.0 : -1.0));
      }
      return;
    }

    case Op::kCrossEntropy: {
      const Tensor& a = V(n.in[0]);
      Tensor& ga = G(n.in[0]);
      double mx = a[0];
      for (std::int64_t i = 1; i < a.size(); ++i) mx = std::max(mx, a[i]);
      double den = 0.0;
      for (std::int64_t i = 0; i < a.size(); ++i) den += std::exp(a[i] - mx);
      const double gv = g[0];
      for (std::int64_t i = 0; i < a.size(); ++i)
        ga[i] += gv * (std::exp(a[i] - mx) / den - (i == n.i0 ? 1.0 : 0.0));
      return;
    }

    case Op::kBceLogits: {
      const Tensor& a = V(n.in[0]);
      Tensor& ga = G(n.in[0]);
      const double gv = g[0];
      for (std::int64_t i = 0; i < a.size(); ++i)
        ga[i] += gv * (sigmoid(a[i]) - n.aux[static_cast<std::size_t>(i)]);
      return;
    }

    case Op::kSumAll: {
      Tensor& ga = G(n.in[0]);
      const double gv = g[0];
      for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += gv;
      return;
    }

    case Op::kPickRow: {
      Tensor& ga = G(n.in[0]);
      const int c = n.value.dim(1);
      for (int j = 0; j < c; ++j) ga.data[static_cast<std::size_t>(n.i0) * c + j] += g[j];
      return;
    }

    case Op::kPickElem: {
      G(n.in[0])[n.i0] += g[0];
      return;
    }

    case Op::kGatherElems: {
      Tensor& ga = G(n.in[0]);
      for (std::size_t i = 0; i < n.idx.size(); ++i) ga[n.idx[i]] += g[static_cast<std::int64_t>(i)];
      return;
    }

    case Op::kReshape: {
      Tensor& ga = G(n.in[0]);
      for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      return;
    }

    case Op::kConcatRows: {
      std::int64_t off = 0;
      for (int i : n.in) {
        Tensor& gp = G(i);
        for (std::int64_t j = 0; j < gp.size(); ++j) gp[j] += g[off + j];
        off += gp.size();
      }
      return;
    }

    case Op::kSliceTime: {
      Tensor& ga = G(n.in[0]);
      const std::int64_t block = g.size();
      for (std::int64_t i = 0; i < block; ++i) ga[n.i0 * block + i] += g[i];
      return;
    }

    case Op::kStackTime: {
      const int t = static_cast<int>(n.in.size());
      const int c = n.value.dim(0), h = n.value.dim(2), w = n.value.dim(3);
      const std::int64_t hw = static_cast<std::int64_t>(h) * w;
      for (int ti = 0; ti < t; ++ti) {
        Tensor& gf = G(n.in[static_cast<std::size_t>(ti)]);
        for (int ch = 0; ch < c; ++ch)
          for (std::int64_t i = 0; i < hw; ++i)
            gf[ch * hw + i] += g[(static_cast<std::int64_t>(ch) * t + ti) * hw + i];
      }
      return;
    }

    case Op::kAvgPool2d: {
      Tensor& ga = G(n.in[0]);
      const int c = n.value.dim(0), oh = n.value.dim(1), ow = n.value.dim(2);
      const int h = V(n.in[0]).dim(1), w = V(n.in[0]).dim(2), k = n.i0, s = n.i1;
      const double inv = 1.0 / (k * k);
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y)
          for (int x = 0; x < ow; ++x) {
            const double gv = g.data[(static_cast<std::size_t>(ch) * oh + y) * ow + x] * inv;
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx)
                ga.data[(static_cast<std::size_t>(ch) * h + y * s + ky) * w + x * s + kx] += gv;
          }
      return;
    }

    case Op::kGlobalAvgPool: {
      Tensor& ga = G(n.in[0]);
      const int c = n.value.dim(1);
      const std::int64_t hw = ga.size() / c;
      for (int ch = 0; ch < c; ++ch) {
        const double gv = g[ch] / static_cast<double>(hw);
        for (std::int64_t i = 0; i < hw; ++i) ga[ch * hw + i] += gv;
      }
      return;
    }

    case Op::kMeanTime: {
      Tensor& ga = G(n.in[0]);
      const Tensor& a = V(n.in[0]);
      const int c = a.dim(0), t = a.dim(1);
      const std::int64_t hw = static_cast<std::int64_t>(a.dim(2)) * a.dim(3);
      for (int ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < hw; ++i) {
          const double gv = g[ch * hw + i] / t;
          for (int ti = 0; ti < t; ++ti) ga[(static_cast<std::int64_t>(ch) * t + ti) * hw + i] += gv;
        }
      return;
    }

    case Op::kHeadToRows: {
      Tensor& ga = G(n.in[0]);
      const int pc = n.i0, f = n.i1;
      const int gsz = V(n.in[0]).dim(1);
      for (int y = 0; y < gsz; ++y)
        for (int x = 0; x < gsz; ++x)
          for (int j = 0; j < pc; ++j)
            for (int fi = 0; fi < f; ++fi)
              ga.data[(static_cast<std::size_t>(j * f + fi) * gsz + y) * gsz + x] +=
                  g.data[static_cast<std::size_t>((y * gsz + x) * pc + j) * f + fi];
      return;
    }

    case Op::kRegionPool: {
      Tensor& ga = G(n.in[0]);
      const Tensor& a = V(n.in[0]);
      const int c = a.dim(0), h = a.dim(1), w = a.dim(2), out_sz = n.i0;
      auto clampi = [](int v, int lo, int hi) { return std::max(lo, std::min(hi, v)); };
      int px0 = clampi(static_cast<int>(std::floor(n.aux[0] * w)), 0, w - 1);
      int py0 = clampi(static_cast<int>(std::floor(n.aux[1] * h)), 0, h - 1);
      int px1 = clampi(static_cast<int>(std::ceil(n.aux[2] * w)) - 1, px0, w - 1);
      int py1 = clampi(static_cast<int>(std::ceil(n.aux[3] * h)) - 1, py0, h - 1);
      const int rw = px1 - px0 + 1, rh = py1 - py0 + 1;
      for (int ch = 0; ch < c; ++ch)
        for (int sy = 0; sy < out_sz; ++sy)
          for (int sx = 0; sx < out_sz; ++sx) {
            const int y0 = py0 + sy * rh / out_sz, y1 = py0 + (sy + 1) * rh / out_sz;
            const int x0 = px0 + sx * rw / out_sz, x1 = px0 + (sx + 1) * rw / out_sz;
            int cnt = 0;
            for (int y = y0; y < std::max(y1, y0 + 1); ++y)
              for (int x = x0; x < std::max(x1, x0 + 1); ++x) ++cnt;
            const double gv = g[(static_cast<std::int64_t>(ch) * out_sz + sy) * out_sz + sx] / cnt;
            for (int y = y0; y < std::max(y1, y0 + 1); ++y)
              for (int x = x0; x < std::max(x1, x0 + 1); ++x)
                ga.data[(static_cast<std::size_t>(ch) * h + std::min(y, h - 1)) * w + std::min(x, w - 1)] += gv;
          }
      return;
    }

    case Op::kBroadcastRow: {
      Tensor& ga = G(n.in[0]);
      const int c = n.value.dim(1);
      for (int r = 0; r < n.i0; ++r)
        for (int j = 0; j < c; ++j) ga[j] += g.data[static_cast<std::size_t>(r) * c + j];
      return;
    }

    case Op::kStopGrad: {
      for (std::int64_t i = 0; i < g.size(); ++i)
        if (g[i] != 0.0) fail(id, "hard argmax is not differentiable");
      return;
    }
  }
}

}  // namespace svnet::ad

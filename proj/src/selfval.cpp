#include "svnet/selfval.hpp"

#include <stdexcept>

namespace svnet::selfval {

void ValidationMode::validate() const {
  if (stack_depth < 1) throw std::invalid_argument("ValidationMode: stack_depth must be >= 1");
}

ValidationMode parse_mode(const std::string& text) {
  ValidationMode m;
  std::string base = text;
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    base = text.substr(0, colon);
    m.stack_depth = std::stoi(text.substr(colon + 1));
  }
  if (base == "none") m.kind = ModeKind::kNone;
  else if (base == "half") m.kind = ModeKind::kHalf;
  else if (base == "full-soft") m.kind = ModeKind::kFullSoft;
  else if (base == "full-hard") m.kind = ModeKind::kFullHard;
  else if (base == "soft-attn") m.kind = ModeKind::kSoftAttn;
  else throw std::invalid_argument("unknown validation mode '" + text + "'");
  m.validate();
  return m;
}

std::string mode_name(const ValidationMode& mode) {
  std::string base;
  switch (mode.kind) {
    case ModeKind::kNone: base = "none"; break;
    case ModeKind::kHalf: base = "half"; break;
    case ModeKind::kFullSoft: base = "full-soft"; break;
    case ModeKind::kFullHard: base = "full-hard"; break;
    case ModeKind::kSoftAttn: base = "soft-attn"; break;
  }
  if (mode.stack_depth > 1) base += ":" + std::to_string(mode.stack_depth);
  return base;
}

int argmax_index(const Tensor& v) {
  int arg = 0;
  for (std::int64_t i = 1; i < v.size(); ++i)
    if (v[i] > v[arg]) arg = static_cast<int>(i);
  return arg;
}

BuiltValidation build(ad::Graph& g, int a, int c_global, int c_box,
                      const ValidationMode& mode, bool for_training) {
  mode.validate();
  if (for_training && mode.kind == ModeKind::kFullHard)
    throw std::invalid_argument("hard argmax is not differentiable");

  const int n_anchors = g.value(a).dim(0);
  const int n_classes = g.value(c_global).dim(1);
  if (g.value(c_box).dim(0) != n_anchors || g.value(c_box).dim(1) != n_classes)
    throw std::invalid_argument("self_validate: inconsistent (a,c) shapes");

  BuiltValidation out;
  if (mode.kind == ModeKind::kNone) {
    out.v_attn = g.constant(Tensor({n_anchors, 1}, 0.0));
    out.a_prime = a;
    out.a_tilde = g.softmax(a);
    out.v_class = g.constant(Tensor({1, n_classes}, 0.0));
    out.c_global_prime = c_global;
    out.m = argmax_index(g.value(a));
    return out;
  }

  if (mode.kind == ModeKind::kHalf) {
    out.v_attn = g.cosine_rows(c_box, c_global);
    out.a_prime = g.add(g.rescale(a), out.v_attn);
    out.a_tilde = g.softmax(out.a_prime);
    out.v_class = g.constant(Tensor({1, n_classes}, 0.0));
    out.c_global_prime = c_global;  // global estimate stays raw
    out.m = argmax_index(g.value(out.a_prime));
    return out;
  }

  int cur_a = a;
  int cur_global = c_global;
  for (int pass = 0; pass < mode.stack_depth; ++pass) {
    out.v_attn = g.cosine_rows(c_box, cur_global);
    if (mode.kind == ModeKind::kSoftAttn) {
      out.a_prime = g.mul(cur_a, g.softmax(out.v_attn));
    } else {
      out.a_prime = g.add(g.rescale(cur_a), out.v_attn);
    }
    out.a_tilde = g.softmax(out.a_prime);
    out.m = argmax_index(g.value(out.a_prime));
    if (mode.kind == ModeKind::kFullHard) {
      out.v_class = g.stop_grad(g.pick_row(c_box, out.m));
    } else {
      // soft argmax: weighted mixture of the per-anchor class rows
      out.v_class = g.matmul(g.reshape(out.a_tilde, {1, n_anchors}), c_box);
    }
    out.c_global_prime = g.add(g.rescale(cur_global), g.rescale(out.v_class));
    cur_a = out.a_prime;
    cur_global = out.c_global_prime;
  }
  return out;
}

ValidatedOutputs self_validate(const Tensor& a, const Tensor& c_global, const Tensor& c_box,
                               const ValidationMode& mode) {
  ad::Graph g;
  const int an = g.input("a", a, false);
  const int gn = g.input("c_global", c_global, false);
  const int bn = g.input("c_box", c_box, false);
  const BuiltValidation b = build(g, an, gn, bn, mode, /*for_training=*/false);
  ValidatedOutputs out;
  out.v_attn = g.value(b.v_attn);
  out.a_prime = g.value(b.a_prime);
  out.a_tilde = g.value(b.a_tilde);
  out.v_class = g.value(b.v_class);
  out.c_global_prime = g.value(b.c_global_prime);
  out.m = b.m;
  return out;
}

Tensor attention_validation(const Tensor& c_global, const Tensor& c_box) {
  ad::Graph g;
  return g.value(g.cosine_rows(g.input("c_box", c_box, false), g.input("c_global", c_global, false)));
}

Tensor rescale(const Tensor& v) {
  ad::Graph g;
  return g.value(g.rescale(g.input("v", v, false)));
}

Tensor update_attention(const Tensor& a, const Tensor& v_attn) {
  ad::Graph g;
  return g.value(g.add(g.rescale(g.input("a", a, false)), g.input("v", v_attn, false)));
}

void class_validation_soft(const Tensor& a_prime, const Tensor& c_box,
                           Tensor* a_tilde, Tensor* v_class) {
  ad::Graph g;
  const int ap = g.input("a_prime", a_prime, false);
  const int cb = g.input("c_box", c_box, false);
  const int at = g.softmax(ap);
  const int vc = g.matmul(g.reshape(at, {1, c_box.dim(0)}), cb);
  *a_tilde = g.value(at);
  *v_class = g.value(vc);
}

void class_validation_hard(const Tensor& a_prime, const Tensor& c_box,
                           int* m, Tensor* v_class) {
  if (a_prime.dim(0) != c_box.dim(0))
    throw std::invalid_argument("class_validation_hard: shape mismatch");
  *m = argmax_index(a_prime);
  Tensor row({1, c_box.dim(1)});
  for (int j = 0; j < c_box.dim(1); ++j) row[j] = c_box.at(*m, j);
  *v_class = std::move(row);
}

Tensor update_global_class(const Tensor& c_global, const Tensor& v_class) {
  ad::Graph g;
  return g.value(g.add(g.rescale(g.input("c", c_global, false)),
                       g.rescale(g.input("v", v_class, false))));
}

Tensor soft_attention_update(const Tensor& a, const Tensor& v_attn) {
  ad::Graph g;
  return g.value(g.mul(g.input("a", a, false), g.softmax(g.input("v", v_attn, false))));
}

}  // namespace svnet::selfval

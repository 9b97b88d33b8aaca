#include "svnet/checks.hpp"

#include <cmath>

#include "svnet/rng.hpp"

namespace svnet::checks {

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -2.0, double hi = 2.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Push coordinates away from the relu kink at 0.
Tensor away_from_zero(Tensor t, double margin = 1e-2) {
  for (auto& v : t.data)
    if (std::abs(v) < margin) v = v < 0.0 ? v - margin : v + margin;
  return t;
}

// Push coordinates away from the smooth-L1 kinks at +-1.
Tensor away_from_unit(Tensor t, double margin = 1e-2) {
  for (auto& v : t.data)
    if (std::abs(std::abs(v) - 1.0) < margin) v += (std::abs(v) > 1.0 ? margin : -margin) * (v < 0 ? -1 : 1);
  return t;
}

// Resample until the two largest (and two smallest) entries are separated,
// so argmax/argmin subgradients are unambiguous.
Tensor separated_extremes(Rng& rng, int n, double gap = 1e-3) {
  for (int tries = 0; tries < 200; ++tries) {
    Tensor t = random_tensor(rng, {n});
    std::vector<double> sorted(t.data);
    std::sort(sorted.begin(), sorted.end());
    if (sorted[1] - sorted[0] >= gap && sorted[sorted.size() - 1] - sorted[sorted.size() - 2] >= gap)
      return t;
  }
  throw std::runtime_error("separated_extremes: could not sample a tie-free point");
}

int project_to_scalar(ad::Graph& g, int node, Rng& rng) {
  Tensor r = random_tensor(rng, g.value(node).shape, -1.0, 1.0);
  return g.sum_all(g.mul(node, g.constant(r)));
}

ad::GradReport run_check(const std::string&, const ad::GraphBuilder& build,
                         const TensorMap& point, double eps, double tol) {
  return finite_diff_check(build, point, eps, tol);
}

}  // namespace

std::vector<OpCheck> check_op_catalog(int seeds, double eps, double tol, std::uint64_t base_seed) {
  std::vector<OpCheck> results;

  struct Entry {
    std::string name;
    std::function<ad::GradReport(Rng&)> once;
  };

  auto binary_elementwise = [&](const std::string& opname) {
    return [opname, eps, tol](Rng& rng) {
      TensorMap point{{"a", random_tensor(rng, {3, 4})}, {"b", random_tensor(rng, {3, 4})}};
      Rng proj = rng.fork(11);
      return finite_diff_check(
          [&](ad::Graph& g, const TensorMap& p) {
            const int a = g.input("a", p.at("a"));
            const int b = g.input("b", p.at("b"));
            const int y = opname == "add" ? g.add(a, b) : opname == "sub" ? g.sub(a, b) : g.mul(a, b);
            return project_to_scalar(g, y, proj);
          },
          point, eps, tol);
    };
  };

  std::vector<Entry> entries;
  entries.push_back({"add", binary_elementwise("add")});
  entries.push_back({"sub", binary_elementwise("sub")});
  entries.push_back({"mul", binary_elementwise("mul")});

  entries.push_back({"matmul", [&, eps, tol](Rng& rng) {
    TensorMap point{{"a", random_tensor(rng, {3, 4})}, {"b", random_tensor(rng, {4, 2})}};
    Rng proj = rng.fork(11);
    return finite_diff_check(
        [&](ad::Graph& g, const TensorMap& p) {
          return project_to_scalar(g, g.matmul(g.input("a", p.at("a")), g.input("b", p.at("b"))), proj);
        },
        point, eps, tol);
  }});

  for (const int stride : {1, 2}) {
    entries.push_back({"conv2d_s" + std::to_string(stride), [stride, eps, tol](Rng& rng) {
      TensorMap point{{"x", random_tensor(rng, {2, 5, 5})},
                      {"w", random_tensor(rng, {3, 2, 3, 3}, -0.5, 0.5)},
                      {"b", random_tensor(rng, {3}, -0.5, 0.5)}};
      Rng proj = rng.fork(11);
      return finite_diff_check(
          [&](ad::Graph& g, const TensorMap& p) {
            const int y = g.conv2d(g.input("x", p.at("x")), g.input("w", p.at("w")),
                                   g.input("b", p.at("b")), stride, 1);
            return project_to_scalar(g, y, proj);
          },
          point, eps, tol);
    }});
    entries.push_back({"conv3d_s" + std::to_string(stride), [stride, eps, tol](Rng& rng) {
      TensorMap point{{"x", random_tensor(rng, {2, 3, 4, 4})},
                      {"w", random_tensor(rng, {2, 2, 3, 3, 3}, -0.4, 0.4)},
                      {"b", random_tensor(rng, {2}, -0.4, 0.4)}};
      Rng proj = rng.fork(11);
      return finite_diff_check(
          [&](ad::Graph& g, const TensorMap& p) {
            const int y = g.conv3d(g.input("x", p.at("x")), g.input("w", p.at("w")),
                                   g.input("b", p.at("b")), stride, stride, stride, 1, 1, 1);
            return project_to_scalar(g, y, proj);
          },
          point, eps, tol);
    }});
  }

  entries.push_back({"relu", [eps, tol](Rng& rng) {
    TensorMap point{{"x", away_from_zero(random_tensor(rng, {4, 3}))}};
    Rng proj = rng.fork(11);
    return finite_diff_check(
        [&](ad::Graph& g, const TensorMap& p) {
          return project_to_scalar(g, g.relu(g.input("x", p.at("x"))), proj);
        },
        point, eps, tol);
  }});

  entries.push_back({"softmax_flat", [eps, tol](Rng& rng) {
    TensorMap point{{"x", random_tensor(rng, {9})}};
    Rng proj = rng.fork(11);
    return finite_diff_check(
        [&](ad::Graph& g, const TensorMap& p) {
          return project_to_scalar(g, g.softmax(g.input("x", p.at("x"))), proj);
        },
        point, eps, tol);
  }});

  entries.push_back({"softmax_axis1", [eps, tol](Rng& rng) {
    TensorMap point{{"x", random_tensor(rng, {3, 5})}};
    Rng proj = rng.fork(11);
    return finite_diff_check(
        [&](ad::Graph& g, const TensorMap& p) {
          return project_to_scalar(g, g.softmax(g.input("x", p.at("x")), 1), proj);
        },
        point, eps, tol);
  }});

  entries.push_back({"log", [eps, tol](Rng& rng) {
    TensorMap point{{"x", random_tensor(rng, {6}, 0.1, 3.0)}};
    Rng proj = rng.fork(11);
    return finite_diff_check(
        [&](ad::Graph& g, const TensorMap& p) {
          return project_to_scalar(g, g.log(g.input("x", p.at("x"))), proj);
        },
        point, eps, tol);
  }});

  entries.push_back({"cosine", [eps, tol](Rng& rng) {
    Tensor rows = random_tensor(rng, {4, 5});
    Tensor ref = random_tensor(rng, {5});
    ref[0] += 1.0;  // keep the reference norm comfortably away from zero
    TensorMap point{{"rows", rows}, {"ref", ref}};
    Rng proj = rng.fork(11);
    return finite_diff_check(
        [&](ad::Graph& g, const TensorMap& p) {
          return project_to_scalar(g, g.cosine_rows(g.input("rows", p.at("rows")),
                                                    g.input("ref", p.at("ref"))), proj);
        },
        point, eps, tol);
  }});

  entries.push_back({"min_reduce", [eps, tol](Rng& rng) {
    TensorMap point{{"x", separated_extremes(rng, 8)}};
    return finite_diff_check(
        [&](ad::Graph& g, const TensorMap& p) { return g.min_all(g.input("x", p.at("x"))); },
        point, eps, tol);
  }});

  entries.push_back({"max_reduce", [eps, tol](Rng& rng) {
    TensorMap point{{"x", separated_extremes(rng, 8)}};
    return finite_diff_check(
        [&](ad::Graph& g, const TensorMap& p) { return g.max_all(g.input("x", p.at("x"))); },
        point, eps, tol);
  }});

  entries.push_back({"rescale", [eps, tol](Rng& rng) {
    TensorMap point{{"x", separated_extremes(rng, 8)}};
    Rng proj = rng.fork(11);
    return finite_diff_check(
        [&](ad::Graph& g, const TensorMap& p) {
          return project_to_scalar(g, g.rescale(g.input("x", p.at("x"))), proj);
        },
        point, eps, tol);
  }});

  entries.push_back({"smooth_l1", [eps, tol](Rng& rng) {
    TensorMap point{{"x", away_from_unit(random_tensor(rng, {7}))}};
    Rng proj = rng.fork(11);
    return finite_diff_check(
        [&](ad::Graph& g, const TensorMap& p) {
          return project_to_scalar(g, g.smooth_l1(g.input("x", p.at("x"))), proj);
        },
        point, eps, tol);
  }});

  entries.push_back({"cross_entropy", [eps, tol](Rng& rng) {
    TensorMap point{{"x", random_tensor(rng, {6})}};
    const int target = rng.uniform_int(6);
    return finite_diff_check(
        [&, target](ad::Graph& g, const TensorMap& p) {
          return g.cross_entropy(g.input("x", p.at("x")), target);
        },
        point, eps, tol);
  }});

  entries.push_back({"bce_logits", [eps, tol](Rng& rng) {
    TensorMap point{{"x", random_tensor(rng, {6})}};
    std::vector<double> targets(6);
    for (auto& t : targets) t = rng.uniform_int(2);
    return finite_diff_check(
        [&, targets](ad::Graph& g, const TensorMap& p) {
          return g.bce_logits(g.input("x", p.at("x")), targets);
        },
        point, eps, tol);
  }});

  for (auto& e : entries) {
    OpCheck oc;
    oc.op = e.name;
    oc.report.pass = true;
    oc.report.epsilon = eps;
    oc.report.tolerance = tol;
    for (int s = 0; s < seeds; ++s) {
      Rng rng(base_seed * 7919 + static_cast<std::uint64_t>(s) * 104729 +
              std::hash<std::string>{}(e.name));
      ad::GradReport r = e.once(rng);
      oc.report.max_abs_err = std::max(oc.report.max_abs_err, r.max_abs_err);
      oc.report.max_rel_err = std::max(oc.report.max_rel_err, r.max_rel_err);
      oc.report.pass = oc.report.pass && r.pass;
    }
    results.push_back(std::move(oc));
  }
  return results;
}

ad::GradReport check_selfval_chain(const selfval::ValidationMode& mode, int seed,
                                   double eps, double tol) {
  Rng rng(0xC0FFEE + static_cast<std::uint64_t>(seed));
  const int a = 6, c = 4;
  TensorMap point;
  // Separated attention scores and class rows keep the chain away from the
  // rescale/argmax tie sets.
  point["A"] = separated_extremes(rng, a);
  point["A"].shape = {a, 1};
  point["C_global"] = random_tensor(rng, {1, c}, -1.5, 1.5);
  point["C_global"][0] += 2.0;  // nonzero norm
  point["C_box"] = random_tensor(rng, {a, c}, -1.5, 1.5);
  for (int i = 0; i < a; ++i) point["C_box"].at(i, 0) += 2.0;
  Rng proj = rng.fork(5);
  Tensor r1 = random_tensor(proj, {a, 1}, -1.0, 1.0);
  Tensor r2 = random_tensor(proj, {1, c}, -1.0, 1.0);
  return finite_diff_check(
      [&](ad::Graph& g, const TensorMap& p) {
        const int an = g.input("A", p.at("A"));
        const int gn = g.input("C_global", p.at("C_global"));
        const int bn = g.input("C_box", p.at("C_box"));
        const selfval::BuiltValidation b = selfval::build(g, an, gn, bn, mode, true);
        const int s1 = g.sum_all(g.mul(b.a_prime, g.constant(r1)));
        const int s2 = g.sum_all(g.mul(b.c_global_prime, g.constant(r2)));
        return g.add(s1, s2);
      },
      point, eps, tol);
}

}  // namespace svnet::checks

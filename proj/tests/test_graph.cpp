#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "svnet/graph.hpp"
#include "svnet/rng.hpp"

using svnet::Tensor;
using svnet::TensorMap;
using svnet::ad::Graph;

TEST_SUITE("graph") {

TEST_CASE("identity forward returns the bound tensor") {
  Graph g;
  const int x = g.input("x", Tensor::mat(2, 2, {1, 2, 3, 4}));
  g.set_output("y", x);
  const TensorMap out = g.forward({{"x", Tensor::mat(2, 2, {1, 2, 3, 4})}});
  CHECK(out.at("y").data == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("softmax of a constant vector is uniform") {
  Graph g;
  const int y = g.softmax(g.input("x", Tensor::vec({0, 0, 0})));
  for (int i = 0; i < 3; ++i) CHECK(g.value(y)[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("softmax rows/cols of a 2-D tensor normalize along the chosen axis") {
  Graph g;
  const int x = g.input("x", Tensor::mat(2, 3, {1, 2, 3, 0, 0, 10}));
  const int rows = g.softmax(x, 1);
  const int cols = g.softmax(x, 0);
  for (int r = 0; r < 2; ++r) {
    double s = 0;
    for (int c = 0; c < 3; ++c) s += g.value(rows).at(r, c);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  for (int c = 0; c < 3; ++c) {
    double s = 0;
    for (int r = 0; r < 2; ++r) s += g.value(cols).at(r, c);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("softmax outputs are nonnegative and sum to one on random vectors") {
  svnet::Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(17);
    for (auto& x : v) x = rng.uniform(-30.0, 30.0);
    Graph g;
    const int y = g.softmax(g.input("x", Tensor::vec(v)));
    double s = 0;
    for (std::int64_t i = 0; i < 17; ++i) {
      CHECK(g.value(y)[i] >= 0.0);
      s += g.value(y)[i];
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("cosine of [3,4] and [4,3] is 0.96") {
  Graph g;
  const int c = g.cosine_rows(g.input("u", Tensor::mat(1, 2, {3, 4})),
                              g.input("v", Tensor::vec({4, 3})));
  CHECK(g.value(c)[0] == doctest::Approx(0.96).epsilon(1e-15));
}

TEST_CASE("gradient of sum is all ones for any shape") {
  Graph g;
  const int x = g.input("x", Tensor({2, 3, 2}, 1.5));
  const int s = g.sum_all(x);
  g.backward_scalar(s);
  for (std::int64_t i = 0; i < 12; ++i) CHECK(g.grad(x)[i] == 1.0);
}

TEST_CASE("gradient of softmax coordinate 0 at [0,0] is [0.25,-0.25]") {
  Graph g;
  const int x = g.input("x", Tensor::vec({0, 0}));
  const int p = g.pick_elem(g.softmax(x), 0);
  g.backward_scalar(p);
  CHECK(g.grad(x)[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(g.grad(x)[1] == doctest::Approx(-0.25).epsilon(1e-14));
}

TEST_CASE("cosine gradient vanishes at u == v") {
  Graph g;
  const int u = g.input("u", Tensor::mat(1, 3, {1, 2, 3}));
  const int v = g.input("v", Tensor::vec({1, 2, 3}), false);
  const int c = g.cosine_rows(u, v);
  g.backward_scalar(g.sum_all(c));
  for (int j = 0; j < 3; ++j) CHECK(std::abs(g.grad(u)[j]) <= 1e-14);
}

TEST_CASE("repeated backward with the same seed is bit-identical") {
  svnet::Rng rng(3);
  std::vector<double> v(12);
  for (auto& x : v) x = rng.normal();
  Graph g;
  const int x = g.input("x", Tensor::mat(3, 4, v));
  const int y = g.sum_all(g.mul(g.softmax(x, 1), g.relu(x)));
  g.backward_scalar(y);
  const Tensor g1 = g.grad(x);
  g.backward_scalar(y);
  const Tensor g2 = g.grad(x);
  CHECK(g1.data == g2.data);
}

TEST_CASE("matmul against a hand-computed product") {
  Graph g;
  const int a = g.input("a", Tensor::mat(2, 3, {1, 2, 3, 4, 5, 6}));
  const int b = g.input("b", Tensor::mat(3, 2, {7, 8, 9, 10, 11, 12}));
  const int c = g.matmul(a, b);
  CHECK(g.value(c).data == std::vector<double>{58, 64, 139, 154});
}

TEST_CASE("conv2d matches a hand-computed window") {
  Graph g;
  // 1x3x3 input, 1x1x2x2 kernel, stride 1, no padding
  const int x = g.input("x", [] {
    Tensor t({1, 3, 3});
    t.data = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    return t;
  }());
  const int w = g.input("w", [] {
    Tensor t({1, 1, 2, 2});
    t.data = {1, 0, 0, 1};
    return t;
  }());
  const int b = g.input("b", Tensor::vec({0.5}));
  const int y = g.conv2d(x, w, b, 1, 0);
  CHECK(g.value(y).shape == std::vector<int>{1, 2, 2});
  CHECK(g.value(y).data == std::vector<double>{6.5, 8.5, 12.5, 14.5});
}

TEST_CASE("conv2d stride 2 pad 1 halves spatial dims") {
  Graph g;
  const int x = g.input("x", Tensor({3, 8, 8}, 0.25));
  const int w = g.input("w", Tensor({4, 3, 3, 3}, 0.1));
  const int b = g.input("b", Tensor({4}, 0.0));
  const int y = g.conv2d(x, w, b, 2, 1);
  CHECK(g.value(y).shape == std::vector<int>{4, 4, 4});
}

TEST_CASE("conv3d shape bookkeeping") {
  Graph g;
  const int x = g.input("x", Tensor({2, 7, 8, 8}, 0.1));
  const int w = g.input("w", Tensor({3, 2, 3, 3, 3}, 0.05));
  const int b = g.input("b", Tensor({3}, 0.0));
  const int y = g.conv3d(x, w, b, 1, 2, 2, 1, 1, 1);
  CHECK(g.value(y).shape == std::vector<int>{3, 7, 4, 4});
  const int y2 = g.conv3d(y, g.input("w2", Tensor({3, 3, 3, 3, 3}, 0.05)),
                          g.input("b2", Tensor({3}, 0.0)), 2, 2, 2, 1, 1, 1);
  CHECK(g.value(y2).shape == std::vector<int>{3, 4, 2, 2});
}

TEST_CASE("rescale maps [0,1,2] to [-1,0,1] with exact endpoints") {
  Graph g;
  const int y = g.rescale(g.input("x", Tensor::vec({0, 1, 2})));
  CHECK(g.value(y)[0] == -1.0);
  CHECK(g.value(y)[1] == 0.0);
  CHECK(g.value(y)[2] == 1.0);
}

TEST_CASE("rescale of a constant vector is all zeros") {
  Graph g;
  const int y = g.rescale(g.input("x", Tensor::vec({5, 5, 5})));
  for (int i = 0; i < 3; ++i) CHECK(g.value(y)[i] == 0.0);
}

TEST_CASE("cross entropy of one-hot-favoring logits") {
  Graph g;
  // softmax([ln 3, 0]) = [0.75, 0.25]; CE at target 0 = -ln 0.75
  const int x = g.input("x", Tensor::vec({std::log(3.0), 0}));
  const int l = g.cross_entropy(x, 0);
  CHECK(g.value(l)[0] == doctest::Approx(-std::log(0.75)).epsilon(1e-14));
}

TEST_CASE("head_to_rows lays anchors out row-major with ratio minor") {
  Graph g;
  // per_cell=2, fields=1, G=2: channel j holds anchor j of every cell
  Tensor t({2, 2, 2});
  t.data = {0, 1, 2, 3, 10, 11, 12, 13};
  const int y = g.head_to_rows(g.input("x", t), 2, 1);
  CHECK(g.value(y).shape == std::vector<int>{8, 1});
  CHECK(g.value(y).data == std::vector<double>{0, 10, 1, 11, 2, 12, 3, 13});
}

TEST_CASE("shape mismatch raises an error naming the node") {
  Graph g;
  const int a = g.input("a", Tensor::vec({1, 2}));
  const int b = g.input("b", Tensor::vec({1, 2, 3}));
  CHECK_THROWS_WITH_AS(g.add(a, b), doctest::Contains("add"), std::runtime_error);
}

TEST_CASE("non-finite intermediate raises an error naming the node") {
  Graph g;
  const int a = g.input("a", Tensor::vec({500, 0}));
  const int e = g.mul(a, a);           // 250000, fine
  const int big = g.mul_const(e, 1e300);
  CHECK_THROWS_WITH_AS(g.mul(big, big), doctest::Contains("mul"), std::runtime_error);
}

TEST_CASE("backward before forward on a placeholder graph is an error") {
  Graph g;
  const int x = g.placeholder("x", {2});
  const int y = g.sum_all(x);
  g.set_output("y", y);
  CHECK_THROWS_WITH_AS(g.backward({{"y", Tensor::scalar(1.0)}}),
                       doctest::Contains("backward before forward"), std::runtime_error);
  g.forward({{"x", Tensor::vec({1, 2})}});
  const TensorMap grads = g.backward({{"y", Tensor::scalar(1.0)}});
  CHECK(grads.at("x").data == std::vector<double>{1, 1});
}

TEST_CASE("unbound placeholder at forward is an error") {
  Graph g;
  g.placeholder("x", {2});
  const int y = g.input("y", Tensor::vec({1, 1}));
  g.set_output("o", y);
  CHECK_THROWS_WITH_AS(g.reforward(), doctest::Contains("unbound"), std::runtime_error);
}

TEST_CASE("stop_grad blocks gradient flow with the documented message") {
  Graph g;
  const int x = g.input("x", Tensor::vec({1, 2}));
  const int y = g.sum_all(g.stop_grad(x));
  CHECK_THROWS_WITH_AS(g.backward_scalar(y), doctest::Contains("hard argmax"), std::runtime_error);
}

TEST_CASE("log rejects nonpositive input") {
  Graph g;
  const int x = g.input("x", Tensor::vec({1.0, 0.0}));
  CHECK_THROWS_AS(g.log(x), std::runtime_error);
}

}  // TEST_SUITE

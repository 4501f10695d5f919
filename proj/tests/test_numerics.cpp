#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "ddn/numerics/graph.hpp"
#include "ddn/numerics/optim.hpp"
#include "ddn/numerics/checkpoint.hpp"
#include "oracles.hpp"

using namespace ddn;
using namespace ddn::numerics;
using oracles::gradcheck;

TEST_CASE("tensor invariants") {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), DimensionError);
  CHECK_THROWS_AS(Tensor({0, 2}), DimensionError);
  t.ensure_grad();
  CHECK(t.grad.size() == t.data.size());
}

TEST_CASE("matmul identity and hand cases") {
  Graph g;
  Val i2 = g.constant(Tensor::identity(2));
  Val m = g.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Val p = g.matmul(i2, m);
  CHECK(g.value(p) == std::vector<double>{1, 2, 3, 4});

  Val a = g.constant(Tensor::matrix(1, 2, {1, 2}));
  Val b = g.constant(Tensor::matrix(2, 1, {3, 4}));
  CHECK(g.value(g.matmul(a, b)) == std::vector<double>{11});
}

TEST_CASE("matmul shape error includes both shapes") {
  Graph g;
  Val a = g.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  Val b = g.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  try {
    g.matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x2]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient: closed form and finite differences") {
  std::mt19937_64 rng(7);
  Tensor a({3, 4}, oracles::random_vec(rng, 12));
  Tensor b({4, 2}, oracles::random_vec(rng, 8));
  a.requires_grad = true;
  b.requires_grad = true;

  auto loss = [&](bool bw) {
    Graph g;
    Val out = g.matmul(g.param(a), g.param(b));
    Val l = g.sum_all(out);
    if (bw) g.backward(l);
    return g.scalar(l);
  };
  auto res = gradcheck({&a, &b}, loss);
  CHECK(res.max_rel_err < 1e-6);

  // d(sum(a.b))/da = ones(3,2) . b^T
  a.zero_grad();
  b.zero_grad();
  loss(true);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 4; ++k) {
      double expect = 0;
      for (int j = 0; j < 2; ++j) expect += b.at(k, j);
      CHECK(a.grad[static_cast<size_t>(i) * 4 + k] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("activations: definitions") {
  Graph g;
  Val s = g.activation(g.constant(Tensor::row({0, 0})), Act::softmax_lastdim);
  CHECK(g.value(s)[0] == doctest::Approx(0.5));
  CHECK(g.value(s)[1] == doctest::Approx(0.5));

  Val r = g.activation(g.constant(Tensor::row({-1, 0, 2})), Act::relu);
  CHECK(g.value(r) == std::vector<double>{0, 0, 2});

  Val sg = g.activation(g.constant(Tensor::scalar(0.0)), Act::sigmoid);
  CHECK(g.scalar(sg) == doctest::Approx(0.5));

  Val ab = g.activation(g.constant(Tensor::row({-3, 4})), Act::abs);
  CHECK(g.value(ab) == std::vector<double>{3, 4});
}

TEST_CASE("softmax rows are nonnegative and sum to one") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Graph g;
    Tensor x({4, 6}, oracles::random_vec(rng, 24, -10, 10));
    Val s = g.activation(g.constant(x), Act::softmax_lastdim);
    const auto& v = g.value(s);
    for (int r = 0; r < 4; ++r) {
      double sum = 0;
      for (int c = 0; c < 6; ++c) {
        CHECK(v[static_cast<size_t>(r) * 6 + c] >= 0.0);
        sum += v[static_cast<size_t>(r) * 6 + c];
      }
      CHECK(std::fabs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("backward: sum gives ones, mse hand derivative") {
  Tensor w({1, 3}, {1, 2, 3});
  w.requires_grad = true;
  {
    Graph g;
    Val l = g.sum_all(g.param(w));
    g.backward(l);
    CHECK(w.grad == std::vector<double>{1, 1, 1});
  }
  Tensor w2 = Tensor::scalar(2.0);
  w2.requires_grad = true;
  {
    Graph g;
    Val l = mse(g, g.param(w2), g.constant(Tensor::scalar(0.0)));
    CHECK(g.scalar(l) == doctest::Approx(4.0));
    g.backward(l);
    CHECK(w2.grad[0] == doctest::Approx(4.0));
  }
}

TEST_CASE("backward contract: scalar loss only, one pass per graph") {
  Tensor w({2, 2}, {1, 2, 3, 4});
  w.requires_grad = true;
  Graph g;
  Val p = g.param(w);
  CHECK_THROWS_AS(g.backward(p), ContractError);
  Graph g2;
  Val l = g2.sum_all(g2.param(w));
  g2.backward(l);
  CHECK_THROWS_AS(g2.backward(l), ContractError);
}

TEST_CASE("gradients accumulate across graphs until cleared") {
  Tensor w({1, 2}, {1, 1});
  w.requires_grad = true;
  for (int i = 0; i < 3; ++i) {
    Graph g;
    g.backward(g.sum_all(g.param(w)));
  }
  CHECK(w.grad == std::vector<double>{3, 3});
  w.zero_grad();
  CHECK(!w.has_grad());
}

// Per-op finite-difference sweep: every differentiable op, 100 random inputs.
TEST_CASE("per-op gradcheck against central differences") {
  std::mt19937_64 rng(23);
  auto rnd = [&](Tensor& t, bool kinkfree = false) {
    auto v = oracles::random_vec(rng, static_cast<size_t>(t.numel()));
    if (kinkfree)
      for (double& x : v) x = oracles::away_from_kinks(x);
    t.data = v;
  };

  auto run = [&](const char* name, const std::function<double(Graph&, Val, Val, bool)>& body, bool kinkfree,
                 int trials = 100) {
    double worst = 0;
    for (int t = 0; t < trials; ++t) {
      Tensor a({3, 4});
      Tensor b({3, 4});
      rnd(a, kinkfree);
      rnd(b, kinkfree);
      a.requires_grad = true;
      b.requires_grad = true;
      auto loss = [&](bool bw) {
        Graph g;
        Val va = g.param(a);
        Val vb = g.param(b);
        return body(g, va, vb, bw);
      };
      auto res = gradcheck({&a, &b}, loss);
      worst = std::max(worst, res.max_rel_err);
    }
    INFO(name);
    CHECK(worst < 1e-4);
  };

  // Random weighting on outputs so transposition errors cannot cancel.
  auto weighted_sum = [&rng](Graph& g, Val x) {
    const auto& shp = g.shape(x);
    size_t n = 1;
    for (int d : shp) n *= static_cast<size_t>(d);
    Tensor w(shp, oracles::random_vec(rng, n));
    return g.sum_all(g.mul(x, g.constant(w)));
  };
  auto finish = [&](Graph& g, Val out, bool bw) {
    Val l = weighted_sum(g, out);
    if (bw) g.backward(l);
    return g.scalar(l);
  };

  run("add", [&](Graph& g, Val a, Val b, bool bw) { return finish(g, g.add(a, b), bw); }, false);
  run("sub", [&](Graph& g, Val a, Val b, bool bw) { return finish(g, g.sub(a, b), bw); }, false);
  run("mul", [&](Graph& g, Val a, Val b, bool bw) { return finish(g, g.mul(a, b), bw); }, false);
  run("scale", [&](Graph& g, Val a, Val, bool bw) { return finish(g, g.scale(a, -1.7), bw); }, false);
  run("add_scalar", [&](Graph& g, Val a, Val, bool bw) { return finish(g, g.add_scalar(a, 0.37), bw); }, false);
  run("relu", [&](Graph& g, Val a, Val, bool bw) { return finish(g, g.activation(a, Act::relu), bw); }, true);
  run("tanh", [&](Graph& g, Val a, Val, bool bw) { return finish(g, g.activation(a, Act::tanh), bw); }, false);
  run("sigmoid", [&](Graph& g, Val a, Val, bool bw) { return finish(g, g.activation(a, Act::sigmoid), bw); }, false);
  run("abs", [&](Graph& g, Val a, Val, bool bw) { return finish(g, g.activation(a, Act::abs), bw); }, true);
  run("elu", [&](Graph& g, Val a, Val, bool bw) { return finish(g, g.activation(a, Act::elu), bw); }, true);
  run("softmax", [&](Graph& g, Val a, Val, bool bw) { return finish(g, g.activation(a, Act::softmax_lastdim), bw); },
      false);
  run("log_softmax",
      [&](Graph& g, Val a, Val, bool bw) { return finish(g, g.activation(a, Act::log_softmax_lastdim), bw); }, false);
  run("sum_all", [&](Graph& g, Val a, Val, bool bw) {
        Val l = g.sum_all(a);
        if (bw) g.backward(l);
        return g.scalar(l);
      },
      false);
  run("slice_cols", [&](Graph& g, Val a, Val, bool bw) { return finish(g, g.slice_cols(a, 1, 3), bw); }, false);
  run("concat_cols", [&](Graph& g, Val a, Val b, bool bw) { return finish(g, g.concat_cols(a, b), bw); }, false);
  run("reshape", [&](Graph& g, Val a, Val, bool bw) { return finish(g, g.reshape(a, {4, 3}), bw); }, false);
  run("gather_cols", [&](Graph& g, Val a, Val, bool bw) { return finish(g, g.gather_cols(a, {2, 0, 3}), bw); }, false);
  run("add_row", [&](Graph& g, Val a, Val, bool bw) {
        Tensor r({1, 4}, {0.3, -0.2, 0.9, 0.1});
        r.requires_grad = false;
        return finish(g, g.add_row(a, g.constant(r)), bw);
      },
      false);

  // ops with their own shapes
  {
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
      Tensor a({3, 4}, oracles::random_vec(rng, 12));
      Tensor b({4, 2}, oracles::random_vec(rng, 8));
      a.requires_grad = b.requires_grad = true;
      auto loss = [&](bool bw) {
        Graph g;
        return finish(g, g.matmul(g.param(a), g.param(b)), bw);
      };
      worst = std::max(worst, gradcheck({&a, &b}, loss).max_rel_err);
    }
    INFO("matmul");
    CHECK(worst < 1e-4);
  }
  {
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
      Tensor x({3, 4}, oracles::random_vec(rng, 12));
      Tensor w({2, 4}, oracles::random_vec(rng, 8));
      Tensor b({1, 2}, oracles::random_vec(rng, 2));
      x.requires_grad = w.requires_grad = b.requires_grad = true;
      auto loss = [&](bool bw) {
        Graph g;
        return finish(g, g.linear(g.param(x), g.param(w), g.param(b)), bw);
      };
      worst = std::max(worst, gradcheck({&x, &w, &b}, loss).max_rel_err);
    }
    INFO("linear");
    CHECK(worst < 1e-4);
  }
  {
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
      Tensor x({3, 2}, oracles::random_vec(rng, 6));
      Tensor w({3, 8}, oracles::random_vec(rng, 24));  // per-row 2x4
      x.requires_grad = w.requires_grad = true;
      auto loss = [&](bool bw) {
        Graph g;
        return finish(g, g.rowwise_matmul(g.param(x), g.param(w), 4), bw);
      };
      worst = std::max(worst, gradcheck({&x, &w}, loss).max_rel_err);
    }
    INFO("rowwise_matmul");
    CHECK(worst < 1e-4);
  }
  {
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
      Tensor v({1, 4}, oracles::random_vec(rng, 4));
      v.requires_grad = true;
      auto loss = [&](bool bw) {
        Graph g;
        return finish(g, g.repeat_rows(g.param(v), 3), bw);
      };
      worst = std::max(worst, gradcheck({&v}, loss).max_rel_err);
    }
    INFO("repeat_rows");
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("two-layer network gradcheck") {
  std::mt19937_64 rng(31);
  Tensor x({4, 5}, oracles::random_vec(rng, 20));
  Tensor w1({6, 5}, oracles::random_vec(rng, 30));
  Tensor b1({1, 6}, oracles::random_vec(rng, 6));
  Tensor w2({1, 6}, oracles::random_vec(rng, 6));
  Tensor b2({1, 1}, oracles::random_vec(rng, 1));
  for (Tensor* t : {&w1, &b1, &w2, &b2}) t->requires_grad = true;

  auto loss = [&](bool bw) {
    Graph g;
    Val h = g.activation(g.linear(g.constant(x), g.param(w1), g.param(b1)), Act::tanh);
    Val y = g.linear(h, g.param(w2), g.param(b2));
    Val l = mse(g, y, g.constant(Tensor({4, 1}, 0.5)));
    if (bw) g.backward(l);
    return g.scalar(l);
  };
  auto res = gradcheck({&w1, &b1, &w2, &b2}, loss);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("forward+backward bit-identical across runs") {
  auto run = [] {
    std::mt19937_64 rng(99);
    Tensor x({4, 5}, oracles::random_vec(rng, 20));
    Tensor w({3, 5}, oracles::random_vec(rng, 15));
    Tensor b({1, 3}, oracles::random_vec(rng, 3));
    w.requires_grad = b.requires_grad = true;
    Graph g;
    Val y = g.activation(g.linear(g.constant(x), g.param(w), g.param(b)), Act::sigmoid);
    Val l = g.sum_all(y);
    g.backward(l);
    std::vector<double> out = {g.scalar(l)};
    out.insert(out.end(), w.grad.begin(), w.grad.end());
    out.insert(out.end(), b.grad.begin(), b.grad.end());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("optimizer: zero gradient is an exact fixed point") {
  for (auto kind : {0, 1}) {
    Tensor p({2, 2}, {1, 2, 3, 4});
    p.requires_grad = true;
    auto opt = kind == 0 ? OptimizerState::rmsprop(0.5) : OptimizerState::adam(0.5);
    opt.attach("p", p);
    std::vector<double> before = p.data;
    p.ensure_grad();
    opt.step();
    CHECK(p.data == before);
    CHECK(!p.has_grad());  // step clears gradients
  }
}

TEST_CASE("rmsprop hand-computed step") {
  Tensor p = Tensor::scalar(1.0);
  p.requires_grad = true;
  auto opt = OptimizerState::rmsprop(0.5, 0.99, 1e-5);
  opt.attach("p", p);
  p.ensure_grad();
  p.grad[0] = 1.0;
  opt.step();
  // acc' = 0.01, p' = 1 - 0.5/(0.1 + 1e-5)
  CHECK(p.data[0] == doctest::Approx(-3.999500049995).epsilon(1e-12));
}

TEST_CASE("adam first step moves by about -lr") {
  Tensor p = Tensor::scalar(0.0);
  p.requires_grad = true;
  auto opt = OptimizerState::adam(0.001);
  opt.attach("p", p);
  p.ensure_grad();
  p.grad[0] = 1.0;
  opt.step();
  CHECK(p.data[0] == doctest::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("optimizer contract: missing grad names the parameter") {
  Tensor p = Tensor::scalar(1.0);
  p.requires_grad = true;
  auto opt = OptimizerState::rmsprop(0.1);
  opt.attach("fusion.w1", p);
  try {
    opt.step();
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("fusion.w1") != std::string::npos);
  }
}

TEST_CASE("optimizer config validation") {
  CHECK_THROWS_AS(OptimizerState::rmsprop(-0.1), ConfigError);
  CHECK_THROWS_AS(OptimizerState::rmsprop(0.1, 1.5), ConfigError);
  CHECK_THROWS_AS(OptimizerState::adam(0.0), ConfigError);
}

TEST_CASE("checkpoint round-trips parameters exactly") {
  std::mt19937_64 rng(5);
  Tensor a({3, 4}, oracles::random_vec(rng, 12));
  Tensor b({1, 7}, oracles::random_vec(rng, 7));
  std::string path = "ckpt_test.json";
  save_checkpoint(path, {{"a", &a}, {"b", &b}}, {{"note", "unit"}});

  Tensor a2({3, 4});
  Tensor b2({1, 7});
  auto meta = load_checkpoint(path, {{"a", &a2}, {"b", &b2}});
  CHECK(meta.at("note") == "unit");
  CHECK(a2.data == a.data);
  CHECK(b2.data == b.data);

  Tensor bad({4, 3});
  CHECK_THROWS_AS(load_checkpoint(path, {{"a", &bad}}), DimensionError);
  CHECK_THROWS_AS(load_checkpoint(path, {{"missing", &bad}}), ContractError);
  std::remove(path.c_str());
}

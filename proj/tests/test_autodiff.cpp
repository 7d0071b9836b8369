#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pairsim/grad_check.hpp"
#include "pairsim/ops.hpp"
#include "pairsim/params.hpp"
#include "pairsim/prng.hpp"

using namespace pairsim;
using Catch::Approx;

namespace {

Tensor rand_tensor(std::vector<std::size_t> shape, std::uint64_t seed, double scale = 1.0) {
  return Tensor::seeded(std::move(shape), seed, scale);
}

// FD-check a scalar-valued expression of named inputs.
double fd_error(const std::function<Tensor(const ParamMap&, Tape*)>& f, ParameterSet& params) {
  return grad_check(f, params, 1e-5).max_rel_err;
}

// Reduce any tensor to a scalar with fixed pseudo-random weights so every
// output entry influences the loss.
Tensor weighted_sum(const Tensor& t, std::uint64_t seed = 9001) {
  Tensor w = Tensor::seeded(t.shape(), seed, 1.0);
  Tensor prod = mul(t, w);
  if (prod.rank() == 1) return linear(prod, Tensor({prod.dim(0), 1}, 1.0));
  Tensor col = matmul(prod, Tensor({prod.dim(1), 1}, 1.0));
  std::vector<Tensor> scalars;
  for (std::size_t i = 0; i < col.dim(0); ++i) scalars.push_back(row(col, i));
  return scale(mean_scalars(scalars), static_cast<double>(scalars.size()));
}

}  // namespace

TEST_CASE("seeded init is bitwise deterministic") {
  Tensor a = Tensor::seeded({4, 7}, 123, 0.05);
  Tensor b = Tensor::seeded({4, 7}, 123, 0.05);
  REQUIRE(a.values() == b.values());
  Tensor c = Tensor::seeded({4, 7}, 124, 0.05);
  REQUIRE(a.values() != c.values());
}

TEST_CASE("seeded init respects the range bound") {
  Tensor t = Tensor::seeded({1000}, 7, 0.05);
  for (double v : t.values()) REQUIRE(std::fabs(v) <= 0.05);
}

TEST_CASE("seeded init mean is within 3 sigma of zero") {
  const std::size_t n = 100000;
  const double scale = 1.0;
  Tensor t = Tensor::seeded({n}, 42, scale);
  double mean = 0.0;
  for (double v : t.values()) mean += v;
  mean /= static_cast<double>(n);
  double sigma_mean = scale / std::sqrt(3.0 * static_cast<double>(n));
  REQUIRE(std::fabs(mean) <= 3.0 * sigma_mean);
}

TEST_CASE("seeded init rejects nonpositive scale and zero dims") {
  REQUIRE_THROWS_AS(Tensor::seeded({3}, 1, 0.0), ShapeError);
  REQUIRE_THROWS_AS(Tensor({0, 3}), ShapeError);
}

TEST_CASE("matmul identity and hand-computed product") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor eye({2, 2}, {1, 0, 0, 1});
  REQUIRE(matmul(a, eye).values() == a.values());

  Tensor ones({2, 1}, {1, 1});
  Tensor p = matmul(a, ones);
  REQUIRE(p.at(0, 0) == Approx(3.0));
  REQUIRE(p.at(1, 0) == Approx(7.0));
}

TEST_CASE("shape mismatches name both shapes") {
  Tensor a({2, 3});
  Tensor b({2, 3});
  REQUIRE_THROWS_WITH(matmul(a, b), Catch::Matchers::ContainsSubstring("[2,3]"));
  Tensor c({4});
  REQUIRE_THROWS_AS(add(a, Tensor({3, 2})), ShapeError);
}

TEST_CASE("gather forwards rows and accumulates duplicate-row gradients") {
  ParameterSet ps;
  ps.add("table", rand_tensor({5, 3}, 11));
  std::vector<int> ids = {2, 2};

  Tape tape;
  ParamMap live = ps.attached(tape);
  Tensor g = gather(live.at("table"), ids);
  for (std::size_t j = 0; j < 3; ++j) {
    REQUIRE(g.at(0, j) == ps.get("table").at(2, j));
    REQUIRE(g.at(1, j) == ps.get("table").at(2, j));
  }
  // loss = sum of all gathered entries; nested-loop reference says the
  // gradient on row 2 is the sum of both output rows' grads = 2 per column.
  std::vector<Tensor> rows;
  Tensor col = matmul(g, Tensor({3, 1}, 1.0));
  rows.push_back(row(col, 0));
  rows.push_back(row(col, 1));
  Tensor loss = scale(mean_scalars(rows), 2.0);
  auto grads = tape.backward(loss);
  const auto& tg = grads[live.at("table").node()];
  for (std::size_t j = 0; j < 3; ++j) {
    REQUIRE(tg[2 * 3 + j] == Approx(2.0));
    REQUIRE(tg[0 * 3 + j] == 0.0);
  }
}

TEST_CASE("gather skips gradient for the masked row") {
  ParameterSet ps;
  ps.add("table", rand_tensor({4, 2}, 3));
  Tape tape;
  ParamMap live = ps.attached(tape);
  Tensor g = gather(live.at("table"), {0, 1}, /*skip_grad_id=*/0);
  Tensor loss = weighted_sum(g);
  auto grads = tape.backward(loss);
  const auto& tg = grads[live.at("table").node()];
  REQUIRE(tg[0] == 0.0);
  REQUIRE(tg[1] == 0.0);
  REQUIRE((tg[2] != 0.0 || tg[3] != 0.0));
}

TEST_CASE("conv1d matches the nested-loop oracle") {
  // input [1,2,3,4] (one channel), kernel [1,-1] -> [-1,-1,-1]
  Tensor in({4, 1}, {1, 2, 3, 4});
  Tensor k({2, 1, 1}, {1, -1});
  Tensor b({1}, 0.0);
  Tensor out = conv1d(in, k, b);
  REQUIRE(out.dim(0) == 3);
  for (std::size_t t = 0; t < 3; ++t) REQUIRE(out.at(t, 0) == Approx(-1.0));

  // delta kernel with identity channels reproduces the input (truncated)
  Tensor in2 = rand_tensor({5, 2}, 17);
  Tensor delta({2, 2, 2}, 0.0);
  delta.at(0, 0, 0) = 1.0;
  delta.at(0, 1, 1) = 1.0;
  Tensor out2 = conv1d(in2, delta, Tensor({2}, 0.0));
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t c = 0; c < 2; ++c) REQUIRE(out2.at(t, c) == Approx(in2.at(t, c)));

  // random oracle
  SplitMix64 rng(5);
  Tensor in3 = rand_tensor({6, 3}, rng.next());
  Tensor k3 = rand_tensor({3, 3, 4}, rng.next());
  Tensor b3 = rand_tensor({4}, rng.next());
  Tensor out3 = conv1d(in3, k3, b3);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t o = 0; o < 4; ++o) {
      double s = b3.at(o);
      for (std::size_t kk = 0; kk < 3; ++kk)
        for (std::size_t c = 0; c < 3; ++c) s += in3.at(t + kk, c) * k3.at(kk, c, o);
      REQUIRE(out3.at(t, o) == Approx(s));
    }
}

TEST_CASE("conv1d rejects inputs shorter than the filter") {
  REQUIRE_THROWS_AS(conv1d(Tensor({2, 1}), Tensor({3, 1, 1}), Tensor({1})), ShapeError);
}

TEST_CASE("conv1d gradient passes finite differences") {
  ParameterSet ps;
  ps.add("in", rand_tensor({6, 3}, 31));
  ps.add("k", rand_tensor({3, 3, 2}, 32));
  ps.add("b", rand_tensor({2}, 33));
  double err = fd_error(
      [](const ParamMap& p, Tape*) {
        return weighted_sum(conv1d(p.at("in"), p.at("k"), p.at("b")));
      },
      ps);
  REQUIRE(err <= 1e-4);
}

TEST_CASE("max pooling forward and tie-breaking") {
  Tensor v({3, 1}, {-1, 5, 2});
  REQUIRE(global_max_pool(v).at(0) == Approx(5.0));

  Tensor w({4, 1}, {1, 3, 2, 2});
  Tensor p = max_pool1d(w, 2);
  REQUIRE(p.dim(0) == 2);
  REQUIRE(p.at(0, 0) == Approx(3.0));
  REQUIRE(p.at(1, 0) == Approx(2.0));

  // tie [2,2]: gradient flows to index 0 only
  ParameterSet ps;
  ps.add("x", Tensor({2, 1}, {2, 2}));
  Tape tape;
  ParamMap live = ps.attached(tape);
  Tensor pooled = max_pool1d(live.at("x"), 2);
  auto grads = tape.backward(row(pooled, 0));
  const auto& gx = grads[live.at("x").node()];
  REQUIRE(gx[0] == 1.0);
  REQUIRE(gx[1] == 0.0);
}

TEST_CASE("activation values and stability") {
  REQUIRE(sigmoid(Tensor::scalar(0.0)).value() == Approx(0.5));
  REQUIRE(tanh_op(Tensor::scalar(0.0)).value() == 0.0);
  REQUIRE(relu(Tensor::scalar(-1.0)).value() == 0.0);

  double tiny = sigmoid(Tensor::scalar(-710.0)).value();
  REQUIRE(std::isfinite(tiny));
  REQUIRE(tiny > 0.0);
  REQUIRE(tiny <= 1e-300);
}

TEST_CASE("activation gradients pass finite differences at 20 random points") {
  SplitMix64 rng(77);
  for (int i = 0; i < 20; ++i) {
    ParameterSet ps;
    ps.add("x", rand_tensor({5}, rng.next(), 2.0));
    for (auto fn : {relu, sigmoid, tanh_op}) {
      double err = fd_error(
          [fn](const ParamMap& p, Tape*) { return weighted_sum(fn(p.at("x"))); }, ps);
      REQUIRE(err <= 1e-4);
    }
  }
}

TEST_CASE("softmax values, stability and shift invariance") {
  Tensor u = softmax(Tensor({2}, {0, 0}));
  REQUIRE(u.at(0) == Approx(0.5));
  REQUIRE(u.at(1) == Approx(0.5));

  Tensor v = softmax(Tensor({2}, {std::log(2.0), 0.0}));
  REQUIRE(v.at(0) == Approx(2.0 / 3.0).epsilon(1e-12));
  REQUIRE(v.at(1) == Approx(1.0 / 3.0).epsilon(1e-12));

  Tensor big = softmax(Tensor({2}, {1000.0, 0.0}));
  REQUIRE(std::isfinite(big.at(0)));
  REQUIRE(big.at(0) >= 1.0 - 1e-12);

  SplitMix64 rng(123);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = rand_tensor({7}, rng.next(), 5.0);
    Tensor s1 = softmax(x);
    double sum = 0.0;
    for (double p : s1.values()) sum += p;
    REQUIRE(sum == Approx(1.0).margin(1e-12));
    Tensor s2 = softmax(scale_add(x, 1.0, 3.75));
    for (std::size_t i = 0; i < 7; ++i) REQUIRE(s1.at(i) == Approx(s2.at(i)).margin(1e-12));
  }
}

TEST_CASE("cross entropy closed forms and gradient") {
  REQUIRE(cross_entropy(Tensor({2}, {30.0, -30.0}), 0).value() < 1e-12);
  REQUIRE(cross_entropy(Tensor({2}, {0.0, 0.0}), 1).value() == Approx(std::log(2.0)));

  ParameterSet ps;
  ps.add("logits", rand_tensor({4}, 55, 2.0));
  Tape tape;
  ParamMap live = ps.attached(tape);
  auto grads = tape.backward(cross_entropy(live.at("logits"), 2));
  Tensor probs = softmax(ps.get("logits"));
  const auto& gl = grads[live.at("logits").node()];
  for (std::size_t i = 0; i < 4; ++i) {
    double expect = probs.at(i) - (i == 2 ? 1.0 : 0.0);
    REQUIRE(gl[i] == Approx(expect).margin(1e-12));
  }
  double err = fd_error(
      [](const ParamMap& p, Tape*) { return cross_entropy(p.at("logits"), 2); }, ps);
  REQUIRE(err <= 1e-4);
}

TEST_CASE("cosine similarity identities") {
  Tensor v({3}, {0.3, -1.2, 2.0});
  REQUIRE(cosine_similarity(v, v).value() == Approx(1.0));

  REQUIRE(cosine_similarity(Tensor({2}, {1, 0}), Tensor({2}, {0, 1})).value() ==
          Approx(0.0).margin(1e-15));
  REQUIRE(cosine_similarity(Tensor({2}, {1, 0}), Tensor({2}, {1, 1})).value() ==
          Approx(1.0 / std::sqrt(2.0)));

  REQUIRE_THROWS_AS(cosine_similarity(Tensor({3}, {0, 0, 0}), v.clone()), NumericError);

  // scale invariance
  SplitMix64 rng(31337);
  for (int i = 0; i < 10; ++i) {
    Tensor a = rand_tensor({6}, rng.next());
    Tensor b = rand_tensor({6}, rng.next());
    double base = cosine_similarity(a, b).value();
    double scaled = cosine_similarity(scale(a, 3.7), scale(b, 0.002)).value();
    REQUIRE(scaled == Approx(base).margin(1e-12));
  }
}

TEST_CASE("cosine similarity gradient passes finite differences") {
  ParameterSet ps;
  ps.add("u", rand_tensor({5}, 91));
  ps.add("v", rand_tensor({5}, 92));
  double err = fd_error(
      [](const ParamMap& p, Tape*) { return cosine_similarity(p.at("u"), p.at("v")); }, ps);
  REQUIRE(err <= 1e-4);
}

TEST_CASE("backward computes d(x^2)/dx and zero grads for unused params") {
  ParameterSet ps;
  ps.add("x", Tensor::scalar(3.0));
  ps.add("unused", rand_tensor({4}, 5));
  Tape tape;
  ParamMap live = ps.attached(tape);
  Tensor loss = mul(live.at("x"), live.at("x"));
  auto grads = tape.backward(loss);
  REQUIRE(grads[live.at("x").node()][0] == Approx(6.0));
  REQUIRE(grads[live.at("unused").node()].empty());  // zero by convention
}

TEST_CASE("backward rejects non-scalar roots and reused tapes") {
  ParameterSet ps;
  ps.add("x", rand_tensor({3}, 1));
  Tape tape;
  ParamMap live = ps.attached(tape);
  Tensor y = relu(live.at("x"));
  REQUIRE_THROWS_AS(tape.backward(y), ShapeError);

  Tensor loss = weighted_sum(y);
  tape.backward(loss);
  REQUIRE_THROWS_AS(tape.backward(loss), ShapeError);
}

TEST_CASE("every primitive passes finite differences over 10 seeds") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SplitMix64 rng(seed * 7919);
    ParameterSet ps;
    ps.add("a", rand_tensor({4, 3}, rng.next()));
    ps.add("b", rand_tensor({4, 3}, rng.next()));
    ps.add("w", rand_tensor({3, 5}, rng.next()));
    ps.add("bias", rand_tensor({5}, rng.next()));
    ps.add("gamma", rand_tensor({3}, rng.next(), 0.5));
    ps.add("beta", rand_tensor({3}, rng.next(), 0.5));
    ps.add("vec", rand_tensor({3}, rng.next()));

    std::vector<std::pair<const char*, std::function<Tensor(const ParamMap&, Tape*)>>> cases = {
        {"add", [](const ParamMap& p, Tape*) { return weighted_sum(add(p.at("a"), p.at("b"))); }},
        {"sub", [](const ParamMap& p, Tape*) { return weighted_sum(sub(p.at("a"), p.at("b"))); }},
        {"mul", [](const ParamMap& p, Tape*) { return weighted_sum(mul(p.at("a"), p.at("b"))); }},
        {"scale_add",
         [](const ParamMap& p, Tape*) { return weighted_sum(scale_add(p.at("a"), -1.7, 0.4)); }},
        {"matmul",
         [](const ParamMap& p, Tape*) { return weighted_sum(matmul(p.at("a"), p.at("w"))); }},
        {"matmul_nt",
         [](const ParamMap& p, Tape*) { return weighted_sum(matmul_nt(p.at("a"), p.at("b"))); }},
        {"linear",
         [](const ParamMap& p, Tape*) { return weighted_sum(linear(p.at("vec"), p.at("w"))); }},
        {"affine",
         [](const ParamMap& p, Tape*) {
           return weighted_sum(affine(p.at("a"), p.at("w"), p.at("bias")));
         }},
        {"concat0",
         [](const ParamMap& p, Tape*) {
           return weighted_sum(concat({p.at("a"), p.at("b")}, 0));
         }},
        {"concat1",
         [](const ParamMap& p, Tape*) {
           return weighted_sum(concat({p.at("a"), p.at("b")}, 1));
         }},
        {"slice_rows",
         [](const ParamMap& p, Tape*) { return weighted_sum(slice_rows(p.at("a"), 1, 3)); }},
        {"row", [](const ParamMap& p, Tape*) { return weighted_sum(row(p.at("a"), 2)); }},
        {"pad_rows",
         [](const ParamMap& p, Tape*) { return weighted_sum(pad_rows(p.at("a"), 6)); }},
        {"gather",
         [](const ParamMap& p, Tape*) { return weighted_sum(gather(p.at("a"), {0, 2, 2})); }},
        {"max_pool1d",
         [](const ParamMap& p, Tape*) { return weighted_sum(max_pool1d(p.at("a"), 2)); }},
        {"global_max_pool",
         [](const ParamMap& p, Tape*) { return weighted_sum(global_max_pool(p.at("a"))); }},
        {"softmax",
         [](const ParamMap& p, Tape*) { return weighted_sum(softmax(p.at("vec"))); }},
        {"softmax_rows",
         [](const ParamMap& p, Tape*) { return weighted_sum(softmax_rows(p.at("a"))); }},
        {"layer_norm",
         [](const ParamMap& p, Tape*) {
           return weighted_sum(layer_norm(p.at("a"), p.at("gamma"), p.at("beta")));
         }},
        {"sigmoid", [](const ParamMap& p, Tape*) { return weighted_sum(sigmoid(p.at("a"))); }},
        {"tanh", [](const ParamMap& p, Tape*) { return weighted_sum(tanh_op(p.at("a"))); }},
        {"relu", [](const ParamMap& p, Tape*) { return weighted_sum(relu(p.at("a"))); }},
    };
    for (auto& [name, fn] : cases) {
      INFO("op " << name << " seed " << seed);
      REQUIRE(fd_error(fn, ps) <= 1e-4);
    }
  }
}

TEST_CASE("forward passes are pure") {
  Tensor a = rand_tensor({4, 4}, 1);
  Tensor b = rand_tensor({4, 4}, 2);
  Tensor r1 = matmul(relu(a), sigmoid(b));
  Tensor r2 = matmul(relu(a), sigmoid(b));
  REQUIRE(r1.values() == r2.values());
}

TEST_CASE("grad_check is exact for linear functions") {
  ParameterSet ps;
  ps.add("x", rand_tensor({6}, 3));
  double err = fd_error(
      [](const ParamMap& p, Tape*) { return weighted_sum(scale_add(p.at("x"), 2.5, 1.0)); }, ps);
  REQUIRE(err < 1e-10);
}

TEST_CASE("grad_check reports a corrupted gradient") {
  ParameterSet ps;
  ps.add("x", rand_tensor({6}, 3));
  auto f = [](const ParamMap& p, Tape*) { return weighted_sum(mul(p.at("x"), p.at("x"))); };
  REQUIRE(grad_check(f, ps, 1e-5).max_rel_err <= 1e-4);
  REQUIRE(grad_check(f, ps, 1e-5, 1.1).max_rel_err >= 0.05);
}

TEST_CASE("grad_check rejects nonpositive h") {
  ParameterSet ps;
  ps.add("x", Tensor::scalar(1.0));
  REQUIRE_THROWS_AS(
      grad_check([](const ParamMap& p, Tape*) { return p.at("x"); }, ps, 0.0), ShapeError);
}

TEST_CASE("mixing two live tapes is an error") {
  ParameterSet ps;
  ps.add("x", rand_tensor({3}, 1));
  Tape t1, t2;
  Tensor a = ps.get("x").attached(t1);
  Tensor b = ps.get("x").attached(t2);
  REQUIRE_THROWS_AS(add(a, b), ShapeError);
}

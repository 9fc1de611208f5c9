#include <doctest.h>

#include <cmath>
#include <random>

#include "bellamy/error.hpp"
#include "bellamy/nn.hpp"
#include "bellamy/tensor.hpp"

using namespace bellamy;

TEST_SUITE("tensor-nn") {

TEST_CASE("matvec and shape errors") {
  Matrix a(2, 3);
  double v = 1.0;
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c) a(r, c) = v++;
  const Vector y = matvec(a, Vector{1.0, 0.0, -1.0});
  CHECK(y == Vector{-2.0, -2.0});
  CHECK(matvec_transposed(a, Vector{1.0, 1.0}) == Vector{5.0, 7.0, 9.0});
  CHECK_THROWS_AS(matvec(a, Vector{1.0, 2.0}), Error);
  try {
    matvec(a, Vector{1.0});
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::shape);
  }
}

TEST_CASE("selu values") {
  CHECK(selu(0.0) == 0.0);
  CHECK(selu(1.0) == doctest::Approx(kSeluScale));
  CHECK(selu(-50.0) == doctest::Approx(kSeluSaturation));
  CHECK(selu(-1.0) == doctest::Approx(kSeluScale * kSeluAlpha * (std::exp(-1.0) - 1.0)));
  for (double x : {-2.0, -0.3, 0.4, 3.0}) {
    const double h = 1e-6;
    const double fd = (selu(x + h) - selu(x - h)) / (2 * h);
    CHECK(selu_derivative(x) == doctest::Approx(fd).epsilon(1e-7));
  }
  CHECK(activate_derivative(Activation::tanh, 0.5) == doctest::Approx(1.0 - std::tanh(0.5) * std::tanh(0.5)));
}

TEST_CASE("alpha-dropout keeps zero mean and unit variance of SELU-normal inputs") {
  Rng rng(3);
  std::normal_distribution<double> n01(0.0, 1.0);
  const std::size_t n = 400000;
  Vector v(n);
  for (auto& x : v) x = n01(rng);
  const Vector out = alpha_dropout(v, 0.2, rng, Mode::train);
  double mean = 0.0;
  for (double x : out) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : out) var += (x - mean) * (x - mean);
  var /= n;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("alpha-dropout is the identity at inference and at rate zero") {
  Rng rng(1);
  const Vector v{1.0, -2.0, 3.5};
  CHECK(alpha_dropout(v, 0.5, rng, Mode::infer) == v);
  CHECK(alpha_dropout(v, 0.0, rng, Mode::train) == v);
  CHECK_THROWS_AS(draw_alpha_dropout(3, 1.0, rng), Error);
}

TEST_CASE("dropped units land on the affine image of the saturation value") {
  Rng rng(9);
  const auto mask = draw_alpha_dropout(1000, 0.5, rng);
  Vector v(1000, 2.0);
  apply_alpha_dropout(v, mask);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double expect = mask.keep[i] ? mask.scale * 2.0 + mask.shift : mask.scale * kSeluSaturation + mask.shift;
    CHECK(v[i] == doctest::Approx(expect));
  }
}

TEST_CASE("he init variance") {
  Rng rng(5);
  const Matrix w = he_init(200, 50, 50, rng);
  double sq = 0.0;
  for (double x : w.values()) sq += x * x;
  CHECK(sq / w.size() == doctest::Approx(2.0 / 50).epsilon(0.05));
}

TEST_CASE("block backward matches finite differences") {
  Rng rng(11);
  TwoLayerBlock block = TwoLayerBlock::create(5, 7, 3, Activation::selu, Activation::tanh, true, rng);
  block.dropout_rate = 0.2;
  const Vector x{0.3, -0.7, 1.1, 0.05, -1.4};
  const Vector upstream{0.5, -1.0, 2.0};
  auto objective = [&](const TwoLayerBlock& b, const Vector& in) {
    Rng r(42);
    const Vector out = forward_block(b, in, Mode::train, &r);
    return dot(out, upstream);
  };
  Rng r(42);
  BlockTrace trace;
  forward_block(block, x, Mode::train, &r, &trace);
  BlockGrad grad = BlockGrad::zeros_like(block);
  const Vector dx = backward_block(block, trace, upstream, grad);

  const double h = 1e-6;
  auto params = parameter_views(block);
  auto grads = parameter_views(std::as_const(grad));
  for (std::size_t p = 0; p < 4; ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double orig = params[p][i];
      params[p][i] = orig + h;
      const double up = objective(block, x);
      params[p][i] = orig - h;
      const double down = objective(block, x);
      params[p][i] = orig;
      CHECK(grads[p][i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
    }
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    CHECK(dx[i] == doctest::Approx((objective(block, xp) - objective(block, xm)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("bias-free block has no bias parameters") {
  Rng rng(2);
  const auto b = TwoLayerBlock::create(40, 8, 4, Activation::selu, Activation::selu, false, rng);
  CHECK(b.b1.empty());
  CHECK(b.b2.empty());
  CHECK(b.input_dim() == 40);
  CHECK(b.hidden_dim() == 8);
  CHECK(b.output_dim() == 4);
  CHECK_NOTHROW(b.validate());
}

TEST_CASE("huber and mse") {
  const Vector p{0.0, 0.5, 3.0};
  const Vector t{0.0, 0.0, 0.0};
  // 0, 0.125, 2.5 -> mean
  CHECK(huber_loss(p, t, 1.0) == doctest::Approx((0.125 + 2.5) / 3.0));
  const Vector g = huber_gradient(p, t, 1.0);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == doctest::Approx(0.5 / 3.0));
  CHECK(g[2] == doctest::Approx(1.0 / 3.0));
  CHECK(mse_loss(Vector{1.0, 3.0}, Vector{0.0, 0.0}) == doctest::Approx(5.0));
}

TEST_CASE("adam step reports the offending parameter on NaN") {
  Rng rng(4);
  auto block = TwoLayerBlock::create(2, 3, 1, Activation::selu, Activation::selu, true, rng);
  auto state = AdamState::for_block(block);
  auto grad = BlockGrad::zeros_like(block);
  grad.w2(0, 1) = std::nan("");
  try {
    adam_step(block, grad, state, {}, 1e-2, "z");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::non_finite);
    CHECK(std::string(e.what()).find("z.w2") != std::string::npos);
  }
}

TEST_CASE("first adam step moves every parameter by lr against the gradient sign") {
  Rng rng(4);
  auto block = TwoLayerBlock::create(2, 3, 1, Activation::selu, Activation::selu, true, rng);
  const auto before = block;
  auto state = AdamState::for_block(block);
  auto grad = BlockGrad::zeros_like(block);
  for (auto& v : grad.w1.values()) v = 0.5;
  for (auto& v : grad.b2) v = -2.0;
  adam_step(block, grad, state, {}, 0.01);
  CHECK(block.w1(0, 0) == doctest::Approx(before.w1(0, 0) - 0.01).epsilon(1e-6));
  CHECK(block.b2[0] == doctest::Approx(before.b2[0] + 0.01).epsilon(1e-6));
  CHECK(block.w2 == before.w2);
}

TEST_CASE("decoupled weight decay shrinks parameters without gradient") {
  Rng rng(4);
  auto block = TwoLayerBlock::create(2, 3, 1, Activation::selu, Activation::selu, true, rng);
  const auto before = block;
  auto state = AdamState::for_block(block);
  const auto grad = BlockGrad::zeros_like(block);
  adam_step(block, grad, state, {.weight_decay = 0.1}, 0.01);
  CHECK(block.w1(1, 1) == doctest::Approx(before.w1(1, 1) * (1.0 - 0.01 * 0.1)));
}

TEST_CASE("capacity sanity: one block fits ten pairs") {
  Rng rng(17);
  auto block = TwoLayerBlock::create(1, 16, 1, Activation::selu, Activation::identity, true, rng);
  std::vector<Vector> xs;
  Vector ys;
  for (int i = 0; i < 10; ++i) {
    const double x = -1.0 + 2.0 * i / 9.0;
    xs.push_back({x});
    ys.push_back(std::sin(2.0 * x));
  }
  auto state = AdamState::for_block(block);
  auto grad = BlockGrad::zeros_like(block);
  for (int step = 0; step < 5000; ++step) {
    grad.clear();
    for (std::size_t i = 0; i < xs.size(); ++i) {
      BlockTrace tr;
      const Vector out = forward_block(block, xs[i], Mode::train, nullptr, &tr);
      const Vector d{2.0 * (out[0] - ys[i]) / xs.size()};
      backward_block(block, tr, d, grad);
    }
    adam_step(block, grad, state, {}, 1e-2);
  }
  double mse = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = forward_block(block, xs[i], Mode::infer)[0] - ys[i];
    mse += e * e / xs.size();
  }
  CHECK(mse < 1e-3);
}

TEST_CASE("derive_seed separates streams") {
  CHECK(derive_seed(0, 1) != derive_seed(0, 2));
  CHECK(derive_seed(1, 1) != derive_seed(0, 1));
  static_assert(derive_seed(5, 5) == derive_seed(5, 5));
}

}

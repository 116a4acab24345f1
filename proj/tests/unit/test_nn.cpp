#include <doctest.h>

#include "cascade/nn/layers.hpp"
#include "cascade/nn/ops.hpp"
#include "helpers.hpp"

using namespace cascade;
using namespace cascade::nn;
using testutil::gradcheck;

namespace {
constexpr double kTol = 2e-2;  // float32 central differences
}

TEST_SUITE("nn") {
  TEST_CASE("conv2d gradients") {
    Rng rng(1);
    const Var w = constant(rng.normal_like({3, 2, 3, 3}));
    const Var b = constant(rng.normal_like({3, 1, 1, 1}));
    const Tensor x = rng.normal_like({2, 2, 5, 5});
    CHECK(gradcheck([&](const Var& v) { return conv2d(v, w, b, {2, 1}); }, x) < kTol);
    const Var xc = constant(x);
    CHECK(gradcheck([&](const Var& v) { return conv2d(xc, v, b, {1, 1}); }, w->value) < kTol);
  }

  TEST_CASE("group norm gradients") {
    Rng rng(2);
    const Var g = constant(rng.normal_like({1, 4, 1, 1}));
    const Var b = constant(rng.normal_like({1, 4, 1, 1}));
    CHECK(gradcheck([&](const Var& v) { return group_norm(v, 2, g, b); },
                    rng.normal_like({2, 4, 3, 3})) < kTol);
  }

  TEST_CASE("pointwise and resampling gradients") {
    Rng rng(3);
    const Tensor x = rng.normal_like({2, 3, 4, 4});
    CHECK(gradcheck([](const Var& v) { return silu(v); }, x) < kTol);
    CHECK(gradcheck([](const Var& v) { return tanh(v); }, x) < kTol);
    CHECK(gradcheck([](const Var& v) { return upsample_bilinear2x(v); }, x) < kTol);
    CHECK(gradcheck([](const Var& v) { return upsample_nearest2x(v); }, x) < kTol);
    CHECK(gradcheck([](const Var& v) { return avg_pool2x(v); }, x) < kTol);
    CHECK(gradcheck([](const Var& v) { return pixel_unshuffle(v, 2); }, x) < kTol);
    CHECK(gradcheck([](const Var& v) { return pixel_shuffle(v, 2); }, rng.normal_like({1, 8, 3, 3})) < kTol);
  }

  TEST_CASE("pixel_shuffle inverts pixel_unshuffle") {
    Rng rng(4);
    const Tensor x = rng.normal_like({2, 3, 6, 4});
    const auto y = pixel_unshuffle(constant(x), 2);
    CHECK(y->value.shape() == Shape{2, 12, 3, 2});
    CHECK(y->value.at(0, 1 * 4 + 1 * 2 + 1, 2, 1) == x.at(0, 1, 5, 3));
    CHECK(testutil::bit_equal(pixel_shuffle(y, 2)->value, x));
  }

  TEST_CASE("linear, modulate and attention gradients") {
    Rng rng(5);
    const Var w = constant(rng.normal_like({3, 6, 1, 1}));
    const Var b = constant(rng.normal_like({3, 1, 1, 1}));
    CHECK(gradcheck([&](const Var& v) { return linear(v, w, b); }, rng.normal_like({2, 6, 1, 1})) < kTol);

    const Var sc = constant(rng.normal_like({2, 3, 1, 1}));
    const Var sh = constant(rng.normal_like({2, 3, 1, 1}));
    CHECK(gradcheck([&](const Var& v) { return modulate(v, sc, sh); }, rng.normal_like({2, 3, 3, 3})) < kTol);

    const Var ctx = constant(rng.normal_like({2, 5, 4, 1}));
    const Var wq = constant(rng.normal_like({3, 3, 1, 1}));
    const Var wk = constant(rng.normal_like({3, 4, 1, 1}));
    const Var wv = constant(rng.normal_like({3, 4, 1, 1}));
    const Var wo = constant(rng.normal_like({3, 3, 1, 1}));
    const Var bo = constant(rng.normal_like({1, 3, 1, 1}));
    const Tensor x = rng.normal_like({2, 3, 2, 2});
    CHECK(gradcheck([&](const Var& v) { return cross_attention(v, ctx, wq, wk, wv, wo, bo); }, x) < kTol);
    const Var xc = constant(x);
    CHECK(gradcheck([&](const Var& v) { return cross_attention(xc, v, wq, wk, wv, wo, bo); },
                    ctx->value) < kTol);
  }

  TEST_CASE("grid_sample gradient with respect to the flow") {
    Rng rng(6);
    const Tensor src = rng.normal_like({1, 2, 6, 6});
    Tensor flow = rng.normal_like({2, 2, 6, 6});
    for (auto& v : flow.vec()) v *= 0.2f;
    CHECK(gradcheck([&](const Var& v) { return grid_sample(src, v); }, flow, 1e-3) < 5e-2);
  }

  TEST_CASE("loss gradients") {
    Rng rng(7);
    const Tensor x = rng.normal_like({2, 2, 4, 4});
    CHECK(gradcheck([](const Var& v) { return total_variation(v); }, x, 1e-3) < kTol);
    const Tensor t = rng.normal_like(x.shape());
    CHECK(gradcheck([&](const Var& v) { return l1_loss(v, t); }, x, 1e-3) < kTol);
  }

  TEST_CASE("NoGradGuard stops graph recording") {
    const Var p = parameter(Tensor({1, 1, 2, 2}, 1.0f));
    {
      NoGradGuard g;
      CHECK_FALSE(grad_enabled());
      CHECK_FALSE(silu(p)->requires_grad);
    }
    CHECK(grad_enabled());
    CHECK(silu(p)->requires_grad);
  }

  TEST_CASE("Adam moves a parameter toward the target") {
    ParamStore ps;
    Var p = ps.add("p", Tensor({1, 1, 1, 4}, 0.0f));
    Adam opt(ps, {.lr = 0.05f});
    const Tensor target({1, 1, 1, 4}, 1.0f);
    double first = 0, last = 0;
    for (int i = 0; i < 200; ++i) {
      ps.zero_grad();
      auto loss = mse_loss(p, target);
      if (i == 0) first = loss->value[0];
      last = loss->value[0];
      backward(loss);
      opt.step();
    }
    CHECK(last < 1e-3 * first);
  }
}

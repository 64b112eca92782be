#include <gtest/gtest.h>

#include <cmath>

#include "fet/optimizer.hpp"

using namespace fet;

TEST(AdamW, FirstStepMovesByLearningRate) {
  AdamW opt({0.1, 0.9, 0.999, 1e-8, 0.0});
  std::vector<double> x = {1.0, -2.0};
  std::vector<double> g = {0.5, -3.0};
  opt.step({{x, g, true}});
  // bias-corrected m/sqrt(v) is sign(g) on the first step
  EXPECT_NEAR(x[0], 0.9, 1e-7);
  EXPECT_NEAR(x[1], -1.9, 1e-7);
  EXPECT_EQ(opt.steps_taken(), 1u);
}

TEST(AdamW, DecoupledDecaySkipsExemptParameters) {
  AdamW opt({0.1, 0.9, 0.999, 1e-8, 0.5});
  std::vector<double> w = {2.0};
  std::vector<double> b = {2.0};
  std::vector<double> zero = {0.0};
  opt.step({{w, zero, true}, {b, zero, false}});
  EXPECT_NEAR(w[0], 2.0 - 0.1 * 0.5 * 2.0, 1e-12);
  EXPECT_EQ(b[0], 2.0);
}

TEST(AdamW, MinimizesAQuadratic) {
  AdamW opt({0.05, 0.9, 0.999, 1e-8, 0.0});
  std::vector<double> x = {3.0, -4.0};
  std::vector<double> g(2);
  for (int i = 0; i < 2000; ++i) {
    g[0] = 2 * (x[0] - 1.0);
    g[1] = 2 * (x[1] + 0.5);
    opt.step({{x, g, true}});
  }
  EXPECT_NEAR(x[0], 1.0, 1e-3);
  EXPECT_NEAR(x[1], -0.5, 1e-3);
}

TEST(ClipGlobalNorm, ScalesJointly) {
  std::vector<double> a = {3.0, 0.0};
  std::vector<double> b = {4.0};
  const double norm = clip_global_norm({a, b}, 1.0);
  EXPECT_DOUBLE_EQ(norm, 5.0);
  EXPECT_NEAR(a[0], 0.6, 1e-15);
  EXPECT_NEAR(b[0], 0.8, 1e-15);
  std::vector<double> c = {0.3};
  clip_global_norm({c}, 1.0);
  EXPECT_EQ(c[0], 0.3);
}

// Copyright 2026 The CarTransfer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <vector>

#include "cartransfer/math_core.h"

namespace cartransfer {
namespace {

// Straight-line forward pass with explicit loops; shares no code with
// MlpForward.
std::vector<double> NaiveForward(const MlpParams& p, std::vector<double> x) {
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    const auto& w = p.layers[k].weight;
    std::vector<double> y(static_cast<std::size_t>(w.rows()));
    for (int r = 0; r < w.rows(); ++r) {
      double s = p.layers[k].bias[r];
      for (int c = 0; c < w.cols(); ++c) s += w(r, c) * x[static_cast<std::size_t>(c)];
      y[static_cast<std::size_t>(r)] = (k + 1 < p.layers.size()) ? std::tanh(s) : s;
    }
    x = std::move(y);
  }
  return x;
}

MlpParams SingleLayer(Matrix w, Vector b) {
  MlpParams p;
  p.layers.push_back({std::move(w), std::move(b)});
  p.activation = Activation::kIdentity;
  return p;
}

double RelErr(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4});
}

TEST_CASE("mlp forward: identity network") {
  const MlpParams p = SingleLayer(Matrix::Identity(2, 2), Vector::Zero(2));
  const Vector out = MlpForward(p, Vector::LinSpaced(2, 1.0, 2.0)).output;
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 2.0);
}

TEST_CASE("mlp forward: hand-checkable affine layer") {
  Matrix w(2, 2);
  w << 2, 0, 0, 3;
  const MlpParams p = SingleLayer(w, Vector::Ones(2));
  const Vector out = MlpForward(p, Vector::Ones(2)).output;
  CHECK(out[0] == 3.0);
  CHECK(out[1] == 4.0);
}

TEST_CASE("mlp forward matches a naive implementation") {
  Rng rng(7);
  const MlpParams p = MlpParams::Random({5, 8, 3}, rng, 1.3);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector x = rng.NormalVector(5);
    const Vector out = MlpForward(p, x).output;
    const std::vector<double> ref = NaiveForward(p, {x.data(), x.data() + x.size()});
    for (int i = 0; i < 3; ++i) CHECK(std::abs(out[i] - ref[static_cast<std::size_t>(i)]) <= 1e-12);
  }
}

TEST_CASE("mlp forward keeps the latent entering the last layer") {
  Rng rng(3);
  const MlpParams p = MlpParams::Random({5, 6, 4, 2}, rng);
  const ForwardPass f = MlpForward(p, rng.NormalVector(5));
  REQUIRE(f.activations.size() == 3);
  CHECK(f.activations.back().size() == p.latent_dim());
  const Vector direct = p.layers.back().weight * f.activations.back() + p.layers.back().bias;
  CHECK((direct - f.output).norm() <= 1e-14);
}

TEST_CASE("mlp forward rejects wrong input length") {
  Rng rng(1);
  const MlpParams p = MlpParams::Random({5, 4, 2}, rng);
  CHECK_THROWS_AS(MlpForward(p, Vector::Zero(4)), ConfigError);
}

TEST_CASE("mlp validate catches broken shapes and non-finite entries") {
  Rng rng(1);
  MlpParams p = MlpParams::Random({3, 4, 2}, rng);
  CHECK_NOTHROW(p.Validate());
  MlpParams bad_chain = p;
  bad_chain.layers[1].weight = Matrix::Zero(2, 5);
  CHECK_THROWS_AS(bad_chain.Validate(), ConfigError);
  MlpParams nan = p;
  nan.layers[0].bias[1] = std::nan("");
  CHECK_THROWS_AS(nan.Validate(), ConfigError);
}

TEST_CASE("mlp flatten/unflatten round trip") {
  Rng rng(11);
  const MlpParams p = MlpParams::Random({5, 7, 3, 2}, rng);
  const Vector flat = p.Flatten();
  CHECK(flat.size() == p.num_params());
  MlpParams q = MlpParams::Zeros({5, 7, 3, 2});
  q.Unflatten(flat);
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    CHECK(q.layers[k].weight == p.layers[k].weight);
    CHECK(q.layers[k].bias == p.layers[k].bias);
  }
  // row-major within a layer
  CHECK(flat[1] == p.layers[0].weight(0, 1));
}

TEST_CASE("mlp backward agrees with central differences") {
  for (const std::vector<int>& sizes :
       {std::vector<int>{3, 4, 2}, std::vector<int>{5, 6, 5, 2}, std::vector<int>{2, 3}}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      Rng rng(100 + seed);
      const MlpParams p = MlpParams::Random(sizes, rng, 1.5);
      const Vector x = rng.NormalVector(sizes.front());
      const Vector g = rng.NormalVector(sizes.back());
      const Vector analytic = MlpBackward(p, MlpForward(p, x), g).Flatten();
      const Vector flat = p.Flatten();
      const double h = 1e-5;
      for (Eigen::Index i = 0; i < flat.size(); ++i) {
        MlpParams plus = p, minus = p;
        Vector fp = flat, fm = flat;
        fp[i] += h;
        fm[i] -= h;
        plus.Unflatten(fp);
        minus.Unflatten(fm);
        const double numeric =
            (g.dot(MlpForward(plus, x).output) - g.dot(MlpForward(minus, x).output)) / (2 * h);
        CHECK(RelErr(analytic[i], numeric) <= 1e-4);
      }
    }
  }
}

TEST_CASE("mlp backward: zero upstream gives zero gradient") {
  Rng rng(5);
  const MlpParams p = MlpParams::Random({4, 5, 2}, rng);
  const Vector grad =
      MlpBackward(p, MlpForward(p, rng.NormalVector(4)), Vector::Zero(2)).Flatten();
  CHECK(grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mlp backward: y = w x at x = 3") {
  Matrix w(1, 1);
  w << 0.7;
  const MlpParams p = SingleLayer(w, Vector::Zero(1));
  const MlpParams grad = MlpBackward(p, MlpForward(p, Vector::Constant(1, 3.0)), Vector::Ones(1));
  CHECK(grad.layers[0].weight(0, 0) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(grad.layers[0].bias[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("batched backward sums the per-sample gradients") {
  Rng rng(9);
  const MlpParams p = MlpParams::Random({4, 6, 3}, rng);
  Matrix inputs(4, 5), upstream(3, 5);
  for (int c = 0; c < 5; ++c) {
    inputs.col(c) = rng.NormalVector(4);
    upstream.col(c) = rng.NormalVector(3);
  }
  MlpParams sum = MlpParams::Zeros({4, 6, 3});
  for (int c = 0; c < 5; ++c) {
    MlpBackwardAccumulate(p, MlpForward(p, inputs.col(c)), upstream.col(c), sum);
  }
  const BatchForwardPass trace = MlpForwardBatchTrace(p, inputs);
  const Vector batched = MlpBackwardBatch(p, trace, upstream).Flatten();
  CHECK((batched - sum.Flatten()).cwiseAbs().maxCoeff() <= 1e-12);
  const Matrix out = MlpForwardBatch(p, inputs);
  for (int c = 0; c < 5; ++c) {
    CHECK((out.col(c) - MlpForward(p, inputs.col(c)).output).norm() <= 1e-13);
  }
}

TEST_CASE("gaussian log prob: standard normal") {
  const GaussianHead head(Vector::Zero(1), Vector::Zero(1));
  CHECK(GaussianLogProb(head, Vector::Zero(1)) == doctest::Approx(-0.91893853320467274).epsilon(1e-14));
  CHECK(GaussianLogProb(head, Vector::Ones(1)) == doctest::Approx(-1.41893853320467274).epsilon(1e-14));
}

TEST_CASE("gaussian log prob matches the density formula") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector mean = rng.NormalVector(2);
    const Vector log_std = 0.5 * rng.NormalVector(2);
    const Vector x = rng.NormalVector(2);
    double density = 1.0;
    for (int i = 0; i < 2; ++i) {
      const double s = std::exp(log_std[i]);
      const double z = (x[i] - mean[i]) / s;
      density *= std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * std::numbers::pi));
    }
    const GaussianHead head(mean, log_std);
    CHECK(std::abs(GaussianLogProb(head, x) - std::log(density)) <= 1e-10);
    const Matrix cov = (2.0 * log_std).array().exp().matrix().asDiagonal();
    CHECK(std::abs(GaussianLogProbFull(mean, cov, x) - std::log(density)) <= 1e-10);
  }
}

TEST_CASE("gaussian log prob is maximised at the mean") {
  Rng rng(4);
  const GaussianHead head(rng.NormalVector(2), 0.3 * rng.NormalVector(2));
  const double at_mean = GaussianLogProb(head, head.mean());
  for (int i = 0; i < 200; ++i) {
    const Vector x = head.mean() + 0.1 * rng.NormalVector(2);
    CHECK(GaussianLogProb(head, x) < at_mean);
  }
}

TEST_CASE("gaussian head clamps log_std") {
  Vector log_std(2);
  log_std << -30.0, 5.0;
  const GaussianHead head(Vector::Zero(2), log_std);
  CHECK(head.log_std()[0] == kLogStdMin);
  CHECK(head.log_std()[1] == kLogStdMax);
}

TEST_CASE("full-covariance log prob rejects singular covariance") {
  const Matrix cov = Matrix::Zero(2, 2);
  CHECK(std::isinf(GaussianLogProbFull(Vector::Zero(2), cov, Vector::Zero(2))));
}

TEST_CASE("softmax examples") {
  Vector p = Softmax(Vector::Zero(3));
  for (int i = 0; i < 3; ++i) CHECK(std::abs(p[i] - 1.0 / 3.0) <= 1e-15);

  Vector big(2);
  big << 1000.0, 0.0;
  p = Softmax(big);
  CHECK(p.allFinite());
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(p[1] <= 1e-300);

  Vector logs(3);
  logs << std::log(2.0), 0.0, 0.0;
  p = Softmax(logs);
  CHECK(std::abs(p[0] - 0.5) <= 1e-15);
  CHECK(std::abs(p[1] - 0.25) <= 1e-15);
  CHECK(std::abs(p[2] - 0.25) <= 1e-15);
}

TEST_CASE("softmax is a distribution and shift invariant") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector logits = 5.0 * rng.NormalVector(4);
    const Vector p = Softmax(logits);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
    const double shift = rng.Uniform(-50.0, 50.0);
    const Vector q = Softmax((logits.array() + shift).matrix());
    CHECK((p - q).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((LogSoftmax(logits).array().exp().matrix() - p).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("affine apply examples") {
  Rng rng(2);
  const Vector x = rng.NormalVector(3);
  CHECK(AffineApply(AffineTransform::Identity(3), x) == x);

  Matrix rot(2, 2);
  rot << 0, -1, 1, 0;
  const Vector y = AffineApply({rot, Vector::Zero(2)}, Vector::Unit(2, 0));
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 1.0);

  for (int trial = 0; trial < 10; ++trial) {
    AffineTransform t{Matrix::Random(3, 4), Vector::Random(3)};
    const Vector v = rng.NormalVector(4);
    const Vector out = AffineApply(t, v);
    for (int r = 0; r < 3; ++r) {
      double s = t.b[r];
      for (int c = 0; c < 4; ++c) s += t.a(r, c) * v[c];
      CHECK(std::abs(out[r] - s) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(AffineApply(AffineTransform::Identity(3), Vector::Zero(2)), ConfigError);
}

TEST_CASE("affine identity is the identity for random inputs") {
  Rng rng(12);
  const AffineTransform id = AffineTransform::Identity(5);
  for (int i = 0; i < 20; ++i) {
    const Vector x = 10.0 * rng.NormalVector(5);
    CHECK(AffineApply(id, x) == x);
  }
}

TEST_CASE("affine flatten/unflatten and compose") {
  AffineTransform t{Matrix::Random(2, 3), Vector::Random(2)};
  const Vector flat = t.Flatten();
  CHECK(flat.size() == 8);
  CHECK(flat[1] == t.a(0, 1));
  CHECK(flat[6] == t.b[0]);
  const AffineTransform back = AffineTransform::Unflatten(3, 2, flat);
  CHECK(back.a == t.a);
  CHECK(back.b == t.b);
  CHECK_THROWS_AS(AffineTransform::Unflatten(3, 2, Vector::Zero(7)), ConfigError);

  AffineTransform outer{Matrix::Random(4, 2), Vector::Random(4)};
  const AffineTransform both = AffineTransform::Compose(outer, t);
  const Vector x = Vector::Random(3);
  CHECK((AffineApply(both, x) - AffineApply(outer, AffineApply(t, x))).norm() <= 1e-12);

  AffineTransform bad = t;
  bad.a(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(bad.Validate(), ConfigError);
}

TEST_CASE("derived seeds differ across streams and are stable") {
  CHECK(DeriveSeed(1, 0) == DeriveSeed(1, 0));
  CHECK(DeriveSeed(1, 0) != DeriveSeed(1, 1));
  CHECK(DeriveSeed(1, 0) != DeriveSeed(2, 0));
}

}  // namespace
}  // namespace cartransfer

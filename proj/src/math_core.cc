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

#include "cartransfer/math_core.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace cartransfer {

std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Vector Rng::NormalVector(int n) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = Normal();
  return v;
}

std::string_view ActivationName(Activation activation) {
  switch (activation) {
    case Activation::kTanh:
      return "tanh";
    case Activation::kIdentity:
      return "identity";
  }
  return "unknown";
}

Activation ParseActivation(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

namespace {

void ApplyActivation(Activation activation, Eigen::Ref<Matrix> x) {
  if (activation == Activation::kTanh) x = x.array().tanh();
}

}  // namespace

// ---------------------------------------------------------------------------
// MlpParams

int MlpParams::num_params() const {
  int n = 0;
  for (const auto& layer : layers) {
    n += static_cast<int>(layer.weight.size() + layer.bias.size());
  }
  return n;
}

void MlpParams::Validate() const {
  if (layers.empty()) throw ConfigError("mlp has no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& layer = layers[k];
    if (layer.bias.size() != layer.weight.rows()) {
      throw ConfigError("mlp layer " + std::to_string(k) +
                        ": bias length does not match weight rows");
    }
    if (k > 0 && layer.weight.cols() != layers[k - 1].weight.rows()) {
      throw ConfigError("mlp layer " + std::to_string(k) +
                        ": input width does not match previous layer");
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw ConfigError("mlp layer " + std::to_string(k) +
                        " has non-finite entries");
    }
  }
}

Vector MlpParams::Flatten() const {
  Vector flat(num_params());
  Eigen::Index offset = 0;
  for (const auto& layer : layers) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        flat[offset++] = layer.weight(r, c);
      }
    }
    flat.segment(offset, layer.bias.size()) = layer.bias;
    offset += layer.bias.size();
  }
  return flat;
}

void MlpParams::Unflatten(const Eigen::Ref<const Vector>& flat) {
  if (flat.size() != num_params()) {
    throw ConfigError("mlp unflatten: expected " +
                      std::to_string(num_params()) + " values, got " +
                      std::to_string(flat.size()));
  }
  Eigen::Index offset = 0;
  for (auto& layer : layers) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        layer.weight(r, c) = flat[offset++];
      }
    }
    layer.bias = flat.segment(offset, layer.bias.size());
    offset += layer.bias.size();
  }
}

MlpParams MlpParams::Zeros(const std::vector<int>& sizes,
                           Activation activation) {
  if (sizes.size() < 2) throw ConfigError("mlp needs at least in/out sizes");
  MlpParams params;
  params.activation = activation;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    if (sizes[k] <= 0 || sizes[k + 1] <= 0) {
      throw ConfigError("mlp layer sizes must be positive");
    }
    params.layers.push_back(
        {Matrix::Zero(sizes[k + 1], sizes[k]), Vector::Zero(sizes[k + 1])});
  }
  return params;
}

MlpParams MlpParams::Random(const std::vector<int>& sizes, Rng& rng,
                            double gain, Activation activation) {
  MlpParams params = Zeros(sizes, activation);
  for (auto& layer : params.layers) {
    const double scale = gain / std::sqrt(static_cast<double>(layer.weight.cols()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        layer.weight(r, c) = scale * rng.Normal();
      }
    }
  }
  return params;
}

// ---------------------------------------------------------------------------
// forward / backward

ForwardPass MlpForward(const MlpParams& params,
                       const Eigen::Ref<const Vector>& input) {
  if (params.layers.empty()) throw ConfigError("mlp has no layers");
  if (input.size() != params.input_dim()) {
    throw ConfigError("mlp input has length " + std::to_string(input.size()) +
                      ", expected " + std::to_string(params.input_dim()));
  }
  ForwardPass pass;
  pass.activations.reserve(params.layers.size());
  Vector x = input;
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& layer = params.layers[k];
    Vector z = layer.weight * x + layer.bias;
    pass.activations.push_back(std::move(x));
    if (k != last) ApplyActivation(params.activation, z);
    x = std::move(z);
  }
  pass.output = std::move(x);
  return pass;
}

Matrix MlpForwardBatch(const MlpParams& params,
                       const Eigen::Ref<const Matrix>& inputs, Matrix* latent) {
  if (params.layers.empty()) throw ConfigError("mlp has no layers");
  if (inputs.rows() != params.input_dim()) {
    throw ConfigError("mlp batch input has " + std::to_string(inputs.rows()) +
                      " rows, expected " + std::to_string(params.input_dim()));
  }
  Matrix x = inputs;
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& layer = params.layers[k];
    if (k == last && latent != nullptr) *latent = x;
    Matrix z = layer.weight * x;
    z.colwise() += layer.bias;
    if (k != last) ApplyActivation(params.activation, z);
    x = std::move(z);
  }
  return x;
}

BatchForwardPass MlpForwardBatchTrace(const MlpParams& params,
                                      const Eigen::Ref<const Matrix>& inputs) {
  if (params.layers.empty()) throw ConfigError("mlp has no layers");
  if (inputs.rows() != params.input_dim()) {
    throw ConfigError("mlp batch input has " + std::to_string(inputs.rows()) +
                      " rows, expected " + std::to_string(params.input_dim()));
  }
  BatchForwardPass pass;
  Matrix x = inputs;
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& layer = params.layers[k];
    Matrix z = layer.weight * x;
    z.colwise() += layer.bias;
    pass.activations.push_back(std::move(x));
    if (k != last) ApplyActivation(params.activation, z);
    x = std::move(z);
  }
  pass.output = std::move(x);
  return pass;
}

MlpParams MlpBackwardBatch(const MlpParams& params, const BatchForwardPass& forward,
                           const Eigen::Ref<const Matrix>& upstream_grad) {
  if (forward.activations.size() != params.layers.size() ||
      upstream_grad.rows() != params.output_dim() ||
      upstream_grad.cols() != forward.output.cols()) {
    throw ConfigError("batch backward: shapes do not match the forward pass");
  }
  MlpParams grad = params;
  Matrix delta = upstream_grad;
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    const Matrix& in = forward.activations[k];
    grad.layers[k].weight.noalias() = delta * in.transpose();
    grad.layers[k].bias = delta.rowwise().sum();
    if (k == 0) break;
    Matrix back = params.layers[k].weight.transpose() * delta;
    if (params.activation == Activation::kTanh) {
      back.array() *= 1.0 - in.array().square();
    }
    delta = std::move(back);
  }
  return grad;
}

void MlpBackwardAccumulate(const MlpParams& params, const ForwardPass& forward,
                           const Eigen::Ref<const Vector>& upstream_grad,
                           MlpParams& grad) {
  if (forward.activations.size() != params.layers.size()) {
    throw ConfigError("forward pass does not match network depth");
  }
  if (upstream_grad.size() != params.output_dim()) {
    throw ConfigError("upstream gradient length does not match mlp output");
  }
  Vector delta = upstream_grad;  // dL/dz of the current layer
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    const Vector& in = forward.activations[k];
    grad.layers[k].weight.noalias() += delta * in.transpose();
    grad.layers[k].bias += delta;
    if (k == 0) break;
    Vector back = params.layers[k].weight.transpose() * delta;
    if (params.activation == Activation::kTanh) {
      // `in` is tanh(z) of the previous layer
      back.array() *= 1.0 - in.array().square();
    }
    delta = std::move(back);
  }
}

MlpParams MlpBackward(const MlpParams& params, const ForwardPass& forward,
                      const Eigen::Ref<const Vector>& upstream_grad) {
  MlpParams grad = params;
  for (auto& layer : grad.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  MlpBackwardAccumulate(params, forward, upstream_grad, grad);
  return grad;
}

// ---------------------------------------------------------------------------
// distributions

GaussianHead::GaussianHead(Vector mean, Vector log_std)
    : mean_(std::move(mean)), log_std_(std::move(log_std)) {
  if (mean_.size() != log_std_.size()) {
    throw ConfigError("gaussian head: mean and log_std lengths differ");
  }
  log_std_ = log_std_.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

double GaussianLogProb(const GaussianHead& head,
                       const Eigen::Ref<const Vector>& x) {
  if (x.size() != head.mean().size()) {
    throw ConfigError("gaussian log prob: dimension mismatch");
  }
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double z = (x[i] - head.mean()[i]) * std::exp(-head.log_std()[i]);
    total += -0.5 * z * z - head.log_std()[i] - kHalfLog2Pi;
  }
  return total;
}

double GaussianLogProbFull(const Eigen::Ref<const Vector>& mean,
                           const Eigen::Ref<const Matrix>& covariance,
                           const Eigen::Ref<const Vector>& x) {
  const Eigen::Index n = mean.size();
  if (x.size() != n || covariance.rows() != n || covariance.cols() != n) {
    throw ConfigError("gaussian log prob: dimension mismatch");
  }
  Eigen::LLT<Matrix> llt(covariance);
  if (llt.info() != Eigen::Success) {
    return -std::numeric_limits<double>::infinity();
  }
  const Matrix& l = llt.matrixL();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(l(i, i) > 0.0)) return -std::numeric_limits<double>::infinity();
    log_det += 2.0 * std::log(l(i, i));
  }
  const Vector z = llt.matrixL().solve(x - mean);
  return -0.5 * (z.squaredNorm() + log_det +
                 static_cast<double>(n) * std::log(2.0 * std::numbers::pi));
}

double LogSumExp(const Eigen::Ref<const Vector>& values) {
  if (values.size() == 0) throw ConfigError("logsumexp of empty vector");
  const double m = values.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((values.array() - m).exp().sum());
}

Vector LogSoftmax(const Eigen::Ref<const Vector>& logits) {
  return logits.array() - LogSumExp(logits);
}

Vector Softmax(const Eigen::Ref<const Vector>& logits) {
  if (logits.size() == 0) throw ConfigError("softmax of empty vector");
  Vector e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

// ---------------------------------------------------------------------------
// AffineTransform

void AffineTransform::Validate() const {
  if (b.size() != a.rows()) {
    throw ConfigError("affine transform: bias length does not match rows");
  }
  if (!a.allFinite() || !b.allFinite()) {
    throw ConfigError("affine transform has non-finite entries");
  }
}

Vector AffineTransform::Flatten() const {
  Vector flat(num_params());
  Eigen::Index offset = 0;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) flat[offset++] = a(r, c);
  }
  flat.tail(b.size()) = b;
  return flat;
}

AffineTransform AffineTransform::Unflatten(int in_dim, int out_dim,
                                           const Eigen::Ref<const Vector>& flat) {
  if (flat.size() != out_dim * in_dim + out_dim) {
    throw ConfigError("affine unflatten: wrong parameter count");
  }
  AffineTransform t{Matrix(out_dim, in_dim), Vector(out_dim)};
  Eigen::Index offset = 0;
  for (int r = 0; r < out_dim; ++r) {
    for (int c = 0; c < in_dim; ++c) t.a(r, c) = flat[offset++];
  }
  t.b = flat.tail(out_dim);
  return t;
}

AffineTransform AffineTransform::Identity(int dim) {
  return {Matrix::Identity(dim, dim), Vector::Zero(dim)};
}

AffineTransform AffineTransform::Compose(const AffineTransform& outer,
                                         const AffineTransform& inner) {
  if (outer.in_dim() != inner.out_dim()) {
    throw ConfigError("affine compose: inner output does not match outer input");
  }
  return {outer.a * inner.a, outer.a * inner.b + outer.b};
}

Vector AffineApply(const AffineTransform& t, const Eigen::Ref<const Vector>& x) {
  if (x.size() != t.in_dim()) {
    throw ConfigError("affine apply: input has length " +
                      std::to_string(x.size()) + ", expected " +
                      std::to_string(t.in_dim()));
  }
  return t.a * x + t.b;
}

}  // namespace cartransfer

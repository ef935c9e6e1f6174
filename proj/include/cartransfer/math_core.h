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

#ifndef CARTRANSFER_MATH_CORE_H_
#define CARTRANSFER_MATH_CORE_H_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace cartransfer {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Raised for shape mismatches and invalid configuration values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// random numbers

// Mixes a base seed with a stream index (splitmix64 finalizer). Used to give
// every episode / candidate / layer its own reproducible stream.
std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double Uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double Normal() { return normal_(engine_); }
  Vector NormalVector(int n);
  std::uint64_t NextU64() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// ---------------------------------------------------------------------------
// multilayer perceptron

enum class Activation { kTanh, kIdentity };

std::string_view ActivationName(Activation activation);
Activation ParseActivation(std::string_view name);

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

// Fully connected network. The hidden nonlinearity is applied after every
// layer except the last, which is affine.
struct MlpParams {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::kTanh;

  int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }
  int output_dim() const { return static_cast<int>(layers.back().weight.rows()); }
  // width of the activation entering the final layer
  int latent_dim() const { return static_cast<int>(layers.back().weight.cols()); }
  int num_params() const;

  // Throws ConfigError if shapes do not chain or entries are non-finite.
  void Validate() const;

  // Layer-major, row-major weights followed by bias for each layer.
  Vector Flatten() const;
  void Unflatten(const Eigen::Ref<const Vector>& flat);

  // Zero-initialised network with the given layer widths
  // (sizes = {in, hidden..., out}).
  static MlpParams Zeros(const std::vector<int>& sizes,
                         Activation activation = Activation::kTanh);
  // Gaussian init with std 1/sqrt(fan_in) scaled by `gain`; zero biases.
  static MlpParams Random(const std::vector<int>& sizes, Rng& rng,
                          double gain = 1.0,
                          Activation activation = Activation::kTanh);
};

struct ForwardPass {
  Vector output;
  // activations[k] is the input fed to layer k; activations.back() is the
  // latent entering the final layer.
  std::vector<Vector> activations;
};

ForwardPass MlpForward(const MlpParams& params,
                       const Eigen::Ref<const Vector>& input);

// Column-batched forward pass (one sample per column). Returns the output
// matrix; fills `latent` with the final-layer inputs when non-null.
Matrix MlpForwardBatch(const MlpParams& params,
                       const Eigen::Ref<const Matrix>& inputs,
                       Matrix* latent = nullptr);

struct BatchForwardPass {
  Matrix output;
  std::vector<Matrix> activations;  // per-layer inputs, one sample per column
};

BatchForwardPass MlpForwardBatchTrace(const MlpParams& params,
                                      const Eigen::Ref<const Matrix>& inputs);

// Sum over columns of the per-sample parameter gradients.
MlpParams MlpBackwardBatch(const MlpParams& params, const BatchForwardPass& forward,
                           const Eigen::Ref<const Matrix>& upstream_grad);

// Gradient of a scalar loss with respect to every weight and bias, given
// dLoss/dOutput. Layout matches MlpParams (use Flatten() for a vector).
MlpParams MlpBackward(const MlpParams& params, const ForwardPass& forward,
                      const Eigen::Ref<const Vector>& upstream_grad);

// Accumulating variant: adds the gradient into `grad` (same shapes).
void MlpBackwardAccumulate(const MlpParams& params, const ForwardPass& forward,
                           const Eigen::Ref<const Vector>& upstream_grad,
                           MlpParams& grad);

// ---------------------------------------------------------------------------
// distributions

inline constexpr double kLogStdMin = -10.0;
inline constexpr double kLogStdMax = 2.0;

// Diagonal Gaussian; log_std is clamped to [kLogStdMin, kLogStdMax].
class GaussianHead {
 public:
  GaussianHead(Vector mean, Vector log_std);

  const Vector& mean() const { return mean_; }
  const Vector& log_std() const { return log_std_; }

 private:
  Vector mean_;
  Vector log_std_;
};

double GaussianLogProb(const GaussianHead& head,
                       const Eigen::Ref<const Vector>& x);

// Full-covariance Gaussian log density. Returns -inf for a singular or
// non-positive-definite covariance.
double GaussianLogProbFull(const Eigen::Ref<const Vector>& mean,
                           const Eigen::Ref<const Matrix>& covariance,
                           const Eigen::Ref<const Vector>& x);

Vector Softmax(const Eigen::Ref<const Vector>& logits);
Vector LogSoftmax(const Eigen::Ref<const Vector>& logits);
double LogSumExp(const Eigen::Ref<const Vector>& values);

// ---------------------------------------------------------------------------
// affine maps

struct AffineTransform {
  Matrix a;  // out x in
  Vector b;  // out

  int in_dim() const { return static_cast<int>(a.cols()); }
  int out_dim() const { return static_cast<int>(a.rows()); }
  int num_params() const { return out_dim() * in_dim() + out_dim(); }

  void Validate() const;

  // row-major A followed by b
  Vector Flatten() const;
  static AffineTransform Unflatten(int in_dim, int out_dim,
                                   const Eigen::Ref<const Vector>& flat);

  static AffineTransform Identity(int dim);
  // x -> outer(inner(x))
  static AffineTransform Compose(const AffineTransform& outer,
                                 const AffineTransform& inner);
};

Vector AffineApply(const AffineTransform& t, const Eigen::Ref<const Vector>& x);

}  // namespace cartransfer

#endif  // CARTRANSFER_MATH_CORE_H_

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

#include "cartransfer/losses.h"

#include <cmath>
#include <limits>
#include <numbers>

namespace cartransfer {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

Matrix GatherColumns(const Matrix& m, std::span<const std::size_t> cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(cols[j]));
  }
  return out;
}

}  // namespace

BcData MakeBcData(const TransitionDataset& data) {
  if (data.empty()) throw ConfigError("behavioural cloning on an empty dataset");
  const auto n = static_cast<Eigen::Index>(data.size());
  const Eigen::Index obs_dim = data.records.front().obs.size();
  const Eigen::Index act_dim = data.records.front().action.size();
  BcData out;
  out.obs.resize(obs_dim, n);
  out.next_obs.resize(obs_dim, n);
  out.targets.resize(act_dim, n);
  out.episode_final.resize(data.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& r = data.records[static_cast<std::size_t>(i)];
    if (r.obs.size() != obs_dim || r.action.size() != act_dim) {
      throw ConfigError("dataset has inconsistent record dimensions");
    }
    out.obs.col(i) = r.obs;
    out.next_obs.col(i) = r.next_obs;
    out.targets.col(i) = r.action.cwiseMax(-kAtanhClip).cwiseMin(kAtanhClip).array().atanh();
    out.episode_final[static_cast<std::size_t>(i)] =
        data.IsEpisodeFinal(static_cast<std::size_t>(i));
  }
  return out;
}

double DiagGaussianNll(const Eigen::Ref<const Matrix>& means, const Vector& log_std,
                       const Eigen::Ref<const Matrix>& targets) {
  if (means.rows() != log_std.size() || means.rows() != targets.rows() ||
      means.cols() != targets.cols() || means.cols() == 0) {
    throw ConfigError("gaussian nll: shape mismatch");
  }
  const Vector clamped = log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  const Vector inv_std = (-clamped.array()).exp();
  const double sq = ((means - targets).array().colwise() * inv_std.array()).square().sum();
  const double n = static_cast<double>(means.cols());
  return 0.5 * sq / n + clamped.sum() + kHalfLog2Pi * static_cast<double>(means.rows());
}

double ObsAlignBcLoss(const BasePolicy& base, const AffineTransform& t_obs,
                      const BcData& data) {
  Matrix inputs = t_obs.a * data.obs;
  inputs.colwise() += t_obs.b;
  return DiagGaussianNll(MlpForwardBatch(base.body(), inputs), base.log_std(), data.targets);
}

double ActionAlignBcLoss(const AffineTransform& t_act, const Vector& base_log_std,
                         const Eigen::Ref<const Matrix>& base_means,
                         const Eigen::Ref<const Matrix>& targets) {
  const Eigen::Index d = t_act.out_dim();
  if (base_means.rows() != t_act.in_dim() || targets.rows() != d ||
      base_means.cols() != targets.cols() || targets.cols() == 0) {
    throw ConfigError("action alignment loss: shape mismatch");
  }
  const Vector clamped = base_log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  const Vector var = (2.0 * clamped.array()).exp();
  const Matrix cov = t_act.a * var.asDiagonal() * t_act.a.transpose();
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const Matrix l = llt.matrixL();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(l(i, i) > 0.0)) return std::numeric_limits<double>::infinity();
    log_det += 2.0 * std::log(l(i, i));
  }
  Matrix resid = targets - t_act.a * base_means;
  resid.colwise() -= t_act.b;
  const Matrix z = llt.matrixL().solve(resid);
  const double n = static_cast<double>(targets.cols());
  return 0.5 * z.squaredNorm() / n + 0.5 * log_det + kHalfLog2Pi * static_cast<double>(d);
}

double ReAlignBcLoss(const AffineTransform& t_latent, const Vector& base_log_std,
                     const Eigen::Ref<const Matrix>& latent,
                     const Eigen::Ref<const Matrix>& targets) {
  Matrix means = t_latent.a * latent;
  means.colwise() += t_latent.b;
  return DiagGaussianNll(means, base_log_std, targets);
}

LossAndGrad ReAlignBcLossAndGrad(const AffineTransform& t_latent,
                                 const Vector& base_log_std, const Matrix& latent,
                                 const Matrix& targets,
                                 std::span<const std::size_t> batch) {
  const Matrix h = GatherColumns(latent, batch);
  const Matrix y = GatherColumns(targets, batch);
  Matrix means = t_latent.a * h;
  means.colwise() += t_latent.b;

  LossAndGrad out;
  out.loss = DiagGaussianNll(means, base_log_std, y);
  const Vector clamped = base_log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  const Vector inv_var = (-2.0 * clamped.array()).exp();
  const Matrix g = ((means - y).array().colwise() * inv_var.array()).matrix() /
                   static_cast<double>(batch.size());
  const AffineTransform grad{g * h.transpose(), g.rowwise().sum()};
  out.grad = grad.Flatten();
  return out;
}

double BcLossAlignment(const AlignmentPolicy& policy, const BcData& data) {
  return std::visit(
      [&data](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        const BasePolicy& base = p.base();
        if constexpr (std::is_same_v<T, ObsAlignPolicy>) {
          return ObsAlignBcLoss(base, p.transform(), data);
        } else if constexpr (std::is_same_v<T, ActionAlignPolicy>) {
          return ActionAlignBcLoss(p.transform(), base.log_std(),
                                   MlpForwardBatch(base.body(), data.obs), data.targets);
        } else {
          Matrix latent;
          MlpForwardBatch(base.body(), data.obs, &latent);
          return ReAlignBcLoss(p.transform(), base.log_std(), latent, data.targets);
        }
      },
      policy);
}

double BcLossAlignment(const AlignmentPolicy& policy, const TransitionDataset& data) {
  return BcLossAlignment(policy, MakeBcData(data));
}

// ---------------------------------------------------------------------------
// switching

SwitchingData MakeSwitchingData(const BcData& data,
                                const std::vector<BasePolicyPtr>& bases) {
  if (bases.empty()) throw ConfigError("switching loss needs at least one base");
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto n_base = static_cast<Eigen::Index>(bases.size());
  Matrix log_lik(n_base, n);
  for (Eigen::Index k = 0; k < n_base; ++k) {
    const BasePolicy& base = *bases[static_cast<std::size_t>(k)];
    const Matrix means = MlpForwardBatch(base.body(), data.obs);
    const Vector inv_std = (-base.log_std().array()).exp();
    const double norm = base.log_std().sum() + kHalfLog2Pi * static_cast<double>(means.rows());
    log_lik.row(k) = -0.5 * ((means - data.targets).array().colwise() * inv_std.array())
                                .square()
                                .colwise()
                                .sum()
                                .matrix() -
                     Eigen::RowVectorXd::Constant(n, norm);
  }
  SwitchingData out;
  out.obs = data.obs;
  out.next_obs = data.next_obs;
  out.episode_final = data.episode_final;
  out.posterior.resize(n_base, n);
  // log-space normalisation: never NaN even if every likelihood underflows
  for (Eigen::Index i = 0; i < n; ++i) out.posterior.col(i) = Softmax(log_lik.col(i));
  return out;
}

namespace {

Matrix ColumnSoftmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.cols(); ++i) out.col(i) = Softmax(logits.col(i));
  return out;
}

Matrix ColumnLogSoftmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.cols(); ++i) out.col(i) = LogSoftmax(logits.col(i));
  return out;
}

void CheckAlpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
}

}  // namespace

SwitchingLossTerms SwitchingLoss(const MlpParams& w_net, const SwitchingData& data,
                                 double alpha) {
  CheckAlpha(alpha);
  if (data.size() == 0) throw ConfigError("switching loss on an empty dataset");
  const Matrix log_w = ColumnLogSoftmax(MlpForwardBatch(w_net, data.obs));
  const Matrix w_next = ColumnSoftmax(MlpForwardBatch(w_net, data.next_obs));
  if (log_w.rows() != data.posterior.rows()) {
    throw ConfigError("switching network output does not match the number of bases");
  }
  double imitation = 0.0;
  double temporal = 0.0;
  for (Eigen::Index i = 0; i < log_w.cols(); ++i) {
    imitation -= data.posterior.col(i).dot(log_w.col(i));
    if (!data.episode_final[static_cast<std::size_t>(i)]) {
      temporal -= w_next.col(i).dot(log_w.col(i));
    }
  }
  const double n = static_cast<double>(data.size());
  SwitchingLossTerms terms;
  terms.imitation = imitation / n;
  terms.temporal = temporal / n;
  terms.total = alpha * terms.imitation + (1.0 - alpha) * terms.temporal;
  return terms;
}

double SwitchingLoss(const MlpParams& w_net, const TransitionDataset& data,
                     const std::vector<BasePolicyPtr>& bases, double alpha) {
  return SwitchingLoss(w_net, MakeSwitchingData(MakeBcData(data), bases), alpha).total;
}

LossAndGrad SwitchingLossAndGrad(const MlpParams& w_net, const SwitchingData& data,
                                 double alpha, std::span<const std::size_t> batch,
                                 const MlpParams* target_net) {
  CheckAlpha(alpha);
  if (batch.empty()) throw ConfigError("switching loss on an empty batch");
  const Matrix obs = GatherColumns(data.obs, batch);
  const Matrix next_obs = GatherColumns(data.next_obs, batch);
  const Matrix q = GatherColumns(data.posterior, batch);

  const BatchForwardPass pass = MlpForwardBatchTrace(w_net, obs);
  const Matrix log_w = ColumnLogSoftmax(pass.output);
  const Matrix w = log_w.array().exp();
  const Matrix w_next =
      ColumnSoftmax(MlpForwardBatch(target_net != nullptr ? *target_net : w_net, next_obs));

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  Matrix upstream(w.rows(), w.cols());
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    const bool final_record = data.episode_final[batch[static_cast<std::size_t>(j)]];
    double record = -alpha * q.col(j).dot(log_w.col(j));
    // d/dz of -sum p log softmax(z) is softmax(z) - p
    upstream.col(j) = alpha * (w.col(j) - q.col(j));
    if (!final_record) {
      record -= (1.0 - alpha) * w_next.col(j).dot(log_w.col(j));
      upstream.col(j) += (1.0 - alpha) * (w.col(j) - w_next.col(j));
    }
    loss += record;
  }
  upstream *= inv_n;

  LossAndGrad out;
  out.loss = loss * inv_n;
  out.grad = MlpBackwardBatch(w_net, pass, upstream).Flatten();
  return out;
}

}  // namespace cartransfer

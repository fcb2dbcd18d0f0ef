// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vicmae/autograd.hpp"
#include "vicmae/patches.hpp"
#include "vicmae/tensor.hpp"

namespace vicmae {

struct LossReport {
  double recon = 0.0;
  double contrastive = 0.0;
  double lambda_effective = 0.0;
  double total = 0.0;
  /// Gradient norms of the recon and contrastive terms, when computed.
  std::optional<double> recon_grad_norm;
  std::optional<double> contrastive_grad_norm;
};

struct VicRegCoeffs {
  double lambda_inv = 25.0;
  double mu = 25.0;
  double nu = 1.0;
  double gamma = 1.0;
  double eps = 1e-4;

  void validate() const;
};

struct VicRegTerms {
  double invariance = 0.0;
  /// v(P) + v(Z), unweighted.
  double variance = 0.0;
  /// c(P) + c(Z), unweighted.
  double covariance = 0.0;
  double total = 0.0;
};

/// Mean over masked tokens of the per-token mean squared error. `pred` and
/// `target` are [batch * L, patch_dim]; one plan per sample.
ag::Var recon_loss(ag::Var pred, const Matrix& target, const std::vector<MaskPlan>& plans);
double recon_loss(const Matrix& pred, const Matrix& target, const std::vector<MaskPlan>& plans);

struct InfoNceOptions {
  double tau = 0.1;
  /// When set, logits are multiplied by exp(log_scale) and tau is ignored.
  std::optional<ag::Var> log_scale;
  double loss_scale = 1.0;
};

/// Contrastive loss over the 2N embeddings [p; z]. Each anchor's positive is
/// its partner; the denominator runs over every other embedding. The result
/// is the mean over all 2N anchors, times loss_scale.
ag::Var info_nce(ag::Var p, ag::Var z, const InfoNceOptions& opt);
double info_nce(const Matrix& p, const Matrix& z, double tau);

/// Mean of 2(1 - p_i . z_i) with z treated as a constant.
ag::Var simsiam_loss(ag::Var p, ag::Var z);
double simsiam_loss(const Matrix& p, const Matrix& z);

/// lambda_inv/n sum |p_i - z_i|^2 + mu [v(P) + v(Z)] + nu [c(P) + c(Z)].
ag::Var vicreg_loss(ag::Var p, ag::Var z, const VicRegCoeffs& c, VicRegTerms* terms = nullptr);
VicRegTerms vicreg_terms(const Matrix& p, const Matrix& z, const VicRegCoeffs& c);

/// Variance hinge mean_d max(0, gamma - sqrt(Var_d + eps)), unbiased variance.
double vicreg_variance(const Matrix& x, double gamma, double eps);
/// Sum of squared off-diagonal covariances divided by the width.
double vicreg_covariance(const Matrix& x);

/// 0 before switch_fraction * total_epochs, lambda_max afterwards. The ramp
/// variant rises linearly from 0 to lambda_max over the same span.
double lambda_schedule(double epoch, int total_epochs, double lambda_max, double switch_fraction, bool ramp = false);

/// total = recon + lambda * contrastive; rejects non-finite inputs naming the term.
LossReport combined_loss(double recon, double contrastive, double lambda_effective);

/// Throws ValidationError when a row norm differs from 1 by more than tol.
void require_unit_rows(const Matrix& x, const char* what, double tol = 1e-4);

}  // namespace vicmae

// SPDX-License-Identifier: Apache-2.0
#include "vicmae/losses.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "vicmae/error.hpp"

namespace vicmae {

void VicRegCoeffs::validate() const {
  if (lambda_inv < 0 || mu < 0 || nu < 0 || gamma < 0 || eps < 0) {
    throw ValidationError("VicReg coefficients must be non-negative");
  }
}

void require_unit_rows(const Matrix& x, const char* what, double tol) {
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double n = x.row(r).norm();
    if (std::abs(n - 1.0) > tol) {
      throw ValidationError(std::string(what) + ": row " + std::to_string(r) + " has norm " + std::to_string(n) +
                            ", expected unit rows");
    }
  }
}

// ---- reconstruction ---------------------------------------------------------------

namespace {

Matrix masked_weights(const Matrix& pred, const Matrix& target, const std::vector<MaskPlan>& plans) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ValidationError("recon_loss: prediction and target shapes differ");
  }
  Matrix w = mask_weights(plans);
  if (w.rows() != pred.rows()) throw ValidationError("recon_loss: plans do not cover the prediction rows");
  if (w.sum() < 0.5) throw ValidationError("recon_loss: no masked tokens");
  return w;
}

}  // namespace

double recon_loss(const Matrix& pred, const Matrix& target, const std::vector<MaskPlan>& plans) {
  const Matrix w = masked_weights(pred, target, plans);
  const Vector per_token = (pred - target).array().square().rowwise().mean();
  return per_token.dot(w.col(0)) / w.sum();
}

ag::Var recon_loss(ag::Var pred, const Matrix& target, const std::vector<MaskPlan>& plans) {
  ag::Graph& g = pred.graph();
  Matrix w = masked_weights(pred.value(), target, plans);
  Matrix diff = pred.value() - target;
  const double denom = w.sum() * static_cast<double>(pred.cols());
  Matrix out(1, 1);
  out(0, 0) = (diff.array().square().colwise() * w.col(0).array()).sum() / denom;
  return g.make(std::move(out), {pred}, [&g, pred, diff = std::move(diff), w = std::move(w), denom](const Matrix& go) {
    g.grad_acc(pred) += ((diff.array().colwise() * w.col(0).array()) * (2.0 * go(0, 0) / denom)).matrix();
  });
}

// ---- InfoNCE -------------------------------------------------------------------------

namespace {

struct NceForward {
  double loss = 0.0;
  /// d loss / d S, where S = E E^T.
  Matrix grad_s;
  Matrix sims;
};

// E = [p; z]; logits = c * E E^T with the diagonal excluded.
NceForward nce_forward(const Matrix& p, const Matrix& z, double c, double loss_scale) {
  const Eigen::Index n = p.rows();
  const Eigen::Index m = 2 * n;
  Matrix e(m, p.cols());
  e.topRows(n) = p;
  e.bottomRows(n) = z;
  NceForward f;
  f.sims = e * e.transpose();
  f.grad_s = Matrix::Zero(m, m);
  const double w = loss_scale / static_cast<double>(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const Eigen::Index pos = a < n ? a + n : a - n;
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < m; ++k) {
      if (k != a) mx = std::max(mx, c * f.sims(a, k));
    }
    double denom = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (k != a) denom += std::exp(c * f.sims(a, k) - mx);
    }
    const double lse = mx + std::log(denom);
    f.loss += w * (lse - c * f.sims(a, pos));
    for (Eigen::Index k = 0; k < m; ++k) {
      if (k == a) continue;
      f.grad_s(a, k) = w * c * (std::exp(c * f.sims(a, k) - lse) - (k == pos ? 1.0 : 0.0));
    }
  }
  return f;
}

}  // namespace

double info_nce(const Matrix& p, const Matrix& z, double tau) {
  if (p.rows() < 2) throw ValidationError("info_nce: needs N >= 2");
  if (p.rows() != z.rows() || p.cols() != z.cols()) throw ValidationError("info_nce: p and z shapes differ");
  if (!(tau > 0)) throw ValidationError("info_nce: tau must be positive");
  require_unit_rows(p, "info_nce p");
  require_unit_rows(z, "info_nce z");
  return nce_forward(p, z, 1.0 / tau, 1.0).loss;
}

ag::Var info_nce(ag::Var p, ag::Var z, const InfoNceOptions& opt) {
  const Matrix& pv = p.value();
  const Matrix& zv = z.value();
  if (pv.rows() < 2) throw ValidationError("info_nce: needs N >= 2");
  if (pv.rows() != zv.rows() || pv.cols() != zv.cols()) throw ValidationError("info_nce: p and z shapes differ");
  require_unit_rows(pv, "info_nce p");
  require_unit_rows(zv, "info_nce z");
  ag::Graph& g = p.graph();
  double c = 0.0;
  ag::Var scale_var = g.constant(Matrix::Zero(1, 1));
  if (opt.log_scale) {
    scale_var = *opt.log_scale;
    c = std::exp(scale_var.scalar());
  } else {
    if (!(opt.tau > 0)) throw ValidationError("info_nce: tau must be positive");
    c = 1.0 / opt.tau;
  }
  NceForward f = nce_forward(pv, zv, c, opt.loss_scale);
  Matrix out(1, 1);
  out(0, 0) = f.loss;
  const Eigen::Index n = pv.rows();
  const bool learnable = opt.log_scale.has_value();
  return g.make(std::move(out), {p, z, scale_var},
                [&g, p, z, scale_var, n, learnable, f = std::move(f)](const Matrix& go) {
                  const double s = go(0, 0);
                  Matrix e(2 * n, p.cols());
                  e.topRows(n) = p.value();
                  e.bottomRows(n) = z.value();
                  // grad_s already carries the factor c from dS_logit/dS.
                  const Matrix de = (f.grad_s + f.grad_s.transpose()) * e * s;
                  if (g.needs_grad(p)) g.grad_acc(p) += de.topRows(n);
                  if (g.needs_grad(z)) g.grad_acc(z) += de.bottomRows(n);
                  if (learnable && g.needs_grad(scale_var)) {
                    // d/dlog_scale of c*S terms = sum (grad wrt logits) * logits.
                    g.grad_acc(scale_var)(0, 0) += s * (f.grad_s.array() * f.sims.array()).sum();
                  }
                });
}

// ---- SimSiam --------------------------------------------------------------------------

double simsiam_loss(const Matrix& p, const Matrix& z) {
  if (p.rows() != z.rows() || p.cols() != z.cols()) throw ValidationError("simsiam_loss: shapes differ");
  require_unit_rows(p, "simsiam p");
  require_unit_rows(z, "simsiam z");
  return 2.0 * (1.0 - (p.array() * z.array()).rowwise().sum().mean());
}

ag::Var simsiam_loss(ag::Var p, ag::Var z) {
  const double v = simsiam_loss(p.value(), z.value());
  ag::Graph& g = p.graph();
  Matrix out(1, 1);
  out(0, 0) = v;
  const Matrix zc = z.value();
  const double n = static_cast<double>(p.rows());
  // Only p is an input: no gradient reaches z.
  return g.make(std::move(out), {p}, [&g, p, zc, n](const Matrix& go) { g.grad_acc(p) += zc * (-2.0 * go(0, 0) / n); });
}

// ---- VicReg ---------------------------------------------------------------------------

double vicreg_variance(const Matrix& x, double gamma, double eps) {
  const Eigen::Index n = x.rows();
  if (n < 2) throw ValidationError("vicreg: variance needs N >= 2");
  const RowVector mean = x.colwise().mean();
  const RowVector var = (x.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(n - 1);
  double acc = 0.0;
  for (Eigen::Index d = 0; d < x.cols(); ++d) acc += std::max(0.0, gamma - std::sqrt(var(d) + eps));
  return acc / static_cast<double>(x.cols());
}

double vicreg_covariance(const Matrix& x) {
  const Eigen::Index n = x.rows();
  if (n < 2) throw ValidationError("vicreg: covariance needs N >= 2");
  const Matrix xc = x.rowwise() - x.colwise().mean();
  Matrix cov = xc.transpose() * xc / static_cast<double>(n - 1);
  cov.diagonal().setZero();
  return cov.array().square().sum() / static_cast<double>(x.cols());
}

VicRegTerms vicreg_terms(const Matrix& p, const Matrix& z, const VicRegCoeffs& c) {
  c.validate();
  if (p.rows() != z.rows() || p.cols() != z.cols()) throw ValidationError("vicreg_loss: shapes differ");
  if (p.rows() < 2) throw ValidationError("vicreg_loss: needs N >= 2");
  VicRegTerms t;
  t.invariance = (p - z).array().square().rowwise().sum().mean();
  t.variance = vicreg_variance(p, c.gamma, c.eps) + vicreg_variance(z, c.gamma, c.eps);
  t.covariance = vicreg_covariance(p) + vicreg_covariance(z);
  t.total = c.lambda_inv * t.invariance + c.mu * t.variance + c.nu * t.covariance;
  return t;
}

namespace {

// Gradient of mu * v(X) + nu * c(X) with respect to X.
Matrix vicreg_branch_grad(const Matrix& x, const VicRegCoeffs& c) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const Matrix xc = x.rowwise() - x.colwise().mean();
  const RowVector var = xc.array().square().colwise().sum() / static_cast<double>(n - 1);
  Matrix grad = Matrix::Zero(n, d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double s = std::sqrt(var(k) + c.eps);
    if (c.gamma > s) {
      grad.col(k) += xc.col(k) * (-c.mu / static_cast<double>(d) / (static_cast<double>(n - 1) * s));
    }
  }
  Matrix cov = xc.transpose() * xc / static_cast<double>(n - 1);
  cov.diagonal().setZero();
  grad += xc * cov * (4.0 * c.nu / (static_cast<double>(d) * static_cast<double>(n - 1)));
  return grad;
}

}  // namespace

ag::Var vicreg_loss(ag::Var p, ag::Var z, const VicRegCoeffs& c, VicRegTerms* terms) {
  const VicRegTerms t = vicreg_terms(p.value(), z.value(), c);
  if (terms != nullptr) *terms = t;
  ag::Graph& g = p.graph();
  Matrix out(1, 1);
  out(0, 0) = t.total;
  return g.make(std::move(out), {p, z}, [&g, p, z, c](const Matrix& go) {
    const double s = go(0, 0);
    const double n = static_cast<double>(p.rows());
    const Matrix inv = (p.value() - z.value()) * (2.0 * c.lambda_inv / n);
    if (g.needs_grad(p)) g.grad_acc(p) += (inv + vicreg_branch_grad(p.value(), c)) * s;
    if (g.needs_grad(z)) g.grad_acc(z) += (vicreg_branch_grad(z.value(), c) - inv) * s;
  });
}

// ---- schedule and combination ---------------------------------------------------

double lambda_schedule(double epoch, int total_epochs, double lambda_max, double switch_fraction, bool ramp) {
  if (!(switch_fraction >= 0.0 && switch_fraction <= 1.0)) {
    throw ValidationError("lambda switch fraction must lie in [0, 1], got " + std::to_string(switch_fraction));
  }
  if (total_epochs < 1) throw ValidationError("lambda schedule: total epochs must be positive");
  const double switch_epoch = switch_fraction * total_epochs;
  if (ramp) {
    if (switch_epoch <= 0.0) return lambda_max;
    return lambda_max * std::min(1.0, epoch / switch_epoch);
  }
  return epoch < switch_epoch ? 0.0 : lambda_max;
}

LossReport combined_loss(double recon, double contrastive, double lambda_effective) {
  if (!std::isfinite(recon)) throw NumericError("non-finite reconstruction loss: " + std::to_string(recon));
  if (!std::isfinite(contrastive)) {
    throw NumericError("non-finite contrastive loss: " + std::to_string(contrastive));
  }
  if (!std::isfinite(lambda_effective)) throw NumericError("non-finite lambda: " + std::to_string(lambda_effective));
  LossReport r;
  r.recon = recon;
  r.contrastive = contrastive;
  r.lambda_effective = lambda_effective;
  r.total = recon + lambda_effective * contrastive;
  return r;
}

}  // namespace vicmae

#pragma once

// Population-level lower bounds on mutual information from covariance
// matrices and conditional-mean prediction error. All values are in nats.

#include <cmath>
#include <string_view>
#include <utility>

#include <Eigen/Dense>

#include "nubound/error.hpp"
#include "nubound/special.hpp"

namespace nubound {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Absolute eigenvalue slack allowed when checking Loewner ordering.
inline constexpr double kOrderSlack = 1e-10;
/// Relative asymmetry tolerated in matrices declared symmetric.
inline constexpr double kSymmetryTol = 1e-10;

enum class BoundKind { NuDeterminant, PearsonCorrelation, AvgMmseTrace };
enum class Direction { OutputGivenInput, InputGivenOutput };

inline std::string_view to_string(BoundKind k) {
  switch (k) {
    case BoundKind::NuDeterminant: return "nu_determinant";
    case BoundKind::PearsonCorrelation: return "pearson_correlation";
    case BoundKind::AvgMmseTrace: return "avg_mmse_trace";
  }
  return "?";
}

/// ν = det(E[e eᵀ]) / det(V[Z]) kept in log form.
struct NuStatistic {
  double value = 1.0;
  double numerator_logdet = 0.0;
  double denominator_logdet = 0.0;

  static NuStatistic from_value(double v) { return {v, std::log(v), 0.0}; }
};

struct BoundEstimate {
  double nats = 0.0;
  BoundKind kind = BoundKind::NuDeterminant;
  Direction direction = Direction::OutputGivenInput;
  bool per_dimension = false;

  double bits() const { return nats_to_bits(nats); }
};

struct CovariancePartition {
  MatrixXd sigma_xx;
  MatrixXd sigma_xz;
  MatrixXd sigma_zz;

  Eigen::Index dim_x() const { return sigma_xx.rows(); }
  Eigen::Index dim_z() const { return sigma_zz.rows(); }

  MatrixXd assembled() const {
    const auto dx = dim_x(), dz = dim_z();
    MatrixXd full(dx + dz, dx + dz);
    full.topLeftCorner(dx, dx) = sigma_xx;
    full.topRightCorner(dx, dz) = sigma_xz;
    full.bottomLeftCorner(dz, dx) = sigma_xz.transpose();
    full.bottomRightCorner(dz, dz) = sigma_zz;
    return full;
  }

  void validate() const;
};

namespace detail {

inline void check_symmetric(const MatrixXd& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) throw Error(ErrorCode::InvalidArgument, std::string(what) + " must be square");
  const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol * scale) {
    throw Error(ErrorCode::InvalidArgument, std::string(what) + " is not symmetric");
  }
}

/// log det of an SPD matrix through its Cholesky factor.
inline double log_det_spd(const MatrixXd& m, ErrorCode on_fail, const char* what) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw Error(on_fail, std::string(what) + " is not positive definite");
  const Eigen::VectorXd diag = llt.matrixLLT().diagonal();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < diag.size(); ++i) {
    if (!(diag(i) > 0.0)) throw Error(on_fail, std::string(what) + " is not positive definite");
    sum += std::log(diag(i));
  }
  return 2.0 * sum;
}

inline double min_eigenvalue(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

inline void check_loewner(const MatrixXd& larger, const MatrixXd& smaller) {
  if (min_eigenvalue(larger - smaller) < -kOrderSlack) {
    throw Error(ErrorCode::OrderViolation, "conditional variance exceeds total variance");
  }
}

inline void check_pair(const MatrixXd& total_var, const MatrixXd& cond_var) {
  check_symmetric(total_var, "total variance");
  check_symmetric(cond_var, "expected conditional variance");
  if (total_var.rows() != cond_var.rows()) throw Error(ErrorCode::InvalidArgument, "dimension mismatch");
}

}  // namespace detail

inline void CovariancePartition::validate() const {
  detail::check_symmetric(sigma_xx, "sigma_xx");
  detail::check_symmetric(sigma_zz, "sigma_zz");
  if (sigma_xz.rows() != dim_x() || sigma_xz.cols() != dim_z()) {
    throw Error(ErrorCode::InvalidArgument, "sigma_xz has wrong shape");
  }
  if (detail::min_eigenvalue(assembled()) < -kOrderSlack) {
    throw Error(ErrorCode::NonPositiveDefinite, "joint covariance is not positive semi-definite");
  }
}

/// ν = det(expected_cond_var) / det(total_var).
inline NuStatistic nu_from_moments(const MatrixXd& total_var, const MatrixXd& expected_cond_var) {
  detail::check_pair(total_var, expected_cond_var);
  NuStatistic nu;
  nu.denominator_logdet = detail::log_det_spd(total_var, ErrorCode::NonPositiveDefinite, "total variance");
  nu.numerator_logdet =
      detail::log_det_spd(expected_cond_var, ErrorCode::NonPositiveDefinite, "expected conditional variance");
  detail::check_loewner(total_var, expected_cond_var);
  nu.value = std::exp(nu.numerator_logdet - nu.denominator_logdet);
  return nu;
}

/// −½ log ν. A ν above one would give a negative bound and is reported as
/// NegativeBound rather than clamped.
inline BoundEstimate bound_from_nu(const NuStatistic& nu, Direction direction = Direction::OutputGivenInput) {
  if (!(nu.value > 0.0) || !std::isfinite(nu.value)) throw Error(ErrorCode::DomainError, "nu must lie in (0, 1]");
  if (nu.value > 1.0) throw Error(ErrorCode::NegativeBound, "nu exceeds one; bound would be negative");
  BoundEstimate b;
  b.nats = std::max(0.0, 0.5 * (nu.denominator_logdet - nu.numerator_logdet));
  b.kind = BoundKind::NuDeterminant;
  b.direction = direction;
  return b;
}

/// Divides a bound by the dimension it is spread over.
inline BoundEstimate per_dimension(BoundEstimate b, Eigen::Index dim) {
  if (b.per_dimension) return b;
  b.nats /= static_cast<double>(dim);
  b.per_dimension = true;
  return b;
}

/// Gaussian-input correlation bound ½ log[det Σ_ZZ / det(Σ_ZZ − Σ_ZX Σ_XX⁻¹ Σ_XZ)].
inline BoundEstimate gaussian_corr_bound(const CovariancePartition& cov) {
  cov.validate();
  Eigen::LLT<MatrixXd> xx(cov.sigma_xx);
  if (xx.info() != Eigen::Success) throw Error(ErrorCode::SingularMatrix, "sigma_xx is singular");
  const double logdet_zz = detail::log_det_spd(cov.sigma_zz, ErrorCode::SingularMatrix, "sigma_zz");
  const MatrixXd schur = cov.sigma_zz - cov.sigma_xz.transpose() * xx.solve(cov.sigma_xz);
  const double logdet_schur = detail::log_det_spd(schur, ErrorCode::OrderViolation, "Schur complement");
  BoundEstimate b;
  b.nats = std::max(0.0, 0.5 * (logdet_zz - logdet_schur));
  b.kind = BoundKind::PearsonCorrelation;
  return b;
}

/// Same bound through the X-side determinant form.
inline BoundEstimate gaussian_corr_bound_x_form(const CovariancePartition& cov) {
  cov.validate();
  Eigen::LLT<MatrixXd> zz(cov.sigma_zz);
  if (zz.info() != Eigen::Success) throw Error(ErrorCode::SingularMatrix, "sigma_zz is singular");
  const double logdet_xx = detail::log_det_spd(cov.sigma_xx, ErrorCode::SingularMatrix, "sigma_xx");
  const MatrixXd schur = cov.sigma_xx - cov.sigma_xz * zz.solve(cov.sigma_xz.transpose());
  const double logdet_schur = detail::log_det_spd(schur, ErrorCode::OrderViolation, "Schur complement");
  BoundEstimate b;
  b.nats = std::max(0.0, 0.5 * (logdet_xx - logdet_schur));
  b.kind = BoundKind::PearsonCorrelation;
  b.direction = Direction::InputGivenOutput;
  return b;
}

/// Bivariate form −½ log(1 − ρ²).
inline BoundEstimate correlation_bound(double corr, Direction direction = Direction::InputGivenOutput) {
  if (!(std::fabs(corr) < 1.0)) throw Error(ErrorCode::DomainError, "correlation must lie in (-1, 1)");
  BoundEstimate b;
  b.nats = -0.5 * std::log1p(-corr * corr);
  b.kind = BoundKind::PearsonCorrelation;
  b.direction = direction;
  return b;
}

namespace detail {

/// ½ log{ det(V)^{1/d} / (tr(E)/d) } without the sign check.
inline double avg_mmse_nats(const MatrixXd& total_var, const MatrixXd& expected_cond_var) {
  const NuStatistic nu = nu_from_moments(total_var, expected_cond_var);
  const double d = static_cast<double>(total_var.rows());
  return 0.5 * (nu.denominator_logdet / d - std::log(expected_cond_var.trace() / d));
}

}  // namespace detail

/// Per-dimension average-MMSE bound ½ log{ det(V)^{1/d} / (tr(E)/d) }. With a
/// strongly anisotropic V the expression can be negative even for a valid
/// pair; that case raises NegativeBound.
inline BoundEstimate avg_mmse_bound(const MatrixXd& total_var, const MatrixXd& expected_cond_var,
                                    Direction direction = Direction::OutputGivenInput) {
  const double nats = detail::avg_mmse_nats(total_var, expected_cond_var);
  if (nats < 0.0) throw Error(ErrorCode::NegativeBound, "average-MMSE bound is negative for this variance pair");
  BoundEstimate b;
  b.nats = nats;
  b.kind = BoundKind::AvgMmseTrace;
  b.direction = direction;
  b.per_dimension = true;
  return b;
}

struct InputSideBounds {
  BoundEstimate nu_determinant;  // total, not per dimension
  BoundEstimate trace;           // per dimension
};

/// Bounds from regressing the Gaussianized input X̃ on the response.
inline InputSideBounds input_side_bound(const MatrixXd& total_var_xtilde, const MatrixXd& expected_cond_var_xtilde) {
  const NuStatistic nu = nu_from_moments(total_var_xtilde, expected_cond_var_xtilde);
  return {bound_from_nu(nu, Direction::InputGivenOutput),
          avg_mmse_bound(total_var_xtilde, expected_cond_var_xtilde, Direction::InputGivenOutput)};
}

}  // namespace nubound

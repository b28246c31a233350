#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ttguide/adapters.hpp"
#include "ttguide/linalg.hpp"

namespace ttguide {

/// Dense Jacobians are limited to N * |theta| entries.
inline constexpr std::size_t kJacobianCap = std::size_t{1} << 24;

/// d logits[output_index] / d theta for one raw sample ([1 x P] or length P),
/// flattened in param_names() order.
std::vector<double> param_jacobian(const Adapter& a, const FrozenBackbone& b, const DenseTensor& x_raw,
                                   std::size_t output_index);

/// Stacked per-sample Jacobians [N x |theta|]. Throws CapError past `cap` entries.
RowMatrixXd jacobian_matrix(const Adapter& a, const FrozenBackbone& b, const DenseTensor& samples_raw,
                            std::size_t output_index = 0, std::size_t cap = kJacobianCap);

/// Empirical NTK: the Gram matrix of per-sample parameter gradients.
struct NTKMatrix {
    DenseTensor data;  ///< [N x N], exactly symmetric
    std::size_t sample_count = 0;

    double max_asymmetry() const;
    double max_diagonal() const;
};

/// K = J J^T, upper triangle computed and mirrored.
NTKMatrix gram(const RowMatrixXd& J);

NTKMatrix ntk_matrix(const Adapter& a, const FrozenBackbone& b, const DenseTensor& samples_raw,
                     std::size_t output_index = 0, std::size_t cap = kJacobianCap);

struct SpectralStats {
    std::string name;
    std::string kind;
    std::size_t param_count = 0;
    double lambda_min = 0;
    double lambda_max = 0;
    std::optional<double> condition;  ///< empty when lambda_min <= 0
    double kappa = 0;                 ///< sqrt(max_n K(x_n, x_n))
    bool psd = false;                 ///< lambda_min >= -1e-8
    double max_asymmetry = 0;
    std::vector<double> eigenvalues;  ///< ascending
};

SpectralStats spectral_stats(const std::string& name, const Adapter& a, const NTKMatrix& k);

/// Diagnostic spectral table; nothing is asserted about the ordering of lambda_min.
std::vector<SpectralStats> ntk_compare(const std::vector<std::pair<std::string, Adapter>>& adapters,
                                       const FrozenBackbone& b, const DenseTensor& samples_raw,
                                       std::size_t output_index = 0, std::size_t cap = kJacobianCap);

/// The factorized lower bound lambda_min(T) >= lambda_min(G G^T) lambda_min(J_w J_w^T), with
/// J_w = d f / d w_hat and G = d w_hat / d theta, evaluated on a small TensorGuide instance.
struct RayleighCheck {
    double lambda_min_ntk = 0;
    double lambda_min_generator = 0;  ///< lambda_min(G G^T)
    double lambda_min_weights = 0;    ///< lambda_min(J_w J_w^T)
    double rhs = 0;
    bool holds = false;  ///< lambda_min_ntk >= rhs - 1e-8
};

RayleighCheck rayleigh_check(const TensorGuideAdapter& g, const FrozenBackbone& b, const DenseTensor& samples_raw,
                             std::size_t output_index = 0, std::size_t cap = kJacobianCap);

struct BoundInputs {
    // approximation
    double L_ce = 1, C1 = 1, C2 = 1, L_sigma = 1, eps_tt = 0;
    // optimization
    double C0 = 1, lambda_min = 0, t = 0;
    // generalization
    double B = 1, L_ell = 1, kappa = 1, gamma = 1;
    double N = 1;
    double delta = 0.05;
    double empirical_risk = 0;

    /// All nonnegative and finite, N >= 1, 0 < delta <= 1; throws ConfigError.
    void validate() const;
};

/// L_ce C1 / sqrt(M) + 2 C2 L_ce L_sigma eps_tt
double approximation_bound(const BoundInputs& i, double M);
/// C0 exp(-lambda_min t)
double optimization_bound(double C0, double lambda_min, double t);
/// risk + 2 B L_ell kappa / sqrt(N) + gamma sqrt(ln(1/delta) / (2N))
double generalization_bound(const BoundInputs& i);
/// B kappa / sqrt(N)
double rademacher_bound(double B, double kappa, double N);

} // namespace ttguide

#include "ttguide/ntk.hpp"

#include <algorithm>
#include <cmath>

#include "ttguide/trainer.hpp"

namespace ttguide {

namespace {

RowMatrixXd one_hot_row(std::size_t Q, std::size_t q) {
    RowMatrixXd e = RowMatrixXd::Zero(1, static_cast<Eigen::Index>(Q));
    e(0, static_cast<Eigen::Index>(q)) = 1.0;
    return e;
}

void check_output_index(const FrozenBackbone& b, std::size_t q) {
    if (q >= b.Q())
        throw ConfigError("output index " + std::to_string(q) + " out of range [0, " + std::to_string(b.Q()) + ")");
}

void check_cap(std::size_t rows, std::size_t cols, std::size_t cap, const char* what) {
    if (cols != 0 && rows > cap / cols)
        throw CapError(std::string(what) + " would hold " + std::to_string(rows) + " x " + std::to_string(cols) +
                       " entries, above the cap of " + std::to_string(cap) + "; subsample to fewer rows");
}

RowMatrixXd raw_rows(const DenseTensor& x) {
    if (x.shape().rank() == 1) return Eigen::Map<const RowMatrixXd>(x.data(), 1, static_cast<Eigen::Index>(x.size()));
    return x.matrix();
}

double min_eig(const NTKMatrix& k) { return eig_sym<double>(k.data.matrix()).values[0]; }

} // namespace

double NTKMatrix::max_asymmetry() const {
    const auto m = data.matrix();
    return (m - m.transpose()).cwiseAbs().maxCoeff();
}

double NTKMatrix::max_diagonal() const { return data.matrix().diagonal().maxCoeff(); }

std::vector<double> param_jacobian(const Adapter& a, const FrozenBackbone& b, const DenseTensor& x_raw,
                                   std::size_t output_index) {
    check_output_index(b, output_index);
    const RowMatrixXd x = b.features(raw_rows(x_raw));
    if (x.rows() != 1) throw ShapeError("param_jacobian takes a single sample");
    return backward_upstream(a, b, x, one_hot_row(b.Q(), output_index)).flatten();
}

RowMatrixXd jacobian_matrix(const Adapter& a, const FrozenBackbone& b, const DenseTensor& samples_raw,
                            std::size_t output_index, std::size_t cap) {
    check_output_index(b, output_index);
    const RowMatrixXd X = b.features(raw_rows(samples_raw));
    const std::size_t N = static_cast<std::size_t>(X.rows()), T = param_count(a);
    if (N == 0) throw ConfigError("NTK needs at least one sample");
    check_cap(N, T, cap, "the Jacobian");

    const RowMatrixXd e = one_hot_row(b.Q(), output_index);
    RowMatrixXd J(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(T));
    for (std::size_t n = 0; n < N; ++n) {
        const std::vector<double> row = backward_upstream(a, b, X.row(static_cast<Eigen::Index>(n)), e).flatten();
        std::copy(row.begin(), row.end(), J.row(static_cast<Eigen::Index>(n)).data());
    }
    return J;
}

NTKMatrix gram(const RowMatrixXd& J) {
    const auto N = J.rows();
    std::vector<double> k(static_cast<std::size_t>(N * N));
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = i; j < N; ++j) {
            double s = 0;
            for (Eigen::Index c = 0; c < J.cols(); ++c) s += J(i, c) * J(j, c);
            k[static_cast<std::size_t>(i * N + j)] = s;
            k[static_cast<std::size_t>(j * N + i)] = s;
        }
    NTKMatrix m;
    m.sample_count = static_cast<std::size_t>(N);
    m.data = DenseTensor(Shape{m.sample_count, m.sample_count}, std::move(k));
    return m;
}

NTKMatrix ntk_matrix(const Adapter& a, const FrozenBackbone& b, const DenseTensor& samples_raw,
                     std::size_t output_index, std::size_t cap) {
    return gram(jacobian_matrix(a, b, samples_raw, output_index, cap));
}

SpectralStats spectral_stats(const std::string& name, const Adapter& a, const NTKMatrix& k) {
    SpectralStats s;
    s.name = name;
    s.kind = kind(a);
    s.param_count = param_count(a);
    const EigResult e = eig_sym<double>(k.data.matrix());
    s.eigenvalues.assign(e.values.data(), e.values.data() + e.values.size());
    s.lambda_min = s.eigenvalues.front();
    s.lambda_max = s.eigenvalues.back();
    if (s.lambda_min > 0) s.condition = s.lambda_max / s.lambda_min;
    s.kappa = std::sqrt(std::max(0.0, k.max_diagonal()));
    s.psd = s.lambda_min >= -1e-8;
    s.max_asymmetry = k.max_asymmetry();
    return s;
}

std::vector<SpectralStats> ntk_compare(const std::vector<std::pair<std::string, Adapter>>& adapters,
                                       const FrozenBackbone& b, const DenseTensor& samples_raw,
                                       std::size_t output_index, std::size_t cap) {
    std::vector<SpectralStats> out;
    for (const auto& [name, a] : adapters) {
        validate(a, b.D(), b.Q());
        out.push_back(spectral_stats(name, a, ntk_matrix(a, b, samples_raw, output_index, cap)));
    }
    return out;
}

RayleighCheck rayleigh_check(const TensorGuideAdapter& g, const FrozenBackbone& b, const DenseTensor& samples_raw,
                             std::size_t output_index, std::size_t cap) {
    check_output_index(b, output_index);
    const RowMatrixXd X = b.features(raw_rows(samples_raw));
    const std::size_t N = static_cast<std::size_t>(X.rows());
    const std::size_t W = g.tt.format().out_size(), T = tt_param_count(g.tt.format());
    check_cap(N, W, cap, "the generated-weight Jacobian");
    check_cap(W, T, cap, "the generator Jacobian");

    // J_w: [N x W]
    const RowMatrixXd e = one_hot_row(b.Q(), output_index);
    RowMatrixXd Jw(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(W));
    for (std::size_t n = 0; n < N; ++n) Jw.row(static_cast<Eigen::Index>(n)) = generated_weight_gradient(g, X.row(static_cast<Eigen::Index>(n)), e);

    // G: [W x T], row j = d y_j / d theta
    TTChainTape<double> tape;
    Eigen::Map<const RowMatrixXd> zrow(g.z.data(), 1, static_cast<Eigen::Index>(g.z.size()));
    tt_apply_batch(g.tt, zrow, &tape);
    RowMatrixXd G(static_cast<Eigen::Index>(W), static_cast<Eigen::Index>(T));
    RowMatrixXd unit = RowMatrixXd::Zero(1, static_cast<Eigen::Index>(W));
    for (std::size_t j = 0; j < W; ++j) {
        unit(0, static_cast<Eigen::Index>(j)) = 1.0;
        std::size_t c = 0;
        for (const auto& core : tt_backward(g.tt, tape, unit))
            for (double v : core.values()) G(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c++)) = v;
        unit(0, static_cast<Eigen::Index>(j)) = 0.0;
    }

    RayleighCheck r;
    r.lambda_min_ntk = min_eig(gram(gemm<double>(Jw, G)));
    // G G^T has rank <= T, so a tall G gives exactly 0 without the W x W solve
    r.lambda_min_generator = W > T ? 0.0 : min_eig(gram(G));
    r.lambda_min_weights = min_eig(gram(Jw));
    r.rhs = r.lambda_min_generator * r.lambda_min_weights;
    r.holds = r.lambda_min_ntk >= r.rhs - 1e-8;
    return r;
}

void BoundInputs::validate() const {
    const double all[] = {L_ce, C1, C2, L_sigma, eps_tt, C0, lambda_min, t, B, L_ell, kappa, gamma, N, delta, empirical_risk};
    for (double v : all)
        if (!std::isfinite(v) || v < 0) throw ConfigError("bound constants must be finite and nonnegative");
    if (N < 1) throw ConfigError("N must be >= 1");
    if (!(delta > 0 && delta <= 1)) throw ConfigError("delta must lie in (0, 1]");
}

double approximation_bound(const BoundInputs& i, double M) {
    if (!(M >= 1)) throw ConfigError("approximation bound needs M >= 1");
    return i.L_ce * i.C1 / std::sqrt(M) + 2.0 * i.C2 * i.L_ce * i.L_sigma * i.eps_tt;
}

double optimization_bound(double C0, double lambda_min, double t) {
    if (!(C0 >= 0)) throw ConfigError("optimization bound needs C0 >= 0");
    return C0 * std::exp(-lambda_min * t);
}

double generalization_bound(const BoundInputs& i) {
    i.validate();
    return i.empirical_risk + 2.0 * i.B * i.L_ell * i.kappa / std::sqrt(i.N) +
           i.gamma * std::sqrt(std::log(1.0 / i.delta) / (2.0 * i.N));
}

double rademacher_bound(double B, double kappa, double N) {
    if (!(N >= 1)) throw ConfigError("rademacher bound needs N >= 1");
    return B * kappa / std::sqrt(N);
}

} // namespace ttguide

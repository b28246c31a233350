#pragma once

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ttguide/linalg.hpp"
#include "ttguide/rng.hpp"
#include "ttguide/tensor.hpp"

namespace ttguide {

/// Mode sizes and bond ranks of a TT-matrix mapping a latent of length prod(in_dims)
/// to an output of length prod(out_dims). Core k has shape [r_{k-1}, n_k, m_k, r_k];
/// latent and output indices are mixed-radix, first digit slowest.
struct TTFormat {
    std::vector<std::size_t> in_dims;
    std::vector<std::size_t> out_dims;
    std::vector<std::size_t> ranks;

    std::size_t order() const { return in_dims.size(); }

    std::size_t in_size() const { return product(in_dims); }
    std::size_t out_size() const { return product(out_dims); }

    Shape core_shape(std::size_t k) const { return Shape{ranks[k], in_dims[k], out_dims[k], ranks[k + 1]}; }

    /// Throws ShapeError naming the first broken rule.
    void validate() const {
        if (in_dims.empty()) throw ShapeError("TT format needs at least one core");
        if (out_dims.size() != in_dims.size())
            throw ShapeError("TT format has " + std::to_string(in_dims.size()) + " input dims but " +
                             std::to_string(out_dims.size()) + " output dims");
        if (ranks.size() != in_dims.size() + 1)
            throw ShapeError("TT format with K=" + std::to_string(in_dims.size()) + " needs K+1 ranks, got " +
                             std::to_string(ranks.size()));
        if (ranks.front() != 1 || ranks.back() != 1) throw ShapeError("TT boundary ranks must be r_0 = r_K = 1");
        for (auto v : {&in_dims, &out_dims, &ranks})
            for (std::size_t d : *v)
                if (d == 0) throw ShapeError("TT dims and ranks must be >= 1");
    }

    bool operator==(const TTFormat&) const = default;

    std::string to_string() const {
        std::ostringstream os;
        auto join = [&](const std::vector<std::size_t>& v, const char* sep) {
            for (std::size_t i = 0; i < v.size(); ++i) os << (i ? sep : "") << v[i];
        };
        os << "in ";
        join(in_dims, "x");
        os << ", out ";
        join(out_dims, "x");
        os << ", ranks [";
        join(ranks, ",");
        os << ']';
        return os.str();
    }

    static std::size_t product(const std::vector<std::size_t>& v) {
        std::size_t p = 1;
        for (std::size_t d : v) p *= d;
        return p;
    }
};

/// Sum over cores of r_{k-1} n_k m_k r_k.
inline std::size_t tt_param_count(const TTFormat& f) {
    f.validate();
    std::size_t n = 0;
    for (std::size_t k = 0; k < f.order(); ++k) n += f.ranks[k] * f.in_dims[k] * f.out_dims[k] * f.ranks[k + 1];
    return n;
}

struct FormatCheck {
    bool ok = true;
    std::string violation;  ///< empty when ok
};

/// Checks that a TT format can generate the concatenated [W1 (D x M), W2 (M x Q)]
/// vector from a latent of length latent_len. Violations are returned, not thrown.
inline FormatCheck validate_adapter_format(const TTFormat& f, std::size_t D, std::size_t Q, std::size_t M,
                                           std::size_t latent_len) {
    try {
        f.validate();
    } catch (const ShapeError& e) {
        return {false, e.what()};
    }
    const std::size_t want_out = D * M + M * Q;
    if (f.out_size() != want_out) {
        std::ostringstream os;
        os << "prod(out_dims) = " << f.out_size() << " but D*M + M*Q = " << D << "*" << M << " + " << M << "*" << Q
           << " = " << want_out;
        return {false, os.str()};
    }
    if (f.in_size() != latent_len) {
        std::ostringstream os;
        os << "prod(in_dims) = " << f.in_size() << " but latent length = " << latent_len;
        return {false, os.str()};
    }
    return {};
}

template <typename Scalar>
class TTMatrix {
public:
    TTMatrix() = default;

    TTMatrix(TTFormat format, std::vector<Tensor<Scalar>> cores) : format_(std::move(format)), cores_(std::move(cores)) {
        format_.validate();
        if (cores_.size() != format_.order())
            throw ShapeError("TT has " + std::to_string(format_.order()) + " cores in its format but " +
                             std::to_string(cores_.size()) + " were given");
        for (std::size_t k = 0; k < cores_.size(); ++k)
            if (!(cores_[k].shape() == format_.core_shape(k)))
                throw ShapeError("TT core " + std::to_string(k) + " has shape " + cores_[k].shape().to_string() +
                                 ", format expects " + format_.core_shape(k).to_string());
    }

    const TTFormat& format() const { return format_; }
    std::size_t order() const { return cores_.size(); }
    const std::vector<Tensor<Scalar>>& cores() const { return cores_; }
    const Tensor<Scalar>& core(std::size_t k) const { return cores_[k]; }
    Tensor<Scalar>& mutable_core(std::size_t k) { return cores_[k]; }

    /// Core k viewed as a [r_{k-1} n_k] x [m_k r_k] matrix.
    Eigen::Map<const RowMatrix<Scalar>> core_matrix(std::size_t k) const {
        return {cores_[k].data(), static_cast<Eigen::Index>(format_.ranks[k] * format_.in_dims[k]),
                static_cast<Eigen::Index>(format_.out_dims[k] * format_.ranks[k + 1])};
    }

    bool operator==(const TTMatrix&) const = default;

private:
    TTFormat format_;
    std::vector<Tensor<Scalar>> cores_;
};

/// Xavier-uniform cores with fan_in = r_{k-1} n_k and fan_out = m_k r_k.
/// Core k draws from derive_seed(seed, k).
template <typename Scalar = double>
TTMatrix<Scalar> tt_init(const TTFormat& f, std::uint64_t seed) {
    f.validate();
    std::vector<Tensor<Scalar>> cores;
    for (std::size_t k = 0; k < f.order(); ++k)
        cores.push_back(init_xavier_uniform<Scalar>(f.core_shape(k), f.ranks[k] * f.in_dims[k],
                                                    f.out_dims[k] * f.ranks[k + 1], derive_seed(seed, k)));
    return TTMatrix<Scalar>(f, std::move(cores));
}

/// Intermediates of a batched left-to-right contraction, kept for the reverse pass.
///
/// Stage k holds S_k[b][j_1..j_k][i_{k+1}..i_K][r_k] (row-major). `gathered[k]` is the
/// [B * prod(m_<k) * prod(n_>k)] x [r_{k-1} n_k] operand multiplied against core k.
template <typename Scalar>
struct TTChainTape {
    std::size_t batch = 0;
    std::vector<RowMatrix<Scalar>> gathered;
};

namespace detail {

inline std::size_t prod_range(const std::vector<std::size_t>& v, std::size_t lo, std::size_t hi) {
    std::size_t p = 1;
    for (std::size_t i = lo; i < hi; ++i) p *= v[i];
    return p;
}

} // namespace detail

/// Applies the TT-matrix to each row of `z` ([B x prod(n)]) giving [B x prod(m)].
/// y[b, j] = sum_i z[b, i] G_1[:, i_1, j_1, :] ... G_K[:, i_K, j_K, :].
template <typename Scalar, typename Derived>
RowMatrix<Scalar> tt_apply_batch(const TTMatrix<Scalar>& tt, const Eigen::MatrixBase<Derived>& z,
                                 TTChainTape<Scalar>* tape = nullptr) {
    const TTFormat& f = tt.format();
    const std::size_t K = f.order();
    const std::size_t B = static_cast<std::size_t>(z.rows());
    if (static_cast<std::size_t>(z.cols()) != f.in_size())
        throw ShapeError("latent length " + std::to_string(z.cols()) + " does not match prod(in_dims) = " +
                         std::to_string(f.in_size()));

    // S_0[b][s][a] with s over all input digits, a over r_0 = 1.
    std::vector<Scalar> state(z.size());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < f.in_size(); ++i) state[b * f.in_size() + i] = z(b, i);

    if (tape) {
        tape->batch = B;
        tape->gathered.clear();
    }

    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t rp = f.ranks[k], nk = f.in_dims[k], mk = f.out_dims[k], rk = f.ranks[k + 1];
        const std::size_t jp = detail::prod_range(f.out_dims, 0, k);
        const std::size_t sp = detail::prod_range(f.in_dims, k + 1, K);
        const std::size_t rows = B * jp * sp;

        RowMatrix<Scalar> gathered(rows, rp * nk);
        for (std::size_t bj = 0; bj < B * jp; ++bj)
            for (std::size_t ik = 0; ik < nk; ++ik)
                for (std::size_t s = 0; s < sp; ++s)
                    for (std::size_t a = 0; a < rp; ++a)
                        gathered(bj * sp + s, a * nk + ik) = state[((bj * nk + ik) * sp + s) * rp + a];

        const RowMatrix<Scalar> w = gemm<Scalar>(gathered, tt.core_matrix(k));

        std::vector<Scalar> next(B * jp * mk * sp * rk);
        for (std::size_t bj = 0; bj < B * jp; ++bj)
            for (std::size_t s = 0; s < sp; ++s)
                for (std::size_t jk = 0; jk < mk; ++jk)
                    for (std::size_t c = 0; c < rk; ++c)
                        next[(((bj * mk + jk) * sp) + s) * rk + c] = w(bj * sp + s, jk * rk + c);
        state = std::move(next);
        if (tape) tape->gathered.push_back(std::move(gathered));
    }

    RowMatrix<Scalar> y(B, f.out_size());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < f.out_size(); ++j) y(b, j) = state[b * f.out_size() + j];
    return y;
}

/// Reverse pass of tt_apply_batch: given dL/dy ([B x prod(m)]) returns dL/dG_k for every core.
template <typename Scalar, typename Derived>
std::vector<Tensor<Scalar>> tt_backward(const TTMatrix<Scalar>& tt, const TTChainTape<Scalar>& tape,
                                        const Eigen::MatrixBase<Derived>& dy) {
    const TTFormat& f = tt.format();
    const std::size_t K = f.order();
    const std::size_t B = tape.batch;
    if (tape.gathered.size() != K) throw ShapeError("tt_backward: tape does not belong to this TT");
    if (static_cast<std::size_t>(dy.rows()) != B || static_cast<std::size_t>(dy.cols()) != f.out_size())
        throw ShapeError("tt_backward: upstream gradient has the wrong shape");

    std::vector<Scalar> dstate(B * f.out_size());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < f.out_size(); ++j) dstate[b * f.out_size() + j] = dy(b, j);

    std::vector<Tensor<Scalar>> grads(K);
    for (std::size_t kk = K; kk-- > 0;) {
        const std::size_t rp = f.ranks[kk], nk = f.in_dims[kk], mk = f.out_dims[kk], rk = f.ranks[kk + 1];
        const std::size_t jp = detail::prod_range(f.out_dims, 0, kk);
        const std::size_t sp = detail::prod_range(f.in_dims, kk + 1, K);
        const std::size_t rows = B * jp * sp;

        RowMatrix<Scalar> dw(rows, mk * rk);
        for (std::size_t bj = 0; bj < B * jp; ++bj)
            for (std::size_t s = 0; s < sp; ++s)
                for (std::size_t jk = 0; jk < mk; ++jk)
                    for (std::size_t c = 0; c < rk; ++c)
                        dw(bj * sp + s, jk * rk + c) = dstate[(((bj * mk + jk) * sp) + s) * rk + c];

        const RowMatrix<Scalar>& gathered = tape.gathered[kk];
        const RowMatrix<Scalar> dcore = gemm<Scalar>(gathered.transpose(), dw);
        grads[kk] = Tensor<Scalar>(f.core_shape(kk), std::vector<Scalar>(dcore.data(), dcore.data() + dcore.size()));

        if (kk == 0) break;
        const RowMatrix<Scalar> dg = gemm<Scalar>(dw, tt.core_matrix(kk).transpose());
        std::vector<Scalar> prev(B * jp * nk * sp * rp);
        for (std::size_t bj = 0; bj < B * jp; ++bj)
            for (std::size_t ik = 0; ik < nk; ++ik)
                for (std::size_t s = 0; s < sp; ++s)
                    for (std::size_t a = 0; a < rp; ++a)
                        prev[((bj * nk + ik) * sp + s) * rp + a] = dg(bj * sp + s, a * nk + ik);
        dstate = std::move(prev);
    }
    return grads;
}

/// y = z * W(tt) for a single latent of length prod(n).
template <typename Scalar>
Tensor<Scalar> tt_apply(const TTMatrix<Scalar>& tt, const Tensor<Scalar>& z) {
    if (z.size() != tt.format().in_size())
        throw ShapeError("latent length " + std::to_string(z.size()) + " does not match prod(in_dims) = " +
                         std::to_string(tt.format().in_size()));
    Eigen::Map<const RowMatrix<Scalar>> zrow(z.data(), 1, static_cast<Eigen::Index>(z.size()));
    const RowMatrix<Scalar> y = tt_apply_batch(tt, zrow);
    return Tensor<Scalar>::from_vector(std::vector<Scalar>(y.data(), y.data() + y.size()));
}

inline constexpr std::size_t kDefaultMaterializeCap = std::size_t{1} << 24;

/// Dense [prod(n) x prod(m)] matrix of the TT-matrix, built core by core over
/// (input prefix, output prefix, bond) blocks.
template <typename Scalar>
Tensor<Scalar> tt_materialize(const TTMatrix<Scalar>& tt, std::size_t cap = kDefaultMaterializeCap) {
    const TTFormat& f = tt.format();
    const std::size_t K = f.order();
    const double total = static_cast<double>(f.in_size()) * static_cast<double>(f.out_size());
    if (total > static_cast<double>(cap))
        throw CapError("materializing a " + std::to_string(f.in_size()) + " x " + std::to_string(f.out_size()) +
                       " TT-matrix exceeds the cap of " + std::to_string(cap) + " entries; use tt_apply instead");

    // acc[ip][jp][a]
    std::vector<Scalar> acc{Scalar(1)};
    std::size_t ip = 1, jp = 1;
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t rp = f.ranks[k], nk = f.in_dims[k], mk = f.out_dims[k], rk = f.ranks[k + 1];
        if (static_cast<double>(ip * nk) * static_cast<double>(jp * mk) * static_cast<double>(rk) >
            static_cast<double>(cap))
            throw CapError("TT materialization intermediate exceeds the cap of " + std::to_string(cap) + " entries");
        const Scalar* g = tt.core(k).data();
        std::vector<Scalar> next(ip * nk * jp * mk * rk, Scalar(0));
        for (std::size_t i = 0; i < ip; ++i)
            for (std::size_t j = 0; j < jp; ++j)
                for (std::size_t a = 0; a < rp; ++a) {
                    const Scalar v = acc[(i * jp + j) * rp + a];
                    for (std::size_t ik = 0; ik < nk; ++ik)
                        for (std::size_t jk = 0; jk < mk; ++jk)
                            for (std::size_t c = 0; c < rk; ++c)
                                next[(((i * nk + ik) * jp * mk) + j * mk + jk) * rk + c] +=
                                    v * g[((a * nk + ik) * mk + jk) * rk + c];
                }
        acc = std::move(next);
        ip *= nk;
        jp *= mk;
    }
    return Tensor<Scalar>(Shape{ip, jp}, std::move(acc));
}

/// Sequential-SVD construction of a TT-matrix from a dense [prod(n) x prod(m)] matrix.
///
/// The matrix is first permuted into the interleaved tensor with modes (n_1 m_1)...(n_K m_K).
/// At each step singular values <= tol * ||w||_F are dropped, at most max_ranks[k] are kept
/// (max_ranks holds the K-1 interior ranks, or all K+1; empty means unbounded) and at
/// least one is always kept.
template <typename Scalar>
TTMatrix<Scalar> tt_svd(const Tensor<Scalar>& w, const std::vector<std::size_t>& in_dims,
                        const std::vector<std::size_t>& out_dims, const std::vector<std::size_t>& max_ranks = {},
                        Scalar tol = Scalar(0)) {
    const std::size_t K = in_dims.size();
    if (K == 0 || out_dims.size() != K) throw ShapeError("tt_svd: in_dims and out_dims must have equal nonzero length");
    const std::size_t N = TTFormat::product(in_dims), M = TTFormat::product(out_dims);
    if (w.shape().rank() != 2 || w.rows() != N || w.cols() != M)
        throw ShapeError("tt_svd: matrix of shape " + w.shape().to_string() + " does not factor as " +
                         std::to_string(N) + " x " + std::to_string(M));
    std::vector<std::size_t> cap(K + 1, SIZE_MAX);
    if (max_ranks.size() == K - 1) {
        for (std::size_t k = 1; k < K; ++k) cap[k] = max_ranks[k - 1];
    } else if (max_ranks.size() == K + 1) {
        cap = max_ranks;
    } else if (!max_ranks.empty()) {
        throw ShapeError("tt_svd: max_ranks must hold K-1 or K+1 entries");
    }

    // Interleave: tensor index over (i_1 j_1)(i_2 j_2)... with digit d_k = i_k m_k + j_k.
    std::vector<Scalar> t(N * M);
    std::vector<std::size_t> idig(K), jdig(K);
    for (std::size_t i = 0; i < N; ++i) {
        std::size_t r = i;
        for (std::size_t k = K; k-- > 0;) {
            idig[k] = r % in_dims[k];
            r /= in_dims[k];
        }
        for (std::size_t j = 0; j < M; ++j) {
            std::size_t c = j;
            for (std::size_t k = K; k-- > 0;) {
                jdig[k] = c % out_dims[k];
                c /= out_dims[k];
            }
            std::size_t flat = 0;
            for (std::size_t k = 0; k < K; ++k) flat = flat * (in_dims[k] * out_dims[k]) + idig[k] * out_dims[k] + jdig[k];
            t[flat] = w(i, j);
        }
    }

    Scalar norm = 0;
    for (Scalar x : w.values()) norm += x * x;
    norm = std::sqrt(norm);
    const Scalar threshold = tol * norm;

    TTFormat f{in_dims, out_dims, std::vector<std::size_t>(K + 1, 1)};
    std::vector<Tensor<Scalar>> cores;
    RowMatrix<Scalar> carry = Eigen::Map<const RowMatrix<Scalar>>(t.data(), 1, static_cast<Eigen::Index>(t.size()));
    std::size_t rest = N * M;
    for (std::size_t k = 0; k + 1 < K; ++k) {
        const std::size_t dk = in_dims[k] * out_dims[k];
        rest /= dk;
        const std::size_t rp = f.ranks[k];
        Eigen::Map<const RowMatrix<Scalar>> unfold(carry.data(), static_cast<Eigen::Index>(rp * dk),
                                                   static_cast<Eigen::Index>(rest));
        const SvdResult<Scalar> svd = jacobi_svd<Scalar>(unfold);
        std::size_t rank = 0;
        while (rank < static_cast<std::size_t>(svd.S.size()) && svd.S(rank) > threshold) ++rank;
        rank = std::max<std::size_t>(1, std::min(rank, cap[k + 1]));
        f.ranks[k + 1] = rank;

        const RowMatrix<Scalar> u = svd.U.leftCols(rank);
        cores.emplace_back(f.core_shape(k), std::vector<Scalar>(u.data(), u.data() + u.size()));
        RowMatrix<Scalar> next = svd.S.head(rank).asDiagonal() * svd.V.leftCols(rank).transpose();
        carry = std::move(next);
    }
    cores.emplace_back(f.core_shape(K - 1), std::vector<Scalar>(carry.data(), carry.data() + carry.size()));
    return TTMatrix<Scalar>(std::move(f), std::move(cores));
}

} // namespace ttguide

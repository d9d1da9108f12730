#pragma once
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "blockg/core.hpp"

namespace blockg {

// Ordered, disjoint index sets covering 0..p-1. Block 0 is the one experiments scale.
struct BlockPartition {
    std::vector<std::vector<int>> blocks;

    int k() const { return static_cast<int>(blocks.size()); }
    int p() const {
        int s = 0;
        for (const auto& b : blocks) s += static_cast<int>(b.size());
        return s;
    }
    std::vector<int> sizes() const {
        std::vector<int> out;
        for (const auto& b : blocks) out.push_back(static_cast<int>(b.size()));
        return out;
    }

    static BlockPartition single(int p) {
        BlockPartition bp;
        bp.blocks.emplace_back(p);
        std::iota(bp.blocks[0].begin(), bp.blocks[0].end(), 0);
        return bp;
    }
    static BlockPartition contiguous(const std::vector<int>& sizes) {
        BlockPartition bp;
        int next = 0;
        for (int s : sizes) {
            std::vector<int> b(s);
            std::iota(b.begin(), b.end(), next);
            next += s;
            bp.blocks.push_back(std::move(b));
        }
        return bp;
    }

    void validate(int p) const {
        if (blocks.empty()) throw DimensionMismatch("partition has no blocks");
        std::vector<int> seen(p, 0);
        for (const auto& b : blocks) {
            if (b.empty()) throw DimensionMismatch("partition has an empty block");
            for (int j : b) {
                if (j < 0 || j >= p) throw DimensionMismatch("partition index out of range");
                if (seen[j]++) throw DimensionMismatch("partition blocks overlap");
            }
        }
        for (int s : seen)
            if (s == 0) throw DimensionMismatch("partition does not cover every column");
    }
};

template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> gather_columns(
    const Eigen::MatrixBase<Derived>& X, const std::vector<int>& cols) {
    Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> out(X.rows(), cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(j) = X.col(cols[j]);
    return out;
}

template <class Derived>
typename Derived::Scalar singular_value_ratio(const Eigen::MatrixBase<Derived>& X) {
    using S = typename Derived::Scalar;
    if (X.cols() == 0) return S(1);
    Eigen::JacobiSVD<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>> svd(X.eval());
    const auto& sv = svd.singularValues();
    if (sv(0) == S(0)) return S(0);
    return sv(sv.size() - 1) / sv(0);
}

template <class Scalar>
struct CenteredDesignT {
    using VectorS = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using MatrixS = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    VectorS y;
    MatrixS X;
    BlockPartition partition;
    VectorS x_mean;        // removed column means, for prediction on the raw scale
    Scalar y_mean{0};
    std::vector<std::string> names;

    int n() const { return static_cast<int>(X.rows()); }
    int p() const { return static_cast<int>(X.cols()); }
    MatrixS block(int i) const { return gather_columns(X, partition.blocks[i]); }
};

template <class Scalar>
struct FitSummaryT {
    using VectorS = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    int n{0};
    int p{0};
    std::vector<int> p_blocks;
    BlockPartition partition;
    Scalar alpha_hat{0};
    VectorS beta_hat_ls;
    VectorS fitted;          // X beta_hat on the centered scale
    Scalar sigma2_hat{0};
    Scalar rss{0};           // (n-p-1) sigma2_hat
    Scalar tss{0};           // ||X beta_hat||^2 + rss
    Scalar r2{0};
    Scalar one_minus_r2{1};  // rss / tss, kept separately so R^2 near 1 keeps full precision
    VectorS ess_blocks;      // y' P_{X_i} y
    VectorS r2_blocks;
    bool block_orthogonal{true};

    int k() const { return static_cast<int>(p_blocks.size()); }
};

using CenteredDesign = CenteredDesignT<double>;
using FitSummary = FitSummaryT<double>;

inline constexpr double kRankTolerance = 1e-10;
inline constexpr double kOrthogonalityTolerance = 1e-8;
// Residual norms below this fraction of ||y|| are indistinguishable from an exact fit.
inline constexpr double kExactFitResidual = 1e-13;

template <class Scalar>
CenteredDesignT<Scalar> center_design(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& X_raw,
                                      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& y_raw,
                                      const BlockPartition& partition) {
    using std::abs;
    const Eigen::Index n = X_raw.rows(), p = X_raw.cols();
    if (y_raw.size() != n) throw DimensionMismatch("y and X have different row counts");
    if (n <= p) throw DimensionMismatch("need n > p");
    partition.validate(static_cast<int>(p));

    CenteredDesignT<Scalar> d;
    d.partition = partition;
    d.X = X_raw;
    d.x_mean = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(p);
    // Columns that are already centered are left bit-for-bit untouched.
    for (Eigen::Index j = 0; j < p; ++j) {
        const Scalar mean = X_raw.col(j).mean();
        const Scalar scale = X_raw.col(j).cwiseAbs().maxCoeff();
        if (abs(mean) > Scalar(1e-14) * scale) {
            d.X.col(j).array() -= mean;
            d.x_mean(j) = mean;
        }
    }
    d.y = y_raw;
    const Scalar ym = y_raw.mean();
    if (abs(ym) > Scalar(1e-14) * y_raw.cwiseAbs().maxCoeff()) {
        d.y.array() -= ym;
        d.y_mean = ym;
    }
    if (p > 0 && singular_value_ratio(d.X) < Scalar(kRankTolerance))
        throw RankDeficient("centered design is numerically rank deficient");
    return d;
}

template <class Scalar>
bool check_block_orthogonality(const CenteredDesignT<Scalar>& d, double tol = kOrthogonalityTolerance) {
    const int k = d.partition.k();
    if (k <= 1) return true;
    Scalar scale = 0;
    for (Eigen::Index j = 0; j < d.X.cols(); ++j) scale = std::max(scale, Scalar(d.X.col(j).squaredNorm()));
    for (int i = 0; i < k; ++i) {
        const auto Xi = d.block(i);
        for (int j = i + 1; j < k; ++j) {
            const Scalar cross = (Xi.transpose() * d.block(j)).cwiseAbs().maxCoeff();
            if (cross > Scalar(tol) * scale) return false;
        }
    }
    return true;
}

// y' P_A y through an orthogonal factorization of A.
template <class Scalar>
Scalar projected_norm2(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& A,
                       const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& y) {
    Eigen::ColPivHouseholderQR<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> qr(A);
    return (A * qr.solve(y)).squaredNorm();
}

template <class Scalar>
FitSummaryT<Scalar> fit_least_squares(const CenteredDesignT<Scalar>& d) {
    using VectorS = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    FitSummaryT<Scalar> f;
    f.n = d.n();
    f.p = d.p();
    f.partition = d.partition;
    f.p_blocks = d.partition.sizes();
    f.alpha_hat = d.y_mean;

    if (f.p > 0) {
        if (singular_value_ratio(d.X) < Scalar(kRankTolerance))
            throw RankDeficient("centered design is numerically rank deficient");
        Eigen::ColPivHouseholderQR<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> qr(d.X);
        f.beta_hat_ls = qr.solve(d.y);
        f.fitted = d.X * f.beta_hat_ls;
    } else {
        f.beta_hat_ls = VectorS::Zero(0);
        f.fitted = VectorS::Zero(f.n);
    }
    const Scalar ess = f.fitted.squaredNorm();
    Scalar rss = (d.y - f.fitted).squaredNorm();
    const Scalar yy = d.y.squaredNorm();
    if (rss <= Scalar(kExactFitResidual * kExactFitResidual) * yy) rss = 0;
    f.rss = rss;
    f.tss = ess + rss;
    f.sigma2_hat = (f.n - f.p - 1 > 0) ? rss / Scalar(f.n - f.p - 1) : Scalar(0);
    if (f.tss > 0) {
        f.r2 = ess / f.tss;
        f.one_minus_r2 = rss / f.tss;
    } else {
        f.r2 = 0;
        f.one_minus_r2 = 1;
    }
    const int k = d.partition.k();
    f.ess_blocks = VectorS::Zero(k);
    f.r2_blocks = VectorS::Zero(k);
    for (int i = 0; i < k; ++i) {
        f.ess_blocks(i) = projected_norm2<Scalar>(d.block(i), d.y);
        f.r2_blocks(i) = f.tss > 0 ? f.ess_blocks(i) / f.tss : Scalar(0);
    }
    f.block_orthogonal = check_block_orthogonality(d);
    return f;
}

// Summary built from sufficient statistics alone (no design); one_minus_r2 is passed
// separately so that values like 1 - 1e-12 are not rounded away.
inline FitSummary summary_from_r2(int n, const std::vector<int>& p_blocks, const Vector& r2_blocks,
                                  double one_minus_r2, double tss = 1.0) {
    if (static_cast<Eigen::Index>(p_blocks.size()) != r2_blocks.size())
        throw DimensionMismatch("one R^2 per block required");
    FitSummary f;
    f.n = n;
    f.p_blocks = p_blocks;
    f.partition = BlockPartition::contiguous(p_blocks);
    f.p = f.partition.p();
    f.tss = tss;
    f.r2_blocks = r2_blocks;
    f.ess_blocks = r2_blocks * tss;
    f.one_minus_r2 = one_minus_r2;
    f.r2 = r2_blocks.sum();
    f.rss = one_minus_r2 * tss;
    f.sigma2_hat = n - f.p - 1 > 0 ? f.rss / (n - f.p - 1) : 0.0;
    f.beta_hat_ls = Vector::Zero(f.p);
    f.block_orthogonal = true;
    return f;
}

// Restriction of a block-orthogonal fit to a subset of its blocks; no refitting needed.
inline FitSummary restrict_blocks(const FitSummary& full, const std::vector<int>& keep) {
    if (!full.block_orthogonal) throw NotBlockOrthogonal("restricting blocks needs an orthogonal design");
    FitSummary f;
    f.n = full.n;
    f.alpha_hat = full.alpha_hat;
    f.tss = full.tss;
    f.block_orthogonal = true;
    f.ess_blocks = Vector::Zero(keep.size());
    f.r2_blocks = Vector::Zero(keep.size());
    double dropped = 0;
    std::vector<bool> kept(full.k(), false);
    int next = 0;
    std::vector<double> beta;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        const int b = keep[i];
        kept[b] = true;
        f.p_blocks.push_back(full.p_blocks[b]);
        f.ess_blocks(i) = full.ess_blocks(b);
        f.r2_blocks(i) = full.r2_blocks(b);
        std::vector<int> cols;
        for (int j : full.partition.blocks[b]) {
            cols.push_back(next++);
            beta.push_back(full.beta_hat_ls.size() ? full.beta_hat_ls(j) : 0.0);
        }
        f.partition.blocks.push_back(cols);
    }
    for (int b = 0; b < full.k(); ++b)
        if (!kept[b]) dropped += full.ess_blocks(b);
    f.p = next;
    f.beta_hat_ls = Eigen::Map<Vector>(beta.data(), beta.size());
    f.rss = full.rss + dropped;
    // Block ess values can sum past ||fitted||^2 by rounding; keep 1 - R^2 inside [0, 1].
    f.one_minus_r2 = f.tss > 0 ? std::min(1.0, f.rss / f.tss) : 1.0;
    f.r2 = f.tss > 0 ? std::min(1.0, f.ess_blocks.sum() / f.tss) : 0.0;
    f.sigma2_hat = f.n - f.p - 1 > 0 ? f.rss / (f.n - f.p - 1) : 0.0;
    return f;
}

template <class Scalar>
struct OrthogonalizedT {
    CenteredDesignT<Scalar> design;
    // X = Q T with T block upper-triangular and identity diagonal blocks; kappa = T beta.
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> T;

    // Coordinates of a raw predictor row in the orthogonalized design.
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> map_point(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x) const {
        return T.transpose().fullPivLu().solve(x);
    }
};
using Orthogonalized = OrthogonalizedT<double>;

template <class Scalar>
OrthogonalizedT<Scalar> block_orthogonalize(const CenteredDesignT<Scalar>& d) {
    using MatrixS = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const int k = d.partition.k();
    const Eigen::Index n = d.n(), p = d.p();
    OrthogonalizedT<Scalar> out;
    out.design = d;
    out.T = MatrixS::Identity(p, p);

    std::vector<MatrixS> Q(k);
    for (int i = 0; i < k; ++i) {
        const MatrixS Xi = d.block(i);
        MatrixS Qi = Xi;
        if (i > 0) {
            MatrixS prev(n, 0);
            for (int j = 0; j < i; ++j) {
                prev.conservativeResize(n, prev.cols() + Q[j].cols());
                prev.rightCols(Q[j].cols()) = Q[j];
            }
            Eigen::ColPivHouseholderQR<MatrixS> qr(prev);
            // Two passes keep the residual orthogonal to working precision.
            for (int pass = 0; pass < 2; ++pass) Qi -= prev * qr.solve(Qi);
            if (singular_value_ratio(Qi) < Scalar(kRankTolerance) ||
                Qi.norm() < Scalar(kRankTolerance) * Xi.norm())
                throw RankDeficient("block " + std::to_string(i) + " is collinear with earlier blocks");
            for (int j = 0; j < i; ++j) {
                Eigen::ColPivHouseholderQR<MatrixS> qj(Q[j]);
                const MatrixS Tji = qj.solve(Xi);
                const auto& rows = d.partition.blocks[j];
                const auto& cols = d.partition.blocks[i];
                for (std::size_t r = 0; r < rows.size(); ++r)
                    for (std::size_t c = 0; c < cols.size(); ++c) out.T(rows[r], cols[c]) = Tji(r, c);
            }
        }
        Q[i] = Qi;
        const auto& cols = d.partition.blocks[i];
        for (std::size_t c = 0; c < cols.size(); ++c) out.design.X.col(cols[c]) = Qi.col(c);
    }
    out.design.x_mean = out.T.transpose().fullPivLu().solve(d.x_mean);
    return out;
}

}  // namespace blockg

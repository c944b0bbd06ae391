#ifndef MRF_RIDGE_WLS_HPP
#define MRF_RIDGE_WLS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrf/matrix.hpp"

namespace mrf {

constexpr double kInfeasible = std::numeric_limits<double>::infinity();

/// Thrown when a weighted normal-equations system is rank deficient and no
/// ridge penalty is available to stabilize it.
class rank_deficiency_error : public std::runtime_error {
public:
    explicit rank_deficiency_error(const std::string& what) : std::runtime_error(what) {}
};

/// Ridge-penalized weighted least squares specification.
///
/// The estimator solves
///   (X'WX + lambda * D^2) beta = X'Wy + lambda * D^2 * prior_mean
/// where D = diag(column_scales) when `standardize` is set (algebraically the
/// plain ridge problem on scale-standardized columns, with coefficients mapped
/// back to the original scale) and D = I otherwise. An empty prior means zero.
struct RidgeSpec {
    double lambda = 0.0;
    std::vector<double> prior_mean;     // size K or empty (= zeros)
    bool standardize = false;
    std::vector<double> column_scales;  // size K when standardize; empty = compute from X
};

struct RidgeFit {
    std::vector<double> beta;
    double weighted_sse = 0.0;  // sum_t w_t (y_t - X_t beta)^2, penalty excluded
};

namespace detail {

// LDLT factorization of a symmetric matrix stored densely (row major, K*K).
// Returns false when a pivot is non-finite.
inline bool ldlt_factor(std::vector<double>& a, std::vector<double>& d, int K) {
    d.assign(K, 0.0);
    for (int j = 0; j < K; ++j) {
        double dj = a[j * K + j];
        for (int k = 0; k < j; ++k) dj -= a[j * K + k] * a[j * K + k] * d[k];
        d[j] = dj;
        if (!std::isfinite(dj)) return false;
        for (int i = j + 1; i < K; ++i) {
            double v = a[i * K + j];
            for (int k = 0; k < j; ++k) v -= a[i * K + k] * a[j * K + k] * d[k];
            a[i * K + j] = (dj != 0.0) ? v / dj : 0.0;
        }
    }
    return true;
}

inline void ldlt_solve(const std::vector<double>& a, const std::vector<double>& d, int K,
                       std::vector<double>& x) {
    for (int i = 0; i < K; ++i)
        for (int k = 0; k < i; ++k) x[i] -= a[i * K + k] * x[k];
    for (int i = 0; i < K; ++i) x[i] /= d[i];
    for (int i = K - 1; i >= 0; --i)
        for (int k = i + 1; k < K; ++k) x[i] -= a[k * K + i] * x[k];
}

}  // namespace detail

/// Column scales: positive standard deviation of each column, 1 for (near-)
/// constant columns so they pass through unscaled.
inline std::vector<double> column_scales_of(const Matrix& X) {
    std::vector<double> s(X.cols(), 1.0);
    for (int c = 0; c < X.cols(); ++c) {
        double m = 0.0;
        for (int r = 0; r < X.rows(); ++r) m += X(r, c);
        m /= std::max(1, X.rows());
        double v = 0.0;
        for (int r = 0; r < X.rows(); ++r) v += (X(r, c) - m) * (X(r, c) - m);
        v /= std::max(1, X.rows());
        const double sd = std::sqrt(v);
        if (sd > 1e-12) s[c] = sd;
    }
    return s;
}

/// Closed-form ridge-WLS over the rows listed in `rows` (weights aligned with
/// `rows`). Throws rank_deficiency_error when lambda = 0 and the system is
/// singular to working precision.
inline RidgeFit ridge_wls_solve_rows(const Matrix& X, const std::vector<double>& y,
                                     const std::vector<int>& rows, const std::vector<double>& w,
                                     const RidgeSpec& spec) {
    const int K = X.cols();
    const int n = static_cast<int>(rows.size());
    if (n < 1) throw std::invalid_argument("ridge_wls_solve: need at least one observation");
    if (K < 1) throw std::invalid_argument("ridge_wls_solve: need at least one regressor");
    if (static_cast<int>(w.size()) != n) throw std::invalid_argument("ridge_wls_solve: weight length mismatch");
    if (spec.lambda < 0.0) throw std::invalid_argument("ridge_wls_solve: lambda must be non-negative");
    if (!spec.prior_mean.empty() && static_cast<int>(spec.prior_mean.size()) != K)
        throw std::invalid_argument("ridge_wls_solve: prior_mean length mismatch");

    bool any_pos = false;
    for (double wi : w) {
        if (wi < 0.0) throw std::invalid_argument("ridge_wls_solve: negative weight");
        if (wi > 0.0) any_pos = true;
    }
    if (!any_pos) throw std::invalid_argument("ridge_wls_solve: all weights are zero");

    // Normal equations accumulated in row order.
    std::vector<double> a(static_cast<std::size_t>(K) * K, 0.0);
    std::vector<double> b(K, 0.0);
    for (int i = 0; i < n; ++i) {
        const double wi = w[i];
        if (wi == 0.0) continue;
        const double* xr = X.row_ptr(rows[i]);
        for (int c = 0; c < K; ++c) {
            const double wx = wi * xr[c];
            b[c] += wx * y[rows[i]];
            for (int c2 = c; c2 < K; ++c2) a[c * K + c2] += wx * xr[c2];
        }
    }
    for (int c = 0; c < K; ++c)
        for (int c2 = 0; c2 < c; ++c2) a[c * K + c2] = a[c2 * K + c];

    std::vector<double> penalty(K, 0.0);
    if (spec.lambda > 0.0) {
        std::vector<double> scales;
        if (spec.standardize) {
            scales = spec.column_scales.empty() ? column_scales_of(X) : spec.column_scales;
            if (static_cast<int>(scales.size()) != K)
                throw std::invalid_argument("ridge_wls_solve: column_scales length mismatch");
        }
        for (int c = 0; c < K; ++c) {
            const double s = spec.standardize ? scales[c] : 1.0;
            penalty[c] = spec.lambda * s * s;
        }
    }

    double trace = 0.0;
    for (int c = 0; c < K; ++c) trace += a[c * K + c];

    auto assemble = [&](double jitter) {
        std::vector<double> m = a;
        for (int c = 0; c < K; ++c) m[c * K + c] += penalty[c] + jitter;
        return m;
    };

    std::vector<double> rhs(K, 0.0);
    for (int c = 0; c < K; ++c) {
        rhs[c] = b[c];
        if (penalty[c] > 0.0 && !spec.prior_mean.empty()) rhs[c] += penalty[c] * spec.prior_mean[c];
    }

    std::vector<double> fac = assemble(0.0);
    std::vector<double> d;
    bool ok = detail::ldlt_factor(fac, d, K);
    double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
    if (ok) {
        for (double di : d) {
            dmax = std::max(dmax, std::abs(di));
            dmin = std::min(dmin, di);
        }
    }
    const bool hard_singular = !ok || !(dmax > 0.0) || dmin <= 1e-12 * dmax;
    const bool near_singular = ok && !hard_singular && dmin <= 1e-8 * dmax;
    if (hard_singular) {
        if (spec.lambda == 0.0)
            throw rank_deficiency_error(
                "ridge_wls_solve: singular normal equations with lambda = 0; "
                "raise lambda or the minimum leaf fraction (MLF)");
        // lambda > 0 yet numerically degenerate: fall through to jitter.
    }
    if (hard_singular || near_singular) {
        const double jitter = 1e-8 * (trace / K + 1.0);
        fac = assemble(jitter);
        if (!detail::ldlt_factor(fac, d, K))
            throw rank_deficiency_error("ridge_wls_solve: system not factorizable");
        dmax = 0.0;
        dmin = std::numeric_limits<double>::infinity();
        for (double di : d) {
            dmax = std::max(dmax, std::abs(di));
            dmin = std::min(dmin, di);
        }
        if (!(dmax > 0.0) || dmin <= 0.0)
            throw rank_deficiency_error(
                "ridge_wls_solve: singular system; raise lambda or the minimum leaf fraction (MLF)");
    }

    std::vector<double> beta = rhs;
    detail::ldlt_solve(fac, d, K, beta);
    for (double bc : beta)
        if (!std::isfinite(bc)) throw rank_deficiency_error("ridge_wls_solve: non-finite solution");

    double sse = 0.0;
    for (int i = 0; i < n; ++i) {
        const double wi = w[i];
        if (wi == 0.0) continue;
        const double* xr = X.row_ptr(rows[i]);
        double r = y[rows[i]];
        for (int c = 0; c < K; ++c) r -= xr[c] * beta[c];
        sse += wi * r * r;
    }
    return RidgeFit{std::move(beta), sse};
}

/// Convenience overload over all rows of X.
inline RidgeFit ridge_wls_solve(const Matrix& X, const std::vector<double>& y,
                                const std::vector<double>& w, const RidgeSpec& spec) {
    std::vector<int> rows(X.rows());
    for (int i = 0; i < X.rows(); ++i) rows[i] = i;
    return ridge_wls_solve_rows(X, y, rows, w, spec);
}

/// Symmetric 5-step Olympic-podium weights around a leaf's time indices:
/// 1 on the leaf, zeta one step away, zeta^2 two steps away, maximum rule on
/// overlaps, zero elsewhere. Indices are 0-based; steps outside [0, T) clip.
struct PodiumWeights {
    std::vector<double> weights;  // length T
    double zeta = 0.0;
};

inline PodiumWeights podium_weights(const std::vector<int>& leaf, double zeta, int T) {
    if (leaf.empty()) throw std::invalid_argument("podium_weights: empty leaf");
    if (!(zeta >= 0.0 && zeta < 1.0)) throw std::invalid_argument("podium_weights: need 0 <= zeta < 1");
    PodiumWeights pw;
    pw.zeta = zeta;
    pw.weights.assign(T, 0.0);
    const double z2 = zeta * zeta;
    for (int t : leaf) {
        if (t < 0 || t >= T) throw std::invalid_argument("podium_weights: leaf index out of range");
        for (int s = -2; s <= 2; ++s) {
            const int u = t + s;
            if (u < 0 || u >= T) continue;
            const double w = (s == 0) ? 1.0 : (s == -1 || s == 1) ? zeta : z2;
            if (w > pw.weights[u]) pw.weights[u] = w;
        }
    }
    return pw;
}

/// Rows participating in the RW-expanded leaf regression: the leaf plus its
/// one- and two-step time neighbors (when zeta > 0), filtered to usable rows.
/// Weights are returned aligned with the row list.
inline void podium_rows(const std::vector<int>& leaf, double zeta, int T,
                        const std::vector<char>& usable, std::vector<int>& rows_out,
                        std::vector<double>& w_out) {
    rows_out.clear();
    w_out.clear();
    if (zeta == 0.0) {
        rows_out = leaf;
        std::sort(rows_out.begin(), rows_out.end());
        w_out.assign(rows_out.size(), 1.0);
        return;
    }
    const PodiumWeights pw = podium_weights(leaf, zeta, T);
    for (int t = 0; t < T; ++t) {
        if (pw.weights[t] > 0.0 && usable[t]) {
            rows_out.push_back(t);
            w_out.push_back(pw.weights[t]);
        }
    }
}

}  // namespace mrf

#endif  // MRF_RIDGE_WLS_HPP

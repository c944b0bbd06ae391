#ifndef MRF_FOREST_HPP
#define MRF_FOREST_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrf/dataio.hpp"
#include "mrf/matrix.hpp"
#include "mrf/parallel.hpp"
#include "mrf/ridge_wls.hpp"
#include "mrf/rng.hpp"
#include "mrf/tree.hpp"

namespace mrf {

/// Aligned estimation data: target, linear part and state set share the time
/// index. Rows with any non-finite entry are kept for date alignment but
/// excluded from estimation.
struct MrfData {
    std::vector<double> y;
    Matrix X;  // T x K
    std::vector<std::string> x_names;
    Matrix S;  // T x J
    std::vector<std::string> s_names;
    int trend_col = -1;
    std::vector<std::string> dates;  // optional

    int T() const { return static_cast<int>(y.size()); }
    int K() const { return X.cols(); }
    int J() const { return S.cols(); }

    void validate() const {
        if (X.rows() != T() || S.rows() != T())
            throw std::invalid_argument("MrfData: y, X and S must share the time dimension");
        if (static_cast<int>(x_names.size()) != K() || static_cast<int>(s_names.size()) != J())
            throw std::invalid_argument("MrfData: column names out of sync");
    }
};

inline std::vector<char> usable_rows(const MrfData& data) {
    std::vector<char> ok(data.T(), 1);
    for (int t = 0; t < data.T(); ++t) {
        if (!std::isfinite(data.y[t]) || !row_is_finite(data.X, t) || !row_is_finite(data.S, t))
            ok[t] = 0;
    }
    return ok;
}

/// Fixed non-overlapping contiguous blocks covering 0..T-1.
struct BlockPlan {
    int T = 0;
    int block_size = 1;
    int n_blocks() const { return (T + block_size - 1) / block_size; }
    int block_begin(int b) const { return b * block_size; }
    int block_end(int b) const { return std::min(T, (b + 1) * block_size); }
    int block_of(int t) const { return t / block_size; }
};

/// A fitted Macroeconomic Random Forest.
struct MrfForest {
    std::vector<MrfTree> trees;
    std::vector<std::vector<char>> inbag;  // B x T
    HyperParams hp;
    std::vector<std::string> s_names, x_names;
    int T = 0, K = 0, J = 0;
    int trend_col = -1;
    std::vector<double> prior;   // full-sample OLS coefficients (prior means)
    std::vector<double> scales;  // X column scales (standardized penalty)
    std::vector<char> usable;
    int total_solver_fallbacks = 0;

    int B() const { return static_cast<int>(trees.size()); }
};

namespace detail {

inline void verify_schema(const std::vector<std::string>& expected,
                          const std::vector<std::string>& got, const char* what) {
    if (expected == got) return;
    std::string msg = std::string(what) + " schema mismatch;";
    for (const auto& e : expected)
        if (std::find(got.begin(), got.end(), e) == got.end()) msg += " missing '" + e + "'";
    for (const auto& g : got)
        if (std::find(expected.begin(), expected.end(), g) == expected.end())
            msg += " unexpected '" + g + "'";
    if (expected.size() == got.size()) msg += " (column order must match training)";
    throw std::invalid_argument(msg);
}

/// Full-sample OLS prior; falls back to a lightly ridged solve, then zeros,
/// when the design is rank deficient.
inline std::vector<double> full_sample_prior(const MrfData& data, const std::vector<char>& usable) {
    std::vector<int> rows;
    for (int t = 0; t < data.T(); ++t)
        if (usable[t]) rows.push_back(t);
    if (rows.empty()) throw std::invalid_argument("fit_forest: no usable rows after alignment");
    std::vector<double> w(rows.size(), 1.0);
    RidgeSpec ols;
    ols.lambda = 0.0;
    try {
        return ridge_wls_solve_rows(data.X, data.y, rows, w, ols).beta;
    } catch (const rank_deficiency_error&) {
        RidgeSpec soft;
        soft.lambda = 1e-4;
        try {
            return ridge_wls_solve_rows(data.X, data.y, rows, w, soft).beta;
        } catch (const std::exception&) {
            return std::vector<double>(data.K(), 0.0);
        }
    }
}

}  // namespace detail

/// Fits the ensemble. Each tree draws whole blocks without replacement until
/// the subsampling-rate share of the sample is covered (the default), or, in
/// Bayesian block-weight mode, keeps every observation and draws one Exp(1)
/// weight per block instead. Trees use independent RNG streams derived from
/// (seed, tree index), so the fit is identical for any thread count.
inline MrfForest fit_forest(const MrfData& data, const HyperParams& hp) {
    data.validate();
    hp.validate(data.J(), data.K(), data.T());
    const int T = data.T();
    if (T < 2 * hp.block_size)
        throw std::invalid_argument("fit_forest: need T >= 2 * block_size");

    MrfForest forest;
    forest.hp = hp;
    forest.s_names = data.s_names;
    forest.x_names = data.x_names;
    forest.T = T;
    forest.K = data.K();
    forest.J = data.J();
    forest.trend_col = data.trend_col;
    forest.usable = usable_rows(data);

    int n_usable = 0;
    for (char u : forest.usable) n_usable += u;
    const int target = static_cast<int>(std::lround(hp.subsample_rate * T));
    if (!hp.bayes_block_weights && target < hp.min_child(data.K()))
        throw std::invalid_argument(
            "fit_forest: subsample_rate * T is below the leaf floor; raise the rate or lower MLF");
    if (n_usable < std::max(hp.min_child(data.K()), 2))
        throw std::invalid_argument("fit_forest: not enough usable rows to fit");

    forest.prior = detail::full_sample_prior(data, forest.usable);
    forest.scales = hp.standardize ? column_scales_of(data.X) : std::vector<double>();

    const BlockPlan plan{T, hp.block_size};
    const int B = hp.n_trees;
    forest.trees.resize(B);
    forest.inbag.assign(B, std::vector<char>(T, 0));
    std::vector<int> fallbacks(B, 0);

    TreeContext base_ctx;
    base_ctx.S = &data.S;
    base_ctx.X = &data.X;
    base_ctx.y = &data.y;
    base_ctx.usable = forest.usable;
    base_ctx.zeta = hp.zeta;
    base_ctx.trend_col = data.trend_col;
    base_ctx.leaf_spec.lambda = hp.lambda;
    base_ctx.leaf_spec.prior_mean = forest.prior;
    base_ctx.leaf_spec.standardize = hp.standardize;
    base_ctx.leaf_spec.column_scales = forest.scales;

    parallel_for(B, resolve_threads(hp.threads), [&](int b) {
        TreeContext ctx = base_ctx;

        std::vector<char>& bag = forest.inbag[b];
        if (hp.bayes_block_weights) {
            std::fill(bag.begin(), bag.end(), 1);
            auto wrng = make_stream(hp.seed, static_cast<std::uint64_t>(b), stream_tag::weights);
            ctx.row_weights.assign(T, 1.0);
            for (int blk = 0; blk < plan.n_blocks(); ++blk) {
                const double theta = rand_exp(wrng);
                for (int t = plan.block_begin(blk); t < plan.block_end(blk); ++t)
                    ctx.row_weights[t] = theta;
            }
        } else {
            auto brng = make_stream(hp.seed, static_cast<std::uint64_t>(b), stream_tag::bag);
            std::vector<int> order(plan.n_blocks());
            for (int i = 0; i < plan.n_blocks(); ++i) order[i] = i;
            shuffle_in_place(brng, order);
            int covered = 0;
            for (int blk : order) {
                if (covered >= target) break;
                for (int t = plan.block_begin(blk); t < plan.block_end(blk); ++t) bag[t] = 1;
                covered += plan.block_end(blk) - plan.block_begin(blk);
            }
        }

        std::vector<int> sample;
        sample.reserve(T);
        for (int t = 0; t < T; ++t)
            if (bag[t] && forest.usable[t]) sample.push_back(t);

        auto srng = make_stream(hp.seed, static_cast<std::uint64_t>(b), stream_tag::split);
        forest.trees[b] = grow_tree(sample, hp, ctx, srng);
        forest.trees[b].rng_stream_id = static_cast<std::uint64_t>(b);
        fallbacks[b] = forest.trees[b].n_solver_fallbacks;
    });

    for (int b = 0; b < B; ++b) forest.total_solver_fallbacks += fallbacks[b];
    return forest;
}

/// Ensemble prediction: the simple average of the trees' leaf-model
/// predictions.
inline std::vector<double> forest_predict(const MrfForest& forest, const Matrix& S_new,
                                          const std::vector<std::string>& s_names,
                                          const Matrix& X_new,
                                          const std::vector<std::string>& x_names,
                                          int threads = 0) {
    detail::verify_schema(forest.s_names, s_names, "state");
    detail::verify_schema(forest.x_names, x_names, "linear part");
    if (S_new.rows() != X_new.rows())
        throw std::invalid_argument("forest_predict: row count mismatch between S and X");
    const int n = S_new.rows();
    std::vector<double> out(n, 0.0);
    parallel_for(n, resolve_threads(threads), [&](int r) {
        double acc = 0.0;
        for (const auto& tree : forest.trees)
            acc += tree_apply(tree, S_new.row_ptr(r), forest.J, X_new.row_ptr(r), forest.K).prediction;
        out[r] = acc / forest.B();
    });
    return out;
}

/// Generalized time-varying parameters with uncertainty.
struct GtvpResult {
    Matrix mean;                              // T x K
    std::vector<double> quantile_levels;      // e.g. 0.05, 0.16, 0.84, 0.95
    std::vector<Matrix> quantiles;            // one T x K matrix per level
    std::vector<int> n_oob;                   // contributing trees per t
    std::vector<Matrix> draws;                // optional: per t, (n_draws x K)
    bool draws_retained = false;
    std::vector<std::string> coef_names;
    std::vector<std::string> dates;
    std::vector<std::string> warnings;
};

struct GtvpOptions {
    int exclusion_halfwidth = 0;  // trees containing any index in [t-w, t+w] are excluded
    bool out_of_bag = true;       // false: average over all trees (no exclusion)
    std::vector<double> quantile_levels = {0.05, 0.16, 0.84, 0.95};
    bool retain_draws = false;
    int threads = 0;
};

namespace detail {

/// Linear-interpolation empirical quantile (R type 7) of an unsorted copy.
inline double quantile_type7(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const int n = static_cast<int>(v.size());
    if (n == 1) return v[0];
    const double idx = p * (n - 1);
    const int lo = static_cast<int>(std::floor(idx));
    const int hi = std::min(lo + 1, n - 1);
    const double frac = idx - lo;
    return v[lo] + frac * (v[hi] - v[lo]);
}

}  // namespace detail

/// Per-period coefficient paths. In out-of-bag mode the draws for period t
/// come from trees whose subsample excluded every index in [t-w, t+w]; the
/// posterior mean and empirical quantiles are taken across those draws.
/// Bayesian block-weight forests have no out-of-bag observations, so paths
/// always average over all trees there.
inline GtvpResult gtvp_paths(const MrfForest& forest, const MrfData& data,
                             const GtvpOptions& opts = GtvpOptions()) {
    data.validate();
    detail::verify_schema(forest.s_names, data.s_names, "state");
    detail::verify_schema(forest.x_names, data.x_names, "linear part");
    const int T = forest.T;
    const int K = forest.K;
    if (data.T() != T) throw std::invalid_argument("gtvp_paths: data length differs from training");

    const bool oob = opts.out_of_bag && !forest.hp.bayes_block_weights;

    GtvpResult res;
    res.mean = Matrix(T, K, kNaN);
    res.quantile_levels = opts.quantile_levels;
    std::sort(res.quantile_levels.begin(), res.quantile_levels.end());
    res.quantiles.assign(res.quantile_levels.size(), Matrix(T, K, kNaN));
    res.n_oob.assign(T, 0);
    res.coef_names = forest.x_names;
    res.dates = data.dates;
    res.draws_retained = opts.retain_draws;
    if (opts.retain_draws) res.draws.assign(T, Matrix(0, 0));

    if (!res.quantile_levels.empty() && forest.B() < 200)
        res.warnings.push_back("fewer than 200 trees: quantile bands may not have stabilized");

    const int w = opts.exclusion_halfwidth;
    std::vector<char> any_zero(T, 0);

    parallel_for(T, resolve_threads(opts.threads), [&](int t) {
        if (!forest.usable[t]) return;
        std::vector<int> trees;
        trees.reserve(forest.B());
        for (int b = 0; b < forest.B(); ++b) {
            if (oob) {
                bool excluded = true;
                for (int u = std::max(0, t - w); u <= std::min(T - 1, t + w); ++u) {
                    if (forest.inbag[b][u]) {
                        excluded = false;
                        break;
                    }
                }
                if (!excluded) continue;
            }
            trees.push_back(b);
        }
        res.n_oob[t] = static_cast<int>(trees.size());
        if (trees.empty()) {
            any_zero[t] = 1;
            return;
        }

        Matrix draws(static_cast<int>(trees.size()), K);
        for (std::size_t i = 0; i < trees.size(); ++i) {
            const auto& tree = forest.trees[trees[i]];
            const int leaf = tree.leaf_for(data.S.row_ptr(t), forest.J);
            for (int c = 0; c < K; ++c) draws(static_cast<int>(i), c) = tree.nodes[leaf].beta[c];
        }
        for (int c = 0; c < K; ++c) {
            double acc = 0.0;
            for (int i = 0; i < draws.rows(); ++i) acc += draws(i, c);
            res.mean(t, c) = acc / draws.rows();
        }
        for (std::size_t q = 0; q < res.quantile_levels.size(); ++q) {
            for (int c = 0; c < K; ++c)
                res.quantiles[q](t, c) = detail::quantile_type7(draws.col(c), res.quantile_levels[q]);
        }
        if (opts.retain_draws) res.draws[t] = std::move(draws);
    });

    for (int t = 0; t < T; ++t)
        if (any_zero[t])
            res.warnings.push_back("no qualifying out-of-bag trees at index " + std::to_string(t));
    return res;
}

/// Central credible intervals from a GTVP result. Levels resolve to stored
/// quantile pairs, or to exact empirical quantiles when draws were retained.
struct CredibleBands {
    std::vector<double> levels;
    std::vector<Matrix> lower;  // per level, T x K
    std::vector<Matrix> upper;
};

inline CredibleBands credible_bands(const GtvpResult& gtvp,
                                    const std::vector<double>& levels = {0.68, 0.90}) {
    CredibleBands out;
    out.levels = levels;
    const int T = gtvp.mean.rows(), K = gtvp.mean.cols();
    for (double level : levels) {
        if (!(level >= 0.0 && level < 1.0))
            throw std::invalid_argument("credible_bands: level must be in [0, 1)");
        const double lo = (1.0 - level) / 2.0, hi = 1.0 - lo;
        int lo_idx = -1, hi_idx = -1;
        for (std::size_t q = 0; q < gtvp.quantile_levels.size(); ++q) {
            if (std::abs(gtvp.quantile_levels[q] - lo) < 1e-9) lo_idx = static_cast<int>(q);
            if (std::abs(gtvp.quantile_levels[q] - hi) < 1e-9) hi_idx = static_cast<int>(q);
        }
        if (lo_idx >= 0 && hi_idx >= 0) {
            out.lower.push_back(gtvp.quantiles[lo_idx]);
            out.upper.push_back(gtvp.quantiles[hi_idx]);
            continue;
        }
        if (!gtvp.draws_retained)
            throw std::invalid_argument("credible_bands: level " + std::to_string(level) +
                                        " not available from stored quantiles (retain draws to "
                                        "compute arbitrary levels)");
        Matrix lower(T, K, kNaN), upper(T, K, kNaN);
        for (int t = 0; t < T; ++t) {
            const Matrix& d = gtvp.draws[t];
            if (d.rows() == 0) continue;
            for (int c = 0; c < K; ++c) {
                lower(t, c) = detail::quantile_type7(d.col(c), lo);
                upper(t, c) = detail::quantile_type7(d.col(c), hi);
            }
        }
        out.lower.push_back(std::move(lower));
        out.upper.push_back(std::move(upper));
    }
    return out;
}

/// Adaptive-kernel view of the forest: the weight each training period
/// receives when the ensemble predicts at state s0. Nonnegative, sums to one.
inline std::vector<double> kernel_weights(const MrfForest& forest, const std::vector<double>& s0) {
    if (static_cast<int>(s0.size()) != forest.J)
        throw std::invalid_argument("kernel_weights: state row length mismatch");
    std::vector<double> alpha(forest.T, 0.0);
    const double invB = 1.0 / forest.B();
    for (const auto& tree : forest.trees) {
        const int leaf = tree.leaf_for(s0.data(), forest.J);
        const auto& members = tree.nodes[leaf].members;
        if (members.empty()) continue;
        const double wt = invB / static_cast<double>(members.size());
        for (int t : members) alpha[t] += wt;
    }
    return alpha;
}

/// Out-of-sample coefficient projection: beta for a future state row is the
/// average of every tree's routed leaf coefficients (no out-of-bag exclusion
/// exists out-of-sample), and the prediction applies the local linear model.
struct GtvpProjection {
    Matrix beta;  // n x K
    std::vector<double> prediction;
};

inline GtvpProjection project_gtvp(const MrfForest& forest, const Matrix& S_future,
                                   const std::vector<std::string>& s_names, const Matrix& X_future,
                                   const std::vector<std::string>& x_names, int threads = 0) {
    detail::verify_schema(forest.s_names, s_names, "state");
    detail::verify_schema(forest.x_names, x_names, "linear part");
    if (S_future.rows() != X_future.rows())
        throw std::invalid_argument("project_gtvp: row count mismatch between S and X");
    const int n = S_future.rows();
    GtvpProjection out;
    out.beta = Matrix(n, forest.K, 0.0);
    out.prediction.assign(n, 0.0);
    parallel_for(n, resolve_threads(threads), [&](int r) {
        for (const auto& tree : forest.trees) {
            const int leaf = tree.leaf_for(S_future.row_ptr(r), forest.J);
            for (int c = 0; c < forest.K; ++c) out.beta(r, c) += tree.nodes[leaf].beta[c];
        }
        double pred = 0.0;
        for (int c = 0; c < forest.K; ++c) {
            out.beta(r, c) /= forest.B();
            pred += X_future(r, c) * out.beta(r, c);
        }
        out.prediction[r] = pred;
    });
    return out;
}

/// Tidy CSV of GTVP paths: date, coefficient, mean, stored quantiles, n_oob.
inline void write_gtvp_csv(const GtvpResult& gtvp, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_gtvp_csv: cannot open '" + path + "'");
    out << "date,coefficient,mean";
    for (double q : gtvp.quantile_levels) {
        const int pct = static_cast<int>(std::lround(q * 100));
        out << ",q" << (pct < 10 ? "0" : "") << pct;
    }
    out << ",n_oob\n";
    const int T = gtvp.mean.rows(), K = gtvp.mean.cols();
    for (int t = 0; t < T; ++t) {
        const std::string date = t < static_cast<int>(gtvp.dates.size()) ? gtvp.dates[t]
                                                                         : std::to_string(t + 1);
        for (int c = 0; c < K; ++c) {
            out << date << ',' << gtvp.coef_names[c] << ',';
            if (!std::isnan(gtvp.mean(t, c))) out << format_double(gtvp.mean(t, c));
            for (std::size_t q = 0; q < gtvp.quantile_levels.size(); ++q) {
                out << ',';
                if (!std::isnan(gtvp.quantiles[q](t, c))) out << format_double(gtvp.quantiles[q](t, c));
            }
            out << ',' << gtvp.n_oob[t] << '\n';
        }
    }
}

}  // namespace mrf

#endif  // MRF_FOREST_HPP

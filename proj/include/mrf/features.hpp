#ifndef MRF_FEATURES_HPP
#define MRF_FEATURES_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrf/dataio.hpp"
#include "mrf/matrix.hpp"

namespace mrf {

/// Origin tag for a state-matrix column.
enum class StateGroup { own_lag, trend, raw_lag, factor_lag, maf };

inline const char* state_group_name(StateGroup g) {
    switch (g) {
        case StateGroup::own_lag: return "own-lag";
        case StateGroup::trend: return "trend";
        case StateGroup::raw_lag: return "raw-lag";
        case StateGroup::factor_lag: return "factor-lag";
        case StateGroup::maf: return "maf";
    }
    return "?";
}

/// The panel of candidate splitting variables S_t.
struct StateMatrix {
    Matrix values;                    // T x J
    std::vector<std::string> names;   // J labels
    std::vector<StateGroup> groups;   // J tags
    int trend_col = -1;

    int T() const { return values.rows(); }
    int J() const { return values.cols(); }

    void append_column(const std::vector<double>& col, const std::string& name, StateGroup group) {
        Matrix next(values.rows() == 0 ? static_cast<int>(col.size()) : values.rows(), J() + 1);
        for (int r = 0; r < next.rows(); ++r) {
            for (int c = 0; c < J(); ++c) next(r, c) = values(r, c);
            next(r, J()) = col[r];
        }
        values = std::move(next);
        names.push_back(name);
        groups.push_back(group);
        if (group == StateGroup::trend) trend_col = J() - 1;
    }

    void validate() const {
        if (J() < 2) throw std::invalid_argument("StateMatrix: need at least two columns");
        int trends = 0;
        for (auto g : groups)
            if (g == StateGroup::trend) ++trends;
        if (trends != 1) throw std::invalid_argument("StateMatrix: exactly one trend column required");
        for (std::size_t i = 0; i < names.size(); ++i)
            for (std::size_t j = i + 1; j < names.size(); ++j)
                if (names[i] == names[j])
                    throw std::invalid_argument("StateMatrix: duplicate column name '" + names[i] + "'");
    }
};

/// Principal components extracted from the column-standardized (correlation)
/// matrix. Loadings carry a sign convention: each column's largest-magnitude
/// entry is positive.
struct FactorSet {
    Matrix scores;                        // T x k
    Matrix loadings;                      // N x k
    std::vector<double> explained_variance;  // k ratios, non-increasing
};

/// A fitted principal-component map: centering/scaling moments plus loadings,
/// so new rows can be projected onto the training components (out-of-sample
/// factor scores without look-ahead).
struct PcaProjector {
    std::vector<double> means, scales;       // per input column
    Matrix loadings;                         // N x k
    std::vector<double> explained_variance;  // k ratios

    int k() const { return loadings.cols(); }

    std::vector<double> project(const double* row) const {
        std::vector<double> out(loadings.cols(), 0.0);
        for (int c = 0; c < loadings.rows(); ++c) {
            const double z = (row[c] - means[c]) / scales[c];
            for (int i = 0; i < loadings.cols(); ++i) out[i] += z * loadings(c, i);
        }
        return out;
    }
};

namespace detail {

inline PcaProjector fit_pca_impl(const Matrix& X, int k, bool standardize,
                                 const std::vector<std::string>& names,
                                 const std::vector<double>& column_weights) {
    const int T = X.rows(), N = X.cols();
    if (k < 1 || k > std::min(T, N))
        throw std::invalid_argument("pca: k must be in 1..min(T, N)");
    for (int r = 0; r < T; ++r)
        if (!row_is_finite(X, r)) throw std::invalid_argument("pca: input contains non-finite rows");

    PcaProjector pj;
    pj.means.assign(N, 0.0);
    pj.scales.assign(N, 1.0);

    Eigen::MatrixXd Z(T, N);
    for (int c = 0; c < N; ++c) {
        double m = 0.0;
        for (int r = 0; r < T; ++r) m += X(r, c);
        m /= T;
        double v = 0.0;
        for (int r = 0; r < T; ++r) v += (X(r, c) - m) * (X(r, c) - m);
        v /= T;
        const double sd = std::sqrt(v);
        if (standardize && sd <= 1e-12) {
            const std::string label = names.empty() ? ("column " + std::to_string(c)) : ("column '" + names[c] + "'");
            throw std::invalid_argument("pca: zero-variance " + label);
        }
        const double w = column_weights.empty() ? 1.0 : column_weights[c];
        pj.means[c] = m;
        pj.scales[c] = (standardize ? sd : 1.0) / w;
        for (int r = 0; r < T; ++r) Z(r, c) = (X(r, c) - pj.means[c]) / pj.scales[c];
    }

    const Eigen::MatrixXd R = (Z.transpose() * Z) / static_cast<double>(T);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R);
    if (es.info() != Eigen::Success) throw std::runtime_error("pca: eigendecomposition failed");

    const double trace = R.trace();
    pj.loadings = Matrix(N, k);
    pj.explained_variance.resize(k);
    for (int i = 0; i < k; ++i) {
        const int src = N - 1 - i;  // eigenvalues come out ascending
        Eigen::VectorXd v = es.eigenvectors().col(src);
        int arg = 0;
        for (int c = 1; c < N; ++c)
            if (std::abs(v(c)) > std::abs(v(arg))) arg = c;
        if (v(arg) < 0.0) v = -v;
        for (int c = 0; c < N; ++c) pj.loadings(c, i) = v(c);
        pj.explained_variance[i] = std::max(0.0, es.eigenvalues()(src)) / trace;
    }
    return pj;
}

}  // namespace detail

/// Fits the component map on X alone (correlation PCA).
inline PcaProjector fit_pca_projector(const Matrix& X, int k,
                                      const std::vector<std::string>& names = {}) {
    return detail::fit_pca_impl(X, k, /*standardize=*/true, names, {});
}

/// PCA of the sample correlation matrix of X (columns standardized
/// internally). Scores are the projections onto the top-k eigenvectors.
inline FactorSet pca(const Matrix& X, int k, const std::vector<std::string>& names = {}) {
    const PcaProjector pj = fit_pca_projector(X, k, names);
    FactorSet fs;
    fs.loadings = pj.loadings;
    fs.explained_variance = pj.explained_variance;
    fs.scores = Matrix(X.rows(), k);
    for (int r = 0; r < X.rows(); ++r) {
        const auto sc = pj.project(X.row_ptr(r));
        for (int i = 0; i < k; ++i) fs.scores(r, i) = sc[i];
    }
    return fs;
}

/// Moving Average Factors: principal components of the P-lag panel of a
/// single series, compressing its lag polynomial into k weighted averages.
/// Rows whose lag window is incomplete come back as NaN. The optional decay
/// down-weights distant lags (geometric, applied after standardization).
/// When fit_end >= 0 the component map is estimated on rows before fit_end
/// only; later rows are projected (no look-ahead).
inline Matrix compute_mafs(const std::vector<double>& series, int P, int k, bool decay = false,
                           double decay_rate = 0.9, int fit_end = -1) {
    const int T = static_cast<int>(series.size());
    if (P < 1) throw std::invalid_argument("compute_mafs: P must be >= 1");
    if (k < 1 || k > P) throw std::invalid_argument("compute_mafs: need 1 <= k <= P");

    const Matrix lags = build_lag_panel(series, P);
    std::vector<int> valid, fit_rows;
    for (int t = 0; t < T; ++t) {
        if (!row_is_finite(lags, t)) continue;
        valid.push_back(t);
        if (fit_end < 0 || t < fit_end) fit_rows.push_back(t);
    }
    if (static_cast<int>(fit_rows.size()) < P + k)
        throw std::invalid_argument("compute_mafs: need at least P + k complete lag windows");

    Matrix sub(static_cast<int>(fit_rows.size()), P);
    for (int i = 0; i < sub.rows(); ++i)
        for (int c = 0; c < P; ++c) sub(i, c) = lags(fit_rows[i], c);

    std::vector<double> weights;
    if (decay) {
        weights.resize(P);
        for (int c = 0; c < P; ++c) weights[c] = std::pow(decay_rate, c + 1);
    }
    const PcaProjector pj = detail::fit_pca_impl(sub, k, /*standardize=*/true, {}, weights);

    Matrix out(T, k, kNaN);
    for (int t : valid) {
        const auto sc = pj.project(lags.row_ptr(t));
        for (int c = 0; c < k; ++c) out(t, c) = sc[c];
    }
    return out;
}

/// Options controlling the composition of S_t. The defaults mirror the
/// data-rich quarterly setup: 8 own lags, a time trend, 2 lags of every panel
/// variable, 8 lags of 5 cross-sectional factors, and 2 MAFs per variable.
struct StateOptions {
    int own_lags = 8;
    int raw_lags = 2;
    int n_factors = 5;
    int factor_lags = 8;
    int maf_per_var = 2;
    int maf_P = 8;
    bool maf_decay = false;

    /// Own lags and the trend only ("tiny" state set).
    static StateOptions tiny(int own_lags = 8) {
        StateOptions o;
        o.own_lags = own_lags;
        o.raw_lags = 0;
        o.n_factors = 0;
        o.factor_lags = 0;
        o.maf_per_var = 0;
        return o;
    }
};

/// Assembles the state set S_t from the target and a stationarized panel.
/// Column count: own_lags + 1 + raw_lags*N + factor_lags*n_factors +
/// maf_per_var*N, every column named and group-tagged. When fit_end >= 0,
/// factor and MAF maps are estimated on rows before fit_end and projected
/// onto the rest.
inline StateMatrix assemble_state_matrix(const std::vector<double>& y, const SeriesPanel& panel,
                                         const StateOptions& opts = StateOptions(),
                                         int fit_end = -1) {
    const int T = static_cast<int>(y.size());
    if (panel.N() > 0 && panel.T() != T)
        throw std::invalid_argument("assemble_state_matrix: target and panel lengths differ");

    StateMatrix S;
    S.values = Matrix(T, 0);

    if (opts.own_lags > 0) {
        const Matrix own = build_lag_panel(y, opts.own_lags);
        for (int p = 1; p <= opts.own_lags; ++p)
            S.append_column(own.col(p - 1), "y_lag" + std::to_string(p), StateGroup::own_lag);
    }

    {
        std::vector<double> trend(T);
        for (int t = 0; t < T; ++t) trend[t] = static_cast<double>(t + 1);
        S.append_column(trend, "trend", StateGroup::trend);
    }

    if (opts.raw_lags > 0) {
        for (int c = 0; c < panel.N(); ++c) {
            const Matrix lp = build_lag_panel(panel.values.col(c), opts.raw_lags);
            for (int p = 1; p <= opts.raw_lags; ++p)
                S.append_column(lp.col(p - 1), panel.names[c] + "_lag" + std::to_string(p),
                                StateGroup::raw_lag);
        }
    }

    if (opts.n_factors > 0) {
        std::vector<int> complete, fit_rows;
        for (int t = 0; t < T; ++t) {
            if (!row_is_finite(panel.values, t)) continue;
            complete.push_back(t);
            if (fit_end < 0 || t < fit_end) fit_rows.push_back(t);
        }
        if (static_cast<int>(fit_rows.size()) < std::max(opts.n_factors + 1, 10))
            throw std::invalid_argument("assemble_state_matrix: too few complete panel rows for factors");
        Matrix sub(static_cast<int>(fit_rows.size()), panel.N());
        for (int i = 0; i < sub.rows(); ++i)
            for (int c = 0; c < panel.N(); ++c) sub(i, c) = panel.values(fit_rows[i], c);
        const PcaProjector pj = fit_pca_projector(sub, opts.n_factors, panel.names);
        Matrix scores(T, opts.n_factors, kNaN);
        for (int t : complete) {
            const auto sc = pj.project(panel.values.row_ptr(t));
            for (int c = 0; c < opts.n_factors; ++c) scores(t, c) = sc[c];
        }
        for (int f = 0; f < opts.n_factors; ++f) {
            const Matrix lp = build_lag_panel(scores.col(f), opts.factor_lags);
            for (int p = 1; p <= opts.factor_lags; ++p)
                S.append_column(lp.col(p - 1), "F" + std::to_string(f + 1) + "_lag" + std::to_string(p),
                                StateGroup::factor_lag);
        }
    }

    if (opts.maf_per_var > 0) {
        for (int c = 0; c < panel.N(); ++c) {
            const Matrix mafs = compute_mafs(panel.values.col(c), opts.maf_P, opts.maf_per_var,
                                             opts.maf_decay, 0.9, fit_end);
            for (int m = 0; m < opts.maf_per_var; ++m)
                S.append_column(mafs.col(m), panel.names[c] + "_maf" + std::to_string(m + 1),
                                StateGroup::maf);
        }
    }

    S.validate();
    return S;
}

/// Writes the state matrix as CSV with the group tags recorded in a header
/// comment line.
inline void write_state_csv(const StateMatrix& S, const std::vector<std::string>& dates,
                            const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_state_csv: cannot open '" + path + "'");
    out << "# groups:";
    for (int j = 0; j < S.J(); ++j) out << ' ' << S.names[j] << '=' << state_group_name(S.groups[j]);
    out << '\n' << "date";
    for (const auto& n : S.names) out << ',' << n;
    out << '\n';
    for (int t = 0; t < S.T(); ++t) {
        out << (t < static_cast<int>(dates.size()) ? dates[t] : std::to_string(t + 1));
        for (int j = 0; j < S.J(); ++j) {
            out << ',';
            if (!std::isnan(S.values(t, j))) out << format_double(S.values(t, j));
        }
        out << '\n';
    }
}

}  // namespace mrf

#endif  // MRF_FEATURES_HPP

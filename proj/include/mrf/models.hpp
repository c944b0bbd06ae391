#ifndef MRF_MODELS_HPP
#define MRF_MODELS_HPP

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrf/dataio.hpp"
#include "mrf/features.hpp"
#include "mrf/forest.hpp"
#include "mrf/matrix.hpp"
#include "mrf/ridge_wls.hpp"
#include "mrf/rng.hpp"

namespace mrf {

/// Data handed to forecasting models: the (stationary) target plus an
/// optional predictor panel sharing its time index.
struct BenchData {
    std::vector<double> y;
    SeriesPanel panel;  // may have N() == 0
    Frequency frequency = Frequency::quarterly;
    std::vector<std::string> dates;

    int T() const { return static_cast<int>(y.size()); }
};

/// A model that produces direct (or internally iterated) h-step forecasts.
/// fit() may look only at rows before fit_end; predict() forecasts
/// y_{origin + h} from information dated `origin` or earlier, using the
/// parameters estimated at the last fit.
class ForecastModel {
public:
    virtual ~ForecastModel() = default;
    virtual std::string name() const = 0;
    virtual void fit(const BenchData& data, int fit_end, int h, std::uint64_t seed) = 0;
    virtual double predict(const BenchData& data, int origin) = 0;
};

// ---------------------------------------------------------------------------
// Design builders (no look-ahead: PCA maps are fitted on rows < fit_end)
// ---------------------------------------------------------------------------

namespace design {

/// [1, y_t, ..., y_{t-p+1}] rows for every t; early rows come out NaN.
inline Matrix ar_rows(const std::vector<double>& y, int p, std::vector<std::string>* names) {
    const int T = static_cast<int>(y.size());
    Matrix X(T, p + 1, kNaN);
    for (int t = 0; t < T; ++t) {
        X(t, 0) = 1.0;
        for (int l = 0; l < p; ++l) X(t, l + 1) = (t - l >= 0) ? y[t - l] : kNaN;
    }
    if (names) {
        names->clear();
        names->push_back("const");
        for (int l = 0; l < p; ++l) names->push_back("y_l" + std::to_string(l));
    }
    return X;
}

/// Cross-sectional factor scores for all rows, components fitted on complete
/// panel rows before fit_end.
inline Matrix factor_scores(const SeriesPanel& panel, int k, int fit_end) {
    const int T = panel.T();
    std::vector<int> complete, fit_rows;
    for (int t = 0; t < T; ++t) {
        if (!row_is_finite(panel.values, t)) continue;
        complete.push_back(t);
        if (t < fit_end) fit_rows.push_back(t);
    }
    if (static_cast<int>(fit_rows.size()) < k + 2)
        throw std::invalid_argument("factor_scores: too few complete rows before fit_end");
    Matrix sub(static_cast<int>(fit_rows.size()), panel.N());
    for (int i = 0; i < sub.rows(); ++i)
        for (int c = 0; c < panel.N(); ++c) sub(i, c) = panel.values(fit_rows[i], c);
    const PcaProjector pj = fit_pca_projector(sub, k, panel.names);
    Matrix scores(T, k, kNaN);
    for (int t : complete) {
        const auto sc = pj.project(panel.values.row_ptr(t));
        for (int c = 0; c < k; ++c) scores(t, c) = sc[c];
    }
    return scores;
}

inline Matrix hstack(const Matrix& a, const Matrix& b, const std::vector<std::string>& an,
                     const std::vector<std::string>& bn, std::vector<std::string>* names) {
    Matrix out(a.rows(), a.cols() + b.cols());
    for (int r = 0; r < a.rows(); ++r) {
        for (int c = 0; c < a.cols(); ++c) out(r, c) = a(r, c);
        for (int c = 0; c < b.cols(); ++c) out(r, a.cols() + c) = b(r, c);
    }
    if (names) {
        *names = an;
        names->insert(names->end(), bn.begin(), bn.end());
    }
    return out;
}

/// Origin-dated state set. The published S_t composition counts lags relative
/// to the target equation's date, so at the forecast origin the freshest
/// state value is the origin's own observation. Implemented by leading the
/// inputs one period before assembly; component maps then fit on led rows
/// before fit_end - 1, which is exactly the information available at the last
/// training origin.
inline StateMatrix origin_dated_state(const std::vector<double>& y, const SeriesPanel& panel,
                                      const StateOptions& opts, int fit_end) {
    const int T = static_cast<int>(y.size());
    std::vector<double> y_led(T, kNaN);
    for (int t = 0; t + 1 < T; ++t) y_led[t] = y[t + 1];
    SeriesPanel panel_led = panel;
    if (panel.N() > 0) {
        panel_led.values = Matrix(T, panel.N(), kNaN);
        for (int t = 0; t + 1 < T; ++t)
            for (int c = 0; c < panel.N(); ++c) panel_led.values(t, c) = panel.values(t + 1, c);
    }
    const int led_fit_end = fit_end >= 0 ? std::max(1, fit_end - 1) : -1;
    return assemble_state_matrix(y_led, panel_led, opts, led_fit_end);
}

}  // namespace design

// ---------------------------------------------------------------------------
// Linear benchmarks
// ---------------------------------------------------------------------------

/// Direct-forecast linear model over a design built once per fit. Covers AR,
/// FA-AR, rolling-window AR and the Ridge-MAF benchmark.
class LinearDirectModel : public ForecastModel {
public:
    using Builder = std::function<Matrix(const BenchData&, int fit_end, std::vector<std::string>*)>;

    LinearDirectModel(std::string model_name, Builder builder, double lambda = 0.0,
                      int window = -1, bool standardize = false)
        : name_(std::move(model_name)), builder_(std::move(builder)), lambda_(lambda),
          window_(window), standardize_(standardize) {}

    std::string name() const override { return name_; }

    void fit(const BenchData& data, int fit_end, int h, std::uint64_t) override {
        h_ = h;
        design_ = builder_(data, fit_end, nullptr);
        std::vector<int> rows;
        const int lo = window_ > 0 ? std::max(0, fit_end - window_) : 0;
        for (int t = lo; t + h < fit_end; ++t) {
            if (!std::isfinite(data.y[t + h]) || !row_is_finite(design_, t)) continue;
            rows.push_back(t);
        }
        if (static_cast<int>(rows.size()) <= design_.cols())
            throw std::invalid_argument(name_ + ": not enough observations in the fit window");
        std::vector<double> target(data.T(), kNaN);
        for (int t : rows) target[t] = data.y[t + h];
        std::vector<double> w(rows.size(), 1.0);
        RidgeSpec spec;
        spec.lambda = lambda_;
        spec.standardize = standardize_;
        beta_ = ridge_wls_solve_rows(design_, target, rows, w, spec).beta;
    }

    double predict(const BenchData&, int origin) override {
        if (beta_.empty()) throw std::logic_error(name_ + ": predict before fit");
        if (origin < 0 || origin >= design_.rows() || !row_is_finite(design_, origin)) return kNaN;
        double p = 0.0;
        for (int c = 0; c < design_.cols(); ++c) p += design_(origin, c) * beta_[c];
        return p;
    }

    const std::vector<double>& coefficients() const { return beta_; }

private:
    std::string name_;
    Builder builder_;
    double lambda_;
    int window_;
    bool standardize_;
    int h_ = 1;
    Matrix design_;
    std::vector<double> beta_;
};

inline std::unique_ptr<LinearDirectModel> make_ar_model(int p, const std::string& label = "") {
    auto builder = [p](const BenchData& d, int, std::vector<std::string>*) {
        return design::ar_rows(d.y, p, nullptr);
    };
    return std::make_unique<LinearDirectModel>(label.empty() ? "ar" + std::to_string(p) : label,
                                               builder, 0.0);
}

inline std::unique_ptr<LinearDirectModel> make_rw_ar_model(int p, int window) {
    auto builder = [p](const BenchData& d, int, std::vector<std::string>*) {
        return design::ar_rows(d.y, p, nullptr);
    };
    return std::make_unique<LinearDirectModel>("rw_ar", builder, 0.0, window);
}

inline std::unique_ptr<LinearDirectModel> make_fa_ar_model(int p = 4, int n_factors = 2,
                                                           int factor_lags = 2) {
    auto builder = [=](const BenchData& d, int fit_end, std::vector<std::string>*) {
        Matrix ar = design::ar_rows(d.y, p, nullptr);
        Matrix scores = design::factor_scores(d.panel, n_factors, fit_end);
        Matrix withf(d.T(), ar.cols() + n_factors * factor_lags, kNaN);
        for (int t = 0; t < d.T(); ++t) {
            for (int c = 0; c < ar.cols(); ++c) withf(t, c) = ar(t, c);
            for (int f = 0; f < n_factors; ++f)
                for (int l = 0; l < factor_lags; ++l)
                    withf(t, ar.cols() + f * factor_lags + l) =
                        (t - l >= 0) ? scores(t - l, f) : kNaN;
        }
        return withf;
    };
    return std::make_unique<LinearDirectModel>("fa_ar", builder, 0.0);
}

/// Ridge on the full state set S_t (Table 2 composition), standardized.
inline std::unique_ptr<LinearDirectModel> make_ridge_maf_model(double lambda = 1.0,
                                                               StateOptions opts = StateOptions()) {
    auto builder = [opts](const BenchData& d, int fit_end, std::vector<std::string>*) {
        StateMatrix S = design::origin_dated_state(d.y, d.panel, opts, fit_end);
        Matrix X(d.T(), S.J() + 1, kNaN);
        for (int t = 0; t < d.T(); ++t) {
            X(t, 0) = 1.0;
            for (int j = 0; j < S.J(); ++j) X(t, j + 1) = S.values(t, j);
        }
        return X;
    };
    return std::make_unique<LinearDirectModel>("ridge_maf", builder, lambda, -1,
                                               /*standardize=*/true);
}

// ---------------------------------------------------------------------------
// SETAR
// ---------------------------------------------------------------------------

/// Self-exciting threshold AR(2) on y_{t-1}, grid-searched threshold with a
/// 15% regime floor. One-step fits; multi-step forecasts are iterated with a
/// residual block bootstrap (500 paths).
class SetarModel : public ForecastModel {
public:
    explicit SetarModel(int n_paths = 500) : n_paths_(n_paths) {}

    std::string name() const override { return "setar"; }

    void fit(const BenchData& data, int fit_end, int h, std::uint64_t seed) override {
        h_ = h;
        seed_ = seed;
        const auto& y = data.y;
        std::vector<int> rows;
        for (int t = 2; t < fit_end; ++t)
            if (std::isfinite(y[t]) && std::isfinite(y[t - 1]) && std::isfinite(y[t - 2]))
                rows.push_back(t);
        const int n = static_cast<int>(rows.size());
        if (n < 30) throw std::invalid_argument("setar: not enough observations");

        // Candidate thresholds: quantiles of y_{t-1} honoring the regime floor.
        std::vector<double> thresh_var(n);
        for (int i = 0; i < n; ++i) thresh_var[i] = y[rows[i] - 1];
        std::vector<double> sorted = thresh_var;
        std::sort(sorted.begin(), sorted.end());
        const int floor_n = std::max(3, static_cast<int>(std::ceil(0.15 * n)));
        std::vector<double> cands;
        for (int i = floor_n; i <= n - floor_n; ++i) {
            const double c = sorted[i - 1];
            if (cands.empty() || c != cands.back()) cands.push_back(c);
        }
        if (cands.size() > 120) {
            std::vector<double> thin;
            for (std::size_t i = 0; i < 120; ++i)
                thin.push_back(cands[i * cands.size() / 120]);
            cands = thin;
        }

        Matrix X(data.T(), 3, kNaN);
        for (int t = 2; t < data.T(); ++t) {
            X(t, 0) = 1.0;
            X(t, 1) = y[t - 1];
            X(t, 2) = y[t - 2];
        }

        double best_sse = kInfeasible;
        for (double c : cands) {
            std::vector<int> lo, hi;
            for (int t : rows) (y[t - 1] >= c ? hi : lo).push_back(t);
            if (static_cast<int>(lo.size()) < floor_n || static_cast<int>(hi.size()) < floor_n)
                continue;
            RidgeSpec ols;
            try {
                std::vector<double> wlo(lo.size(), 1.0), whi(hi.size(), 1.0);
                auto flo = ridge_wls_solve_rows(X, y, lo, wlo, ols);
                auto fhi = ridge_wls_solve_rows(X, y, hi, whi, ols);
                if (flo.weighted_sse + fhi.weighted_sse < best_sse) {
                    best_sse = flo.weighted_sse + fhi.weighted_sse;
                    threshold_ = c;
                    beta_lo_ = flo.beta;
                    beta_hi_ = fhi.beta;
                }
            } catch (const rank_deficiency_error&) {
                continue;
            }
        }
        if (beta_lo_.empty()) throw std::runtime_error("setar: no feasible threshold");

        residuals_.clear();
        for (int t : rows) {
            const auto& b = y[t - 1] >= threshold_ ? beta_hi_ : beta_lo_;
            residuals_.push_back(y[t] - (b[0] + b[1] * y[t - 1] + b[2] * y[t - 2]));
        }
    }

    double predict(const BenchData& data, int origin) override {
        if (beta_lo_.empty()) throw std::logic_error("setar: predict before fit");
        if (origin < 1 || origin >= data.T()) return kNaN;
        const double y1 = data.y[origin], y2 = data.y[origin - 1];
        if (!std::isfinite(y1) || !std::isfinite(y2)) return kNaN;
        if (h_ == 1) return step(y1, y2, 0.0);

        // Iterated forecasts via residual block bootstrap.
        auto rng = make_stream(seed_, static_cast<std::uint64_t>(origin), 0x5e7a);
        const int n_res = static_cast<int>(residuals_.size());
        if (n_res <= h_) return kNaN;
        double acc = 0.0;
        for (int path = 0; path < n_paths_; ++path) {
            const int start = static_cast<int>(rand_below(rng, static_cast<std::uint64_t>(n_res - h_ + 1)));
            double a = y1, b = y2;
            double val = 0.0;
            for (int s = 0; s < h_; ++s) {
                val = step(a, b, residuals_[start + s]);
                b = a;
                a = val;
            }
            acc += val;
        }
        return acc / n_paths_;
    }

    double threshold() const { return threshold_; }
    const std::vector<double>& beta_low() const { return beta_lo_; }
    const std::vector<double>& beta_high() const { return beta_hi_; }

private:
    double step(double y1, double y2, double shock) const {
        const auto& b = y1 >= threshold_ ? beta_hi_ : beta_lo_;
        return b[0] + b[1] * y1 + b[2] * y2 + shock;
    }

    int n_paths_;
    int h_ = 1;
    std::uint64_t seed_ = 0;
    double threshold_ = 0.0;
    std::vector<double> beta_lo_, beta_hi_;
    std::vector<double> residuals_;
};

// ---------------------------------------------------------------------------
// MRF-family models
// ---------------------------------------------------------------------------

/// Which linear part a forest model carries.
enum class LinearPart { intercept, ar2, fa_ar2, var_small };

/// Which state set feeds the split search.
enum class StateSet { tiny, full, raw_lags };

/// Generic MRF forecasting model: a linear-part recipe, a state-set recipe
/// and forest hyperparameters. Plain RF variants use the intercept linear
/// part with lambda = zeta = 0.
class MrfForecastModel : public ForecastModel {
public:
    MrfForecastModel(std::string model_name, LinearPart linear, StateSet state, HyperParams hp,
                     std::vector<std::string> var_cols = {}, StateOptions state_opts = StateOptions())
        : name_(std::move(model_name)), linear_(linear), state_(state), hp_(hp),
          var_cols_(std::move(var_cols)), state_opts_(state_opts) {}

    std::string name() const override { return name_; }

    void fit(const BenchData& data, int fit_end, int h, std::uint64_t seed) override {
        h_ = h;
        build_design(data, fit_end);

        MrfData train;
        train.x_names = x_names_;
        train.s_names = s_names_;
        train.trend_col = trend_col_;
        train.y.assign(fit_end, kNaN);
        for (int t = 0; t + h < fit_end; ++t) train.y[t] = data.y[t + h];
        train.X = Matrix(fit_end, X_.cols());
        train.S = Matrix(fit_end, S_.cols());
        for (int t = 0; t < fit_end; ++t) {
            for (int c = 0; c < X_.cols(); ++c) train.X(t, c) = X_(t, c);
            for (int j = 0; j < S_.cols(); ++j) train.S(t, j) = S_(t, j);
        }
        HyperParams hp = hp_;
        hp.seed = seed;
        forest_ = fit_forest(train, hp);
    }

    double predict(const BenchData&, int origin) override {
        if (!forest_) throw std::logic_error(name_ + ": predict before fit");
        if (origin < 0 || origin >= S_.rows()) return kNaN;
        if (!row_is_finite(X_, origin)) return kNaN;
        Matrix s_row(1, S_.cols()), x_row(1, X_.cols());
        for (int j = 0; j < S_.cols(); ++j) s_row(0, j) = S_(origin, j);
        for (int c = 0; c < X_.cols(); ++c) x_row(0, c) = X_(origin, c);
        return forest_predict(*forest_, s_row, s_names_, x_row, x_names_, 1)[0];
    }

    const MrfForest* forest() const { return forest_ ? &*forest_ : nullptr; }
    const Matrix& state_rows() const { return S_; }
    const Matrix& linear_rows() const { return X_; }
    const std::vector<std::string>& state_names() const { return s_names_; }
    const std::vector<std::string>& linear_names() const { return x_names_; }
    const std::vector<StateGroup>& state_groups() const { return s_groups_; }

private:
    void build_design(const BenchData& data, int fit_end) {
        // Linear part (regressors dated at the forecast origin).
        switch (linear_) {
            case LinearPart::intercept:
                X_ = Matrix(data.T(), 1, 1.0);
                x_names_ = {"const"};
                break;
            case LinearPart::ar2:
                X_ = design::ar_rows(data.y, 2, nullptr);
                x_names_ = {"const", "y_l0", "y_l1"};
                break;
            case LinearPart::fa_ar2: {
                Matrix ar = design::ar_rows(data.y, 2, nullptr);
                Matrix scores = design::factor_scores(data.panel, 2, fit_end);
                X_ = Matrix(data.T(), 5, kNaN);
                for (int t = 0; t < data.T(); ++t) {
                    for (int c = 0; c < 3; ++c) X_(t, c) = ar(t, c);
                    X_(t, 3) = scores(t, 0);
                    X_(t, 4) = scores(t, 1);
                }
                x_names_ = {"const", "y_l0", "y_l1", "F1", "F2"};
                break;
            }
            case LinearPart::var_small: {
                if (var_cols_.size() != 3)
                    throw std::invalid_argument(name_ + ": var_small needs exactly three column names");
                Matrix ar = design::ar_rows(data.y, 2, nullptr);
                X_ = Matrix(data.T(), 6, kNaN);
                for (int t = 0; t < data.T(); ++t)
                    for (int c = 0; c < 3; ++c) X_(t, c) = ar(t, c);
                x_names_ = {"const", "y_l0", "y_l1"};
                for (int i = 0; i < 3; ++i) {
                    const int col = data.panel.column_index(var_cols_[i]);
                    if (col < 0)
                        throw std::invalid_argument(name_ + ": panel column '" + var_cols_[i] +
                                                    "' not found");
                    for (int t = 0; t < data.T(); ++t) X_(t, 3 + i) = data.panel.values(t, col);
                    x_names_.push_back(var_cols_[i]);
                }
                break;
            }
        }

        // State set.
        StateOptions opts = state_opts_;
        switch (state_) {
            case StateSet::tiny:
                opts = StateOptions::tiny(8);
                break;
            case StateSet::raw_lags:
                opts.own_lags = 8;
                opts.raw_lags = 8;
                opts.n_factors = 0;
                opts.factor_lags = 0;
                opts.maf_per_var = 0;
                break;
            case StateSet::full:
                break;
        }
        SeriesPanel panel = data.panel;
        if (state_ == StateSet::tiny) {
            panel = SeriesPanel{};
            panel.values = Matrix(data.T(), 0);
        }
        StateMatrix S = design::origin_dated_state(data.y, panel, opts, fit_end);
        S_ = std::move(S.values);
        s_names_ = std::move(S.names);
        s_groups_ = std::move(S.groups);
        trend_col_ = S.trend_col;
    }

    std::string name_;
    LinearPart linear_;
    StateSet state_;
    HyperParams hp_;
    std::vector<std::string> var_cols_;
    StateOptions state_opts_;
    int h_ = 1;
    Matrix X_, S_;
    std::vector<std::string> x_names_, s_names_;
    std::vector<StateGroup> s_groups_;
    int trend_col_ = -1;
    std::optional<MrfForest> forest_;
};

// ---------------------------------------------------------------------------
// Model registry (Table-3 style acronyms)
// ---------------------------------------------------------------------------

struct ModelConfig {
    int ar_order = 4;
    int rw_window = 40;  // ten years of quarters
    double ridge_lambda = 1.0;
    HyperParams hp;                       // MRF hyperparameters
    std::vector<std::string> var_cols;    // VARRF linear-part columns
    StateOptions state_opts;              // full S_t composition
};

inline HyperParams plain_rf_restriction(HyperParams hp) {
    hp.lambda = 0.0;
    hp.zeta = 0.0;
    return hp;
}

/// Builds a forecasting model from its acronym: ar, fa_ar, rw_ar, setar, rf,
/// rf_maf, arrf, tiny_arrf, fa_arrf, varrf, ridge_maf.
inline std::unique_ptr<ForecastModel> make_benchmark_model(const std::string& kind,
                                                           const ModelConfig& cfg = ModelConfig()) {
    if (kind == "ar") return make_ar_model(cfg.ar_order, "ar");
    if (kind == "ar2") return make_ar_model(2, "ar2");
    if (kind == "fa_ar") return make_fa_ar_model();
    if (kind == "rw_ar") return make_rw_ar_model(2, cfg.rw_window);
    if (kind == "setar") return std::make_unique<SetarModel>();
    if (kind == "ridge_maf") return make_ridge_maf_model(cfg.ridge_lambda, cfg.state_opts);
    if (kind == "rf")
        return std::make_unique<MrfForecastModel>("rf", LinearPart::intercept, StateSet::raw_lags,
                                                  plain_rf_restriction(cfg.hp));
    if (kind == "tiny_rf")
        return std::make_unique<MrfForecastModel>("tiny_rf", LinearPart::intercept, StateSet::tiny,
                                                  plain_rf_restriction(cfg.hp));
    if (kind == "rf_maf")
        return std::make_unique<MrfForecastModel>("rf_maf", LinearPart::intercept, StateSet::full,
                                                  plain_rf_restriction(cfg.hp),
                                                  std::vector<std::string>{}, cfg.state_opts);
    if (kind == "arrf")
        return std::make_unique<MrfForecastModel>("arrf", LinearPart::ar2, StateSet::full, cfg.hp,
                                                  std::vector<std::string>{}, cfg.state_opts);
    if (kind == "tiny_arrf")
        return std::make_unique<MrfForecastModel>("tiny_arrf", LinearPart::ar2, StateSet::tiny,
                                                  cfg.hp);
    if (kind == "fa_arrf")
        return std::make_unique<MrfForecastModel>("fa_arrf", LinearPart::fa_ar2, StateSet::full,
                                                  cfg.hp, std::vector<std::string>{}, cfg.state_opts);
    if (kind == "varrf")
        return std::make_unique<MrfForecastModel>("varrf", LinearPart::var_small, StateSet::full,
                                                  cfg.hp, cfg.var_cols, cfg.state_opts);
    throw std::invalid_argument("make_benchmark_model: unknown model kind '" + kind + "'");
}

}  // namespace mrf

#endif  // MRF_MODELS_HPP

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>

#include "mrf/bench.hpp"
#include "mrf/rng.hpp"
#include "oracles.hpp"

using namespace mrf;

TEST_CASE("noiseless AR(2) recursion matches a hand iteration") {
    DgpSpec spec;
    spec.id = "ar3";
    spec.T = 60;
    spec.sigma = 0.0;
    spec.burn_in = 0;
    spec.y_init0 = 1.0;
    spec.y_init1 = 0.5;
    auto out = simulate_dgp(spec);

    double a = 0.5, b = 1.0;  // y[1], y[0]
    CHECK(out.y[0] == 1.0);
    CHECK(out.y[1] == 0.5);
    for (int t = 2; t < 12; ++t) {
        const double v = 0.7 * a - 0.2 * b;
        CHECK(out.y[t] == doctest::Approx(v).epsilon(1e-14));
        b = a;
        a = v;
    }
}

TEST_CASE("simulations are byte-reproducible under the same spec") {
    for (const char* id : {"ar1", "ar2", "ar5", "dr1", "dr3", "dr6"}) {
        DgpSpec spec;
        spec.id = id;
        spec.T = spec.id[0] == 'd' ? 200 : 120;
        spec.seed = 77;
        auto a = simulate_dgp(spec);
        auto b = simulate_dgp(spec);
        CHECK(a.y == b.y);
        CHECK(a.true_beta.data() == b.true_beta.data());
        if (a.data_rich) CHECK(a.state_panel.values.data() == b.state_panel.values.data());
    }
}

TEST_CASE("dr6 has a flat coefficient vector by construction") {
    DgpSpec spec;
    spec.id = "dr6";
    spec.T = 300;
    spec.seed = 5;
    auto out = simulate_dgp(spec);
    for (int t = 1; t < 300; ++t)
        for (int c = 0; c < 3; ++c) CHECK(out.true_beta(t, c) == out.true_beta(0, c));
}

TEST_CASE("persistent SETAR with a large initial value starts in the high regime") {
    DgpSpec spec;
    spec.id = "ar2";
    spec.T = 80;
    spec.burn_in = 0;
    spec.y_init1 = 10.0;  // y_{t-1} >= 0 at the first generated point
    spec.seed = 3;
    auto out = simulate_dgp(spec);
    CHECK(out.true_beta(2, 0) == 2.0);
    CHECK(out.true_beta(2, 1) == 0.8);
    CHECK(out.true_beta(2, 2) == -0.2);
}

TEST_CASE("unknown DGP ids are rejected") {
    DgpSpec spec;
    spec.id = "xx9";
    CHECK_THROWS_AS(simulate_dgp(spec), std::invalid_argument);
}

TEST_CASE("oracle: one-step AR(2) forecast is the straight formula") {
    DgpSpec spec;
    spec.id = "ar3";
    spec.T = 100;
    spec.seed = 11;
    auto out = simulate_dgp(spec);
    for (int origin : {10, 40, 80}) {
        const double expected = 0.7 * out.y[origin] - 0.2 * out.y[origin - 1];
        CHECK(oracle_forecast(out, origin, 1) == doctest::Approx(expected).epsilon(1e-14));
    }
}

TEST_CASE("oracle error vanishes as sigma goes to zero") {
    DgpSpec spec;
    spec.id = "ar2";
    spec.T = 80;
    spec.sigma = 1e-10;
    spec.seed = 4;
    auto out = simulate_dgp(spec);
    for (int origin : {30, 50}) {
        const double f = oracle_forecast(out, origin, 1);
        CHECK(std::abs(out.y[origin + 1] - f) < 1e-8);
    }
}

TEST_CASE("oracle SETAR forecast far from the threshold equals the per-regime AR forecast") {
    DgpSpec spec;
    spec.id = "ar2";
    spec.T = 100;
    spec.seed = 9;
    auto out = simulate_dgp(spec);
    // Monte Carlo oracle: average true-law paths with redrawn shocks.
    auto mc_oracle = [&](int origin, int h, double sigma) {
        auto rng = make_stream(123456, origin);
        double acc = 0.0;
        const int n_paths = 200000;
        for (int p = 0; p < n_paths; ++p) {
            double a = out.y[origin], b = out.y[origin - 1];
            for (int s = 1; s <= h; ++s) {
                const auto beta = a >= 0.0 ? std::array<double, 3>{2.0, 0.8, -0.2}
                                           : std::array<double, 3>{0.25, 1.1, -0.4};
                const double v = beta[0] + beta[1] * a + beta[2] * b + sigma * rand_normal(rng);
                b = a;
                a = v;
            }
            acc += a;
        }
        return acc / n_paths;
    };
    // Find an origin deep in the high regime.
    int origin = -1;
    for (int t = 10; t < 90; ++t)
        if (out.y[t] > 3.0 && out.y[t - 1] > 1.0) origin = t;
    REQUIRE(origin > 0);
    const double skel = oracle_forecast(out, origin, 2);
    const double mc = mc_oracle(origin, 2, out.sigma_used);
    // Far from the threshold the skeleton and the path-average agree closely
    // relative to the shock scale.
    CHECK(std::abs(skel - mc) < 0.15);
}

TEST_CASE("data-rich panels: copies correlate tightly with their factor, SNR about 2/3") {
    DgpSpec spec;
    spec.id = "dr3";
    spec.T = 1000;
    spec.seed = 21;
    auto out = simulate_dgp(spec);
    REQUIRE(out.state_panel.N() == 100);

    // A copy of G1 correlates with the (standardized) latent factor.
    std::vector<double> copy = out.state_panel.values.col(0);
    CHECK(correlation_of(copy, out.latent_factor) > 0.99);

    // Signal-to-noise calibration: var(signal) / var(y) ~ 2/3.
    std::vector<double> signal(out.y.size());
    for (std::size_t t = 0; t < out.y.size(); ++t)
        signal[t] = out.true_beta(t, 0) + out.true_beta(t, 1) * out.X(t, 1) +
                    out.true_beta(t, 2) * out.X(t, 2);
    const double ratio = variance_of(signal) / variance_of(out.y);
    CHECK(ratio > 0.55);
    CHECK(ratio < 0.78);

    // dr3: beta_X1 is the latent factor itself.
    auto b1 = out.true_beta.col(1);
    CHECK(correlation_of(b1, out.latent_factor) == doctest::Approx(1.0));
}

TEST_CASE("ar benchmark is consistent on the pure AR(2) law") {
    DgpSpec spec;
    spec.id = "ar3";
    spec.T = 5000;
    spec.seed = 31;
    auto out = simulate_dgp(spec);
    BenchData data;
    data.y = out.y;
    auto model = make_ar_model(2);
    model->fit(data, data.T(), 1, 0);
    const auto& beta = model->coefficients();
    // Direct h=1 regression on [1, y_t, y_{t-1}] recovers [0, 0.7, -0.2].
    CHECK(std::abs(beta[0] - 0.0) < 0.05);
    CHECK(std::abs(beta[1] - 0.7) < 0.05);
    CHECK(std::abs(beta[2] + 0.2) < 0.05);
}

TEST_CASE("setar benchmark recovers the true threshold on persistent-SETAR data") {
    DgpSpec spec;
    spec.id = "ar2";
    spec.T = 2000;
    spec.seed = 32;
    auto out = simulate_dgp(spec);
    BenchData data;
    data.y = out.y;
    SetarModel setar;
    setar.fit(data, data.T(), 1, 0);
    CHECK(std::abs(setar.threshold() - 0.0) < 0.15);

    // Finer-resolution grid search cannot do materially better.
    const auto& y = data.y;
    Matrix X(data.T(), 3, kNaN);
    for (int t = 2; t < data.T(); ++t) {
        X(t, 0) = 1.0;
        X(t, 1) = y[t - 1];
        X(t, 2) = y[t - 2];
    }
    std::vector<int> rows;
    for (int t = 2; t < data.T(); ++t) rows.push_back(t);
    double best_sse = 1e300, best_c = 0.0;
    for (double c = -1.5; c <= 1.5; c += 0.01) {
        std::vector<int> lo, hi;
        for (int t : rows) (y[t - 1] >= c ? hi : lo).push_back(t);
        if (lo.size() < 300 || hi.size() < 300) continue;
        RidgeSpec ols;
        std::vector<double> wlo(lo.size(), 1.0), whi(hi.size(), 1.0);
        const double sse = ridge_wls_solve_rows(X, y, lo, wlo, ols).weighted_sse +
                           ridge_wls_solve_rows(X, y, hi, whi, ols).weighted_sse;
        if (sse < best_sse) {
            best_sse = sse;
            best_c = c;
        }
    }
    CHECK(std::abs(setar.threshold() - best_c) < 0.15);
}

TEST_CASE("rolling-window AR with a full window equals the plain AR") {
    DgpSpec spec;
    spec.id = "ar3";
    spec.T = 300;
    spec.seed = 33;
    auto out = simulate_dgp(spec);
    BenchData data;
    data.y = out.y;
    auto ar = make_ar_model(2);
    auto rw = make_rw_ar_model(2, data.T());
    ar->fit(data, 260, 1, 0);
    rw->fit(data, 260, 1, 0);
    for (int origin : {260, 270, 280}) {
        CHECK(ar->predict(data, origin) == doctest::Approx(rw->predict(data, origin)).epsilon(1e-12));
    }
}

TEST_CASE("dm test: identical forecasts give statistic 0 and p-value 1") {
    std::vector<double> e(50, 0.3);
    auto res = dm_test(e, e, 1);
    CHECK(res.stat == 0.0);
    CHECK(res.p_value == 1.0);
}

TEST_CASE("dm test at h = 1 matches a direct t-test oracle") {
    auto rng = make_stream(41, 0);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 60 + static_cast<int>(rand_below(rng, 100));
        std::vector<double> ea(n), eb(n);
        for (int i = 0; i < n; ++i) {
            ea[i] = rand_normal(rng) * 1.2;
            eb[i] = rand_normal(rng);
        }
        auto res = dm_test(ea, eb, 1);
        std::vector<double> d(n);
        for (int i = 0; i < n; ++i) d[i] = ea[i] * ea[i] - eb[i] * eb[i];
        double stat, p;
        oracle::mean_t_test(d, stat, p);
        CHECK(res.stat == doctest::Approx(stat).epsilon(1e-10));
        CHECK(res.p_value == doctest::Approx(p).epsilon(1e-10));
    }
}

TEST_CASE("dm test: Monte Carlo power against a mean shift") {
    auto rng = make_stream(42, 0);
    int rejections = 0;
    const int sims = 200, n = 1000;
    for (int s = 0; s < sims; ++s) {
        // d_t ~ N(mu > 0, 1) realized through squared-error differences.
        std::vector<double> ea(n), eb(n);
        for (int i = 0; i < n; ++i) {
            const double d = 0.15 + rand_normal(rng);  // target differential
            ea[i] = std::sqrt(std::max(0.0, 1.0 + d));
            eb[i] = 1.0;
        }
        if (dm_test(ea, eb, 1).p_value < 0.05) ++rejections;
    }
    CHECK(rejections > sims * 0.90);
}

TEST_CASE("dm test input validation") {
    std::vector<double> a(5, 1.0), b(5, 1.0);
    CHECK_THROWS_AS(dm_test(a, b, 1), std::invalid_argument);
    std::vector<double> c(12, 1.0), d(11, 1.0);
    CHECK_THROWS_AS(dm_test(c, d, 1), std::invalid_argument);
}

namespace {

/// Test-only model that reads the future: zero error by construction.
class PerfectForesight : public ForecastModel {
public:
    std::string name() const override { return "perfect"; }
    void fit(const BenchData&, int, int h, std::uint64_t) override { h_ = h; }
    double predict(const BenchData& data, int origin) override {
        return data.y[origin + h_];
    }

private:
    int h_ = 1;
};

}  // namespace

TEST_CASE("run_oos: perfect foresight scores zero; the base is its own unit") {
    DgpSpec spec;
    spec.id = "ar3";
    spec.T = 200;
    spec.seed = 51;
    auto out = simulate_dgp(spec);
    BenchData data;
    data.y = out.y;

    std::vector<std::unique_ptr<ForecastModel>> models;
    models.push_back(make_ar_model(2));
    models.push_back(std::make_unique<PerfectForesight>());
    models.push_back(make_ar_model(2, "ar_again"));

    OosSpec oos;
    oos.oos_start = 160;
    oos.oos_end = 199;
    oos.horizons = {1, 2};
    oos.reestimate_every = 8;
    auto report = run_oos(models, data, oos,
                          [&](int origin, int h) { return oracle_forecast(out, origin, h); });

    for (std::size_t hi = 0; hi < report.horizons.size(); ++hi) {
        CHECK(report.cells[hi][1].rmse == doctest::Approx(0.0));
        CHECK(report.cells[hi][1].rel_rmse == doctest::Approx(0.0));
        // The base model against itself: relative RMSE 1.
        CHECK(report.cells[hi][0].rel_rmse == doctest::Approx(1.0));
        // An identical clone of the base: DM p-value 1 (identical forecasts).
        CHECK(report.cells[hi][2].rel_rmse == doctest::Approx(1.0));
        CHECK(report.cells[hi][2].dm_stat == doctest::Approx(0.0));
        CHECK(report.cells[hi][2].dm_p == doctest::Approx(1.0));
        // Oracle dis-improvement of a sane model is nonnegative-ish.
        CHECK(report.cells[hi][0].delta_oracle > -0.05);
        CHECK(report.oracle_rmse[hi] > 0.0);
    }
    CHECK(report.cells[0][1].delta_oracle == doctest::Approx(-1.0));  // perfect beats the oracle
}

TEST_CASE("run_oos: failures are recorded per cell and the run continues") {
    class Exploding : public ForecastModel {
    public:
        std::string name() const override { return "exploding"; }
        void fit(const BenchData&, int, int, std::uint64_t) override {
            throw std::runtime_error("synthetic failure");
        }
        double predict(const BenchData&, int) override { return 0.0; }
    };
    DgpSpec spec;
    spec.id = "ar3";
    spec.T = 150;
    spec.seed = 52;
    auto out = simulate_dgp(spec);
    BenchData data;
    data.y = out.y;
    std::vector<std::unique_ptr<ForecastModel>> models;
    models.push_back(make_ar_model(2));
    models.push_back(std::make_unique<Exploding>());
    OosSpec oos;
    oos.oos_start = 120;
    oos.oos_end = 149;
    auto report = run_oos(models, data, oos);
    CHECK(std::isfinite(report.cells[0][0].rmse));
    CHECK(!std::isfinite(report.cells[0][1].rmse));
    CHECK(report.cells[0][1].error.find("synthetic failure") != std::string::npos);
}

TEST_CASE("sim study: oracle beats simple models and deltas are positive") {
    DgpSpec spec;
    spec.id = "ar3";
    spec.T = 150;
    spec.seed = 60;
    auto factory = []() {
        std::vector<std::unique_ptr<ForecastModel>> models;
        models.push_back(make_ar_model(2));
        models.push_back(make_rw_ar_model(2, 40));
        return models;
    };
    auto res = run_sim_study(spec, factory, {1}, 20, 40, 2);
    CHECK(res.oracle_rmse[0] > 0.0);
    // The correctly specified AR tracks the oracle closely; RW-AR is noisier.
    CHECK(res.delta_o(0, 0) > -0.02);
    CHECK(res.delta_o(0, 0) < 0.25);
    CHECK(res.delta_o(0, 1) >= res.delta_o(0, 0) - 0.02);
}

TEST_CASE("eval report CSVs carry the table layout and stars") {
    namespace fs = std::filesystem;
    DgpSpec spec;
    spec.id = "ar1";
    spec.T = 160;
    spec.seed = 61;
    auto out = simulate_dgp(spec);
    BenchData data;
    data.y = out.y;
    std::vector<std::unique_ptr<ForecastModel>> models;
    models.push_back(make_ar_model(2));
    models.push_back(std::make_unique<PerfectForesight>());
    OosSpec oos;
    oos.oos_start = 120;
    oos.oos_end = 159;
    auto report = run_oos(models, data, oos);

    const auto dir = fs::temp_directory_path() / "mrf_bench_test";
    fs::create_directories(dir);
    const std::string table = (dir / "table.csv").string();
    const std::string tidy = (dir / "tidy.csv").string();
    write_eval_table_csv(report, table);
    write_eval_tidy_csv(report, tidy);

    std::ifstream in(table);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "target,horizon,ar2,perfect");
    CHECK(row.find("1.0000") != std::string::npos);  // base relative RMSE
    CHECK(row.find("***") != std::string::npos);     // perfect foresight is significant
}

TEST_CASE("quarterly harness defaults: re-estimation every two years") {
    OosSpec spec;
    CHECK(spec.reestimate_every == 8);
    CHECK(spec.expanding);
}

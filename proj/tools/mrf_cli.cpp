// mrf: macroeconomic random forest toolkit.
//
// Subcommands: simulate, fit, oos, vi, surrogate, project. Each run takes a
// JSON config (plus --set overrides) and writes its artifacts, a resolved
// config and a manifest into one output directory. Re-running a command from
// a run's resolved config reproduces every artifact byte for byte.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "mrf/analysis.hpp"
#include "mrf/bench.hpp"
#include "mrf/dataio.hpp"
#include "mrf/features.hpp"
#include "mrf/forest.hpp"
#include "mrf/models.hpp"
#include "mrf/serialize.hpp"
#include "mrf/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

json default_config() {
    return json{
        {"dataset", ""},
        {"frequency", "quarterly"},
        {"target", ""},
        {"transform", true},
        {"model", "arrf"},
        {"models", json::array({"ar", "arrf"})},
        {"base_model", "ar"},
        {"horizons", json::array({1})},
        {"target_mode", "point"},
        {"exclusion_halfwidth", 0},
        {"seed", 0},
        {"threads", 0},
        {"output_dir", "mrf_run"},
        {"ar_order", 4},
        {"rw_window", 40},
        {"ridge_lambda", 1.0},
        {"var_cols", json::array()},
        {"hyper",
         {{"mtry_frac", 1.0 / 3.0},
          {"min_node_size", 10},
          {"mlf", -1.0},
          {"lambda", 0.5},
          {"zeta", 0.8},
          {"trend_push", 2.0},
          {"max_candidates", 50},
          {"subsample_rate", 0.75},
          {"block_size", 8},
          {"n_trees", 100},
          {"bayes_block_weights", false},
          {"standardize", true}}},
        {"state",
         {{"own_lags", 8},
          {"raw_lags", 2},
          {"n_factors", 5},
          {"factor_lags", 8},
          {"maf_per_var", 2},
          {"maf_P", 8},
          {"maf_decay", false}}},
        {"oos",
         {{"start", ""}, {"end", ""}, {"reestimate_every", 8}, {"scheme", "expanding"}}},
        {"simulate",
         {{"dgp", "ar3"},
          {"T", 150},
          {"sims", 100},
          {"holdout", 40},
          {"horizons", json::array({1})},
          {"models", json::array({"ar2", "rw_ar", "setar", "tiny_rf", "tiny_arrf"})},
          {"sigma", -1.0},
          {"train", 400}}},
        {"vi", {{"modes", json::array({"oob", "beta"})}, {"beta_index", 0}, {"n_repeats", 5}, {"oos_start", ""}}},
        {"surrogate", {{"coefficient", 0}, {"cp", 0.075}, {"min_leaf", 10}, {"top_k", 20}}},
        {"project", {{"split", ""}}},
    };
}

void deep_merge(json& base, const json& overlay) {
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object())
            deep_merge(base[it.key()], *it);
        else
            base[it.key()] = *it;
    }
}

void apply_set(json& cfg, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (...) {
        value = raw;  // plain string
    }
    json* node = &cfg;
    std::size_t pos = 0;
    while (true) {
        const auto dot = key.find('.', pos);
        const std::string part = key.substr(pos, dot == std::string::npos ? dot : dot - pos);
        if (part.empty()) throw ConfigError("--set: empty key segment in '" + key + "'");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        node = &(*node)[part];
        pos = dot + 1;
    }
}

mrf::HyperParams hyper_from(const json& j) {
    mrf::HyperParams hp;
    hp.mtry_frac = j.at("mtry_frac").get<double>();
    hp.min_node_size = j.at("min_node_size").get<int>();
    hp.mlf = j.at("mlf").get<double>();
    hp.lambda = j.at("lambda").get<double>();
    hp.zeta = j.at("zeta").get<double>();
    hp.trend_push = j.at("trend_push").get<double>();
    hp.max_candidates = j.at("max_candidates").get<int>();
    hp.subsample_rate = j.at("subsample_rate").get<double>();
    hp.block_size = j.at("block_size").get<int>();
    hp.n_trees = j.at("n_trees").get<int>();
    hp.bayes_block_weights = j.at("bayes_block_weights").get<bool>();
    hp.standardize = j.at("standardize").get<bool>();
    return hp;
}

mrf::StateOptions state_from(const json& j) {
    mrf::StateOptions o;
    o.own_lags = j.at("own_lags").get<int>();
    o.raw_lags = j.at("raw_lags").get<int>();
    o.n_factors = j.at("n_factors").get<int>();
    o.factor_lags = j.at("factor_lags").get<int>();
    o.maf_per_var = j.at("maf_per_var").get<int>();
    o.maf_P = j.at("maf_P").get<int>();
    o.maf_decay = j.at("maf_decay").get<bool>();
    return o;
}

mrf::ModelConfig model_config_from(const json& cfg) {
    mrf::ModelConfig mc;
    mc.ar_order = cfg.at("ar_order").get<int>();
    mc.rw_window = cfg.at("rw_window").get<int>();
    mc.ridge_lambda = cfg.at("ridge_lambda").get<double>();
    mc.hp = hyper_from(cfg.at("hyper"));
    mc.state_opts = state_from(cfg.at("state"));
    for (const auto& v : cfg.at("var_cols")) mc.var_cols.push_back(v.get<std::string>());
    return mc;
}

mrf::Frequency frequency_from(const json& cfg) {
    const std::string f = cfg.at("frequency").get<std::string>();
    if (f == "quarterly" || f == "q") return mrf::Frequency::quarterly;
    if (f == "monthly" || f == "m") return mrf::Frequency::monthly;
    throw ConfigError("frequency must be 'quarterly' or 'monthly', got '" + f + "'");
}

/// Prepared dataset: stationarized panel plus the (transformed) target.
struct Prepared {
    mrf::BenchData data;
    std::vector<std::string> dates;
};

Prepared prepare_data(const json& cfg) {
    const std::string path = cfg.at("dataset").get<std::string>();
    if (path.empty()) throw ConfigError("config field 'dataset' is required");
    if (!fs::exists(path)) throw ConfigError("dataset file '" + path + "' does not exist");
    const auto freq = frequency_from(cfg);
    mrf::SeriesPanel panel = mrf::read_panel_csv(path, freq);

    const std::string target = cfg.at("target").get<std::string>();
    if (target.empty()) throw ConfigError("config field 'target' is required");
    if (panel.column_index(target) < 0)
        throw ConfigError("target column '" + target + "' not found in dataset");

    if (cfg.at("transform").get<bool>() && !panel.tcodes.empty())
        panel = mrf::transform_panel(panel);

    Prepared prep;
    prep.data.panel = panel;
    prep.data.y = panel.column(target);
    prep.data.frequency = freq;
    prep.data.dates = panel.dates;
    prep.dates = panel.dates;
    return prep;
}

int date_index(const std::vector<std::string>& dates, const std::string& label,
               mrf::Frequency freq, const char* what) {
    if (label.empty()) throw ConfigError(std::string(what) + " date is required");
    for (std::size_t i = 0; i < dates.size(); ++i)
        if (mrf::compare_period_labels(dates[i], label, freq) == 0) return static_cast<int>(i);
    throw ConfigError(std::string(what) + " date '" + label + "' not found in the dataset range");
}

/// Output-directory helper: artifacts land under cfg["output_dir"].
struct RunDir {
    fs::path dir;
    explicit RunDir(const json& cfg) : dir(cfg.at("output_dir").get<std::string>()) {
        fs::create_directories(dir);
    }
    std::string file(const std::string& name) const { return (dir / name).string(); }
};

void write_manifest(const json& cfg, const std::string& command, const RunDir& run) {
    {
        std::ofstream out(run.file("resolved_config.json"));
        out << cfg.dump(2) << '\n';
    }
    // The hash identifies the computation, not its landing directory.
    json hashed = cfg;
    hashed.erase("output_dir");
    json manifest{
        {"command", command},
        {"config_hash", fnv1a64(hashed.dump(2))},
        {"seed", cfg.at("seed").get<std::uint64_t>()},
        {"mrf_version", mrf::kVersion},
        {"forest_format", mrf::kForestFormatVersion},
    };
    std::ofstream out(run.file("manifest.json"));
    out << manifest.dump(2) << '\n';
}

/// Builds and fits the configured MRF-family model on data through fit_end.
std::unique_ptr<mrf::MrfForecastModel> fit_mrf_model(const json& cfg, const Prepared& prep,
                                                     int fit_end, int h) {
    const std::string kind = cfg.at("model").get<std::string>();
    auto base = mrf::make_benchmark_model(kind, model_config_from(cfg));
    auto* forest_model = dynamic_cast<mrf::MrfForecastModel*>(base.get());
    if (!forest_model)
        throw ConfigError("model '" + kind + "' has no forest part; use one of rf, tiny_rf, "
                          "rf_maf, arrf, tiny_arrf, fa_arrf, varrf for this command");
    base.release();
    std::unique_ptr<mrf::MrfForecastModel> model(forest_model);
    model->fit(prep.data, fit_end, h, cfg.at("seed").get<std::uint64_t>());
    return model;
}

mrf::MrfData model_training_view(const mrf::MrfForecastModel& model, const Prepared& prep,
                                 int fit_end, int h) {
    mrf::MrfData data;
    data.x_names = model.linear_names();
    data.s_names = model.state_names();
    data.y.assign(fit_end, mrf::kNaN);
    for (int t = 0; t + h < fit_end; ++t) data.y[t] = prep.data.y[t + h];
    data.X = mrf::Matrix(fit_end, model.linear_rows().cols());
    data.S = mrf::Matrix(fit_end, model.state_rows().cols());
    for (int t = 0; t < fit_end; ++t) {
        for (int c = 0; c < data.X.cols(); ++c) data.X(t, c) = model.linear_rows()(t, c);
        for (int j = 0; j < data.S.cols(); ++j) data.S(t, j) = model.state_rows()(t, j);
    }
    data.dates.assign(prep.dates.begin(), prep.dates.begin() + fit_end);
    for (int j = 0; j < data.J(); ++j)
        if (data.s_names[j] == "trend") data.trend_col = j;
    return data;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_simulate(const json& cfg) {
    const json& sim = cfg.at("simulate");
    mrf::DgpSpec spec;
    spec.id = sim.at("dgp").get<std::string>();
    spec.T = sim.at("T").get<int>();
    spec.sigma = sim.at("sigma").get<double>();
    spec.seed = cfg.at("seed").get<std::uint64_t>();
    spec.train = sim.at("train").get<int>();

    const int threads = cfg.at("threads").get<int>();
    RunDir run(cfg);

    if (spec.id.rfind("dr", 0) == 0) {
        // Data-rich study: fit on the training span, evaluate the holdout.
        if (spec.T <= spec.train + 10)
            throw ConfigError("simulate: data-rich runs need T well above simulate.train");
        const auto out = mrf::simulate_dgp(spec);
        auto data = mrf::make_dr_mrf_data(out);
        auto train = mrf::truncate_mrf_data(data, spec.train);
        mrf::HyperParams hp = hyper_from(cfg.at("hyper"));
        hp.seed = spec.seed;
        hp.threads = threads;
        auto forest = mrf::fit_forest(train, hp);

        const int T = data.T();
        mrf::Matrix s_hold(T - spec.train, data.J()), x_hold(T - spec.train, data.K());
        for (int t = spec.train; t < T; ++t) {
            for (int j = 0; j < data.J(); ++j) s_hold(t - spec.train, j) = data.S(t, j);
            for (int c = 0; c < data.K(); ++c) x_hold(t - spec.train, c) = data.X(t, c);
        }
        auto proj = mrf::project_gtvp(forest, s_hold, data.s_names, x_hold, data.x_names, threads);

        // OLS on the same linear part.
        std::vector<int> rows;
        for (int t = 2; t < spec.train; ++t) rows.push_back(t);
        std::vector<double> w(rows.size(), 1.0);
        mrf::RidgeSpec ols;
        auto beta_ols = mrf::ridge_wls_solve_rows(data.X, data.y, rows, w, ols).beta;

        double sse_mrf = 0.0, sse_ols = 0.0, sse_oracle = 0.0;
        for (int t = spec.train; t < T; ++t) {
            const double e_m = data.y[t] - proj.prediction[t - spec.train];
            double p_ols = 0.0;
            for (int c = 0; c < data.K(); ++c) p_ols += data.X(t, c) * beta_ols[c];
            const double e_o = data.y[t] - p_ols;
            const double e_star = data.y[t] - mrf::oracle_forecast(out, t - 1, 1);
            sse_mrf += e_m * e_m;
            sse_ols += e_o * e_o;
            sse_oracle += e_star * e_star;
        }
        const int n = T - spec.train;
        std::ofstream csv(run.file("sim_study.csv"));
        csv << "dgp,horizon,model,rmse,oracle_rmse,delta_oracle,n_sims\n";
        const double r_oracle = std::sqrt(sse_oracle / n);
        auto line = [&](const char* name, double sse) {
            const double r = std::sqrt(sse / n);
            csv << spec.id << ",1," << name << ',' << mrf::format_double(r) << ','
                << mrf::format_double(r_oracle) << ',' << mrf::format_double(r / r_oracle - 1.0)
                << ",1\n";
        };
        line("mrf", sse_mrf);
        line("ols", sse_ols);
        {
            std::ofstream bars(run.file("delta_oracle_bars.csv"));
            bars << "model,horizon,delta_oracle\n";
            bars << "mrf,1," << mrf::format_double(std::sqrt(sse_mrf / n) / r_oracle - 1.0) << '\n';
            bars << "ols,1," << mrf::format_double(std::sqrt(sse_ols / n) / r_oracle - 1.0) << '\n';
        }
        write_manifest(cfg, "simulate", run);
        std::cout << "simulate: wrote " << run.file("sim_study.csv") << '\n';
        return 0;
    }

    std::vector<std::string> kinds;
    for (const auto& m : sim.at("models")) kinds.push_back(m.get<std::string>());
    std::vector<int> horizons;
    for (const auto& h : sim.at("horizons")) horizons.push_back(h.get<int>());
    const mrf::ModelConfig mc = model_config_from(cfg);
    auto factory = [&]() {
        std::vector<std::unique_ptr<mrf::ForecastModel>> models;
        for (const auto& kind : kinds) models.push_back(mrf::make_benchmark_model(kind, mc));
        return models;
    };
    auto res = mrf::run_sim_study(spec, factory, horizons, sim.at("sims").get<int>(),
                                  sim.at("holdout").get<int>(), threads);
    mrf::write_sim_study_csv(res, spec.id, run.file("sim_study.csv"));
    {
        std::ofstream bars(run.file("delta_oracle_bars.csv"));
        bars << "model,horizon,delta_oracle\n";
        for (std::size_t m = 0; m < res.models.size(); ++m)
            for (std::size_t hi = 0; hi < res.horizons.size(); ++hi)
                bars << res.models[m] << ',' << res.horizons[hi] << ','
                     << mrf::format_double(res.delta_o(static_cast<int>(hi), static_cast<int>(m)))
                     << '\n';
    }
    write_manifest(cfg, "simulate", run);
    std::cout << "simulate: wrote " << run.file("sim_study.csv") << '\n';
    return 0;
}

int cmd_fit(const json& cfg) {
    Prepared prep = prepare_data(cfg);
    const int h = cfg.at("horizons").at(0).get<int>();
    const int fit_end = prep.data.T();

    RunDir run(cfg);
    auto model = fit_mrf_model(cfg, prep, fit_end, h);
    const mrf::MrfForest& forest = *model->forest();
    auto train = model_training_view(*model, prep, fit_end, h);

    mrf::GtvpOptions opts;
    opts.exclusion_halfwidth = cfg.at("exclusion_halfwidth").get<int>();
    opts.threads = cfg.at("threads").get<int>();
    auto gtvp = mrf::gtvp_paths(forest, train, opts);

    mrf::save_forest(forest, run.file("forest.json"));
    mrf::write_gtvp_csv(gtvp, run.file("gtvp.csv"));

    // 68/90% central bands.
    auto bands = mrf::credible_bands(gtvp, {0.68, 0.90});
    {
        std::ofstream out(run.file("bands.csv"));
        out << "date,coefficient,level,lower,upper\n";
        for (std::size_t li = 0; li < bands.levels.size(); ++li) {
            for (int t = 0; t < gtvp.mean.rows(); ++t)
                for (int c = 0; c < gtvp.mean.cols(); ++c) {
                    if (std::isnan(bands.lower[li](t, c))) continue;
                    out << train.dates[t] << ',' << gtvp.coef_names[c] << ','
                        << bands.levels[li] << ',' << mrf::format_double(bands.lower[li](t, c))
                        << ',' << mrf::format_double(bands.upper[li](t, c)) << '\n';
                }
        }
    }
    {
        std::ofstream out(run.file("fit_summary.txt"));
        out << "model: " << model->name() << "\ntrees: " << forest.B()
            << "\nsolver_fallbacks: " << forest.total_solver_fallbacks << '\n';
        for (const auto& w : gtvp.warnings) out << "warning: " << w << '\n';
    }
    if (cfg.contains("dump_state") && cfg.at("dump_state").get<bool>()) {
        mrf::StateMatrix S;
        S.values = model->state_rows();
        S.names = model->state_names();
        S.groups = model->state_groups();
        S.trend_col = -1;
        for (int j = 0; j < S.J(); ++j)
            if (S.groups[j] == mrf::StateGroup::trend) S.trend_col = j;
        mrf::write_state_csv(S, prep.dates, run.file("state.csv"));
    }
    write_manifest(cfg, "fit", run);
    std::cout << "fit: wrote " << run.file("forest.json") << ", " << run.file("gtvp.csv") << '\n';
    return 0;
}

int cmd_oos(const json& cfg) {
    Prepared prep = prepare_data(cfg);
    const auto freq = frequency_from(cfg);
    const json& oos_cfg = cfg.at("oos");
    mrf::OosSpec spec;
    spec.oos_start = date_index(prep.dates, oos_cfg.at("start").get<std::string>(), freq, "oos.start");
    spec.oos_end = date_index(prep.dates, oos_cfg.at("end").get<std::string>(), freq, "oos.end");
    spec.reestimate_every = oos_cfg.at("reestimate_every").get<int>();
    spec.expanding = oos_cfg.at("scheme").get<std::string>() != "fixed";
    spec.seed = cfg.at("seed").get<std::uint64_t>();
    for (const auto& h : cfg.at("horizons")) spec.horizons.push_back(h.get<int>());

    const mrf::ModelConfig mc = model_config_from(cfg);
    std::vector<std::unique_ptr<mrf::ForecastModel>> models;
    const std::string base_kind = cfg.at("base_model").get<std::string>();
    int base_index = -1;
    for (const auto& m : cfg.at("models")) {
        models.push_back(mrf::make_benchmark_model(m.get<std::string>(), mc));
        if (m.get<std::string>() == base_kind) base_index = static_cast<int>(models.size()) - 1;
    }
    if (models.empty()) throw ConfigError("oos: configure at least one model");
    if (base_index < 0) throw ConfigError("oos: base_model '" + base_kind + "' not in models list");
    spec.base_model = base_index;

    RunDir run(cfg);
    auto report = mrf::run_oos(models, prep.data, spec);
    report.target = cfg.at("target").get<std::string>();
    mrf::write_eval_table_csv(report, run.file("eval_table.csv"));
    mrf::write_eval_tidy_csv(report, run.file("eval_tidy.csv"));
    write_manifest(cfg, "oos", run);
    std::cout << "oos: wrote " << run.file("eval_table.csv") << '\n';
    return 0;
}

int cmd_vi(const json& cfg) {
    Prepared prep = prepare_data(cfg);
    const auto freq = frequency_from(cfg);
    const int h = cfg.at("horizons").at(0).get<int>();
    const json& vi_cfg = cfg.at("vi");

    const std::string oos_start_label = vi_cfg.at("oos_start").get<std::string>();
    bool want_oos = false;
    for (const auto& m : vi_cfg.at("modes")) want_oos |= m.get<std::string>() == "oos";
    int oos_start = -1;
    if (want_oos)
        oos_start = date_index(prep.dates, oos_start_label, freq, "vi.oos_start");

    const int fit_end = want_oos ? oos_start : prep.data.T();
    RunDir run(cfg);
    auto model = fit_mrf_model(cfg, prep, fit_end, h);
    // Evaluation data spans the full sample so the oos mode sees the holdout.
    auto full = model_training_view(*model, prep, prep.data.T(), h);

    for (const auto& mode_j : vi_cfg.at("modes")) {
        const std::string mode = mode_j.get<std::string>();
        mrf::ViOptions opts;
        opts.n_repeats = vi_cfg.at("n_repeats").get<int>();
        opts.seed = cfg.at("seed").get<std::uint64_t>();
        opts.threads = cfg.at("threads").get<int>();
        if (mode == "oob") {
            opts.mode = mrf::ViMode::oob;
        } else if (mode == "oos") {
            opts.mode = mrf::ViMode::oos;
            opts.oos_start = oos_start;
        } else if (mode == "beta") {
            opts.mode = mrf::ViMode::beta;
            opts.beta_index = vi_cfg.at("beta_index").get<int>();
        } else {
            throw ConfigError("vi: unknown mode '" + mode + "'");
        }
        auto report = mrf::variable_importance(*model->forest(), full, opts);
        mrf::write_vi_csv(report, run.file("vi_" + mode + ".csv"));
    }
    write_manifest(cfg, "vi", run);
    std::cout << "vi: wrote reports under " << run.dir.string() << '\n';
    return 0;
}

int cmd_surrogate(const json& cfg) {
    Prepared prep = prepare_data(cfg);
    const int h = cfg.at("horizons").at(0).get<int>();
    const json& sur = cfg.at("surrogate");
    const int coef = sur.at("coefficient").get<int>();
    const int top_k = sur.at("top_k").get<int>();

    RunDir run(cfg);
    const int fit_end = prep.data.T();
    auto model = fit_mrf_model(cfg, prep, fit_end, h);
    auto train = model_training_view(*model, prep, fit_end, h);
    const mrf::MrfForest& forest = *model->forest();
    if (coef < 0 || coef >= forest.K) throw ConfigError("surrogate: coefficient index out of range");

    mrf::GtvpOptions gopts;
    gopts.exclusion_halfwidth = cfg.at("exclusion_halfwidth").get<int>();
    gopts.threads = cfg.at("threads").get<int>();
    auto gtvp = mrf::gtvp_paths(forest, train, gopts);
    std::vector<double> path = gtvp.mean.col(coef);

    // Candidate features: union of the strongest predictors per VI mode.
    std::vector<mrf::ViReport> reports;
    for (mrf::ViMode mode : {mrf::ViMode::oob, mrf::ViMode::beta}) {
        mrf::ViOptions opts;
        opts.mode = mode;
        opts.beta_index = coef;
        opts.n_repeats = cfg.at("vi").at("n_repeats").get<int>();
        opts.seed = cfg.at("seed").get<std::uint64_t>();
        opts.threads = cfg.at("threads").get<int>();
        reports.push_back(mrf::variable_importance(forest, train, opts));
    }
    auto chosen = mrf::top_feature_union(reports, top_k);
    if (chosen.size() < 2) {
        // Degenerate importance: fall back to the full state set.
        chosen.clear();
        for (int j = 0; j < forest.J; ++j) chosen.push_back(j);
    }
    mrf::Matrix features(train.T(), static_cast<int>(chosen.size()));
    std::vector<std::string> names;
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        for (int t = 0; t < train.T(); ++t) features(t, static_cast<int>(i)) = train.S(t, chosen[i]);
        names.push_back(train.s_names[chosen[i]]);
    }
    auto tree = mrf::surrogate_beta_tree(path, features, names, sur.at("cp").get<double>(),
                                         sur.at("min_leaf").get<int>());

    {
        std::ofstream out(run.file("surrogate.txt"));
        out << "coefficient: " << forest.x_names[coef] << "\nR2: " << tree.r2 << '\n'
            << tree.to_text();
    }
    {
        std::ofstream out(run.file("surrogate.json"));
        out << mrf::surrogate_to_json(tree) << '\n';
    }
    {
        std::ofstream out(run.file("surrogate_fit.csv"));
        out << "date,beta,fitted\n";
        for (int t = 0; t < train.T(); ++t) {
            out << train.dates[t] << ',' << mrf::format_double(path[t]) << ','
                << mrf::format_double(tree.fitted[t]) << '\n';
        }
    }
    write_manifest(cfg, "surrogate", run);
    std::cout << "surrogate: wrote " << run.file("surrogate.txt") << '\n';
    return 0;
}

int cmd_project(const json& cfg) {
    Prepared prep = prepare_data(cfg);
    const auto freq = frequency_from(cfg);
    const int h = cfg.at("horizons").at(0).get<int>();
    const std::string split_label = cfg.at("project").at("split").get<std::string>();
    const int split = date_index(prep.dates, split_label, freq, "project.split");
    if (split < 40) throw ConfigError("project: split leaves too little training data");

    RunDir run(cfg);
    auto model = fit_mrf_model(cfg, prep, split, h);
    const mrf::MrfForest& forest = *model->forest();

    const int T = prep.data.T();
    mrf::Matrix s_future(T - split, forest.J), x_future(T - split, forest.K);
    for (int t = split; t < T; ++t) {
        for (int j = 0; j < forest.J; ++j) s_future(t - split, j) = model->state_rows()(t, j);
        for (int c = 0; c < forest.K; ++c) x_future(t - split, c) = model->linear_rows()(t, c);
    }
    auto proj = mrf::project_gtvp(forest, s_future, model->state_names(), x_future,
                                  model->linear_names(), cfg.at("threads").get<int>());

    std::ofstream out(run.file("projected.csv"));
    out << "date";
    for (const auto& n : model->linear_names()) out << ",beta_" << n;
    out << ",prediction\n";
    for (int t = split; t < T; ++t) {
        out << prep.dates[t];
        for (int c = 0; c < forest.K; ++c)
            out << ',' << mrf::format_double(proj.beta(t - split, c));
        out << ',' << mrf::format_double(proj.prediction[t - split]) << '\n';
    }
    write_manifest(cfg, "project", run);
    std::cout << "project: wrote " << run.file("projected.csv") << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Macroeconomic Random Forests: tree ensembles with linear leaves, "
                 "generalized time-varying parameters and a forecasting harness"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
    int threads = -1;
    std::uint64_t seed = 0;
    bool seed_given = false;

    std::string dgp;
    int sim_T = -1, sims = -1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--set", sets, "override config entries, e.g. --set hyper.lambda=0.25");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--threads", threads, "worker thread cap (0 = all cores)");
        cmd->add_option_function<std::uint64_t>(
            "--seed", [&](std::uint64_t s) { seed = s; seed_given = true; }, "RNG seed");
    };

    CLI::App* c_sim = app.add_subcommand("simulate", "run a simulation study on a DGP");
    add_common(c_sim);
    c_sim->add_option("--dgp", dgp, "DGP id (ar1..ar6, dr1..dr6)");
    c_sim->add_option("--T", sim_T, "sample size");
    c_sim->add_option("--sims", sims, "number of replications");

    CLI::App* c_fit = app.add_subcommand("fit", "fit a forest and export GTVP paths");
    add_common(c_fit);
    CLI::App* c_oos = app.add_subcommand("oos", "pseudo-out-of-sample evaluation harness");
    add_common(c_oos);
    CLI::App* c_vi = app.add_subcommand("vi", "permutation variable importance");
    add_common(c_vi);
    CLI::App* c_sur = app.add_subcommand("surrogate", "surrogate tree for a coefficient path");
    add_common(c_sur);
    CLI::App* c_proj = app.add_subcommand("project", "out-of-sample coefficient projection");
    add_common(c_proj);

    CLI11_PARSE(app, argc, argv);

    try {
        json cfg = default_config();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw ConfigError("cannot open config file '" + config_path + "'");
            json user;
            try {
                in >> user;
            } catch (const std::exception& e) {
                throw ConfigError("config parse error in '" + config_path + "': " + e.what());
            }
            deep_merge(cfg, user);
        }
        for (const auto& kv : sets) apply_set(cfg, kv);
        if (!out_dir.empty()) cfg["output_dir"] = out_dir;
        if (threads >= 0) cfg["threads"] = threads;
        if (seed_given) cfg["seed"] = seed;
        if (!dgp.empty()) cfg["simulate"]["dgp"] = dgp;
        if (sim_T > 0) cfg["simulate"]["T"] = sim_T;
        if (sims > 0) cfg["simulate"]["sims"] = sims;

        if (const char* env = std::getenv("MRF_THREADS"); env && cfg.at("threads").get<int>() == 0)
            cfg["threads"] = std::atoi(env);

        // Monthly data gets the monthly defaults (blocks of 24, node floor 15)
        // unless the user overrode the quarterly ones explicitly.
        const std::string freq = cfg.at("frequency").get<std::string>();
        if (freq == "monthly" || freq == "m") {
            if (cfg["hyper"]["block_size"].get<int>() == 8) cfg["hyper"]["block_size"] = 24;
            if (cfg["hyper"]["min_node_size"].get<int>() == 10) cfg["hyper"]["min_node_size"] = 15;
        }

        if (c_sim->parsed()) return cmd_simulate(cfg);
        if (c_fit->parsed()) return cmd_fit(cfg);
        if (c_oos->parsed()) return cmd_oos(cfg);
        if (c_vi->parsed()) return cmd_vi(cfg);
        if (c_sur->parsed()) return cmd_surrogate(cfg);
        if (c_proj->parsed()) return cmd_project(cfg);
        std::cerr << "no subcommand\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

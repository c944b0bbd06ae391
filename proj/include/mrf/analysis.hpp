#ifndef MRF_ANALYSIS_HPP
#define MRF_ANALYSIS_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrf/forest.hpp"
#include "mrf/matrix.hpp"
#include "mrf/parallel.hpp"
#include "mrf/rng.hpp"

namespace mrf {

// ---------------------------------------------------------------------------
// Permutation variable importance
// ---------------------------------------------------------------------------

enum class ViMode { oob, oos, beta };

inline const char* vi_mode_name(ViMode m) {
    switch (m) {
        case ViMode::oob: return "oob";
        case ViMode::oos: return "oos";
        case ViMode::beta: return "beta";
    }
    return "?";
}

struct ViOptions {
    ViMode mode = ViMode::oob;
    int beta_index = 0;   // beta mode: which coefficient path
    int oos_start = -1;   // oos mode: evaluation rows are [oos_start, T)
    int n_repeats = 5;
    std::uint64_t seed = 0;
    std::vector<int> group_ids;  // optional: co-permute features sharing a group
    int threads = 0;
};

struct ViReport {
    ViMode mode = ViMode::oob;
    std::vector<std::string> feature_names;
    std::vector<double> scores;  // % RMSE increase, or RMS path deviation in beta mode
    int n_repeats = 0;
    std::uint64_t seed = 0;

    std::vector<int> ranking() const {
        std::vector<int> order(scores.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return a < b;
        });
        return order;
    }
};

namespace detail {

/// Rows and tree sets used to evaluate one VI mode.
struct ViEvalPlan {
    std::vector<int> rows;
    std::vector<std::vector<int>> trees_per_row;  // aligned with rows
};

inline ViEvalPlan vi_plan(const MrfForest& forest, const ViOptions& opts) {
    ViEvalPlan plan;
    const int T = forest.T;
    const bool oob = opts.mode != ViMode::oos && !forest.hp.bayes_block_weights;
    const int start = opts.mode == ViMode::oos ? opts.oos_start : 0;
    if (opts.mode == ViMode::oos && (opts.oos_start < 0 || opts.oos_start >= T))
        throw std::invalid_argument("variable_importance: oos mode needs a holdout start within the sample");
    for (int t = start; t < T; ++t) {
        if (!forest.usable[t]) continue;
        std::vector<int> trees;
        if (oob) {
            for (int b = 0; b < forest.B(); ++b)
                if (!forest.inbag[b][t]) trees.push_back(b);
            if (trees.empty()) continue;
        } else {
            trees.resize(forest.B());
            for (int b = 0; b < forest.B(); ++b) trees[b] = b;
        }
        plan.rows.push_back(t);
        plan.trees_per_row.push_back(std::move(trees));
    }
    if (plan.rows.empty()) throw std::invalid_argument("variable_importance: no evaluable rows");
    return plan;
}

/// Prediction (or beta_k) per planned row under the given state matrix.
inline std::vector<double> vi_evaluate(const MrfForest& forest, const MrfData& data,
                                       const Matrix& S_used, const ViEvalPlan& plan,
                                       const ViOptions& opts) {
    std::vector<double> out(plan.rows.size(), 0.0);
    for (std::size_t i = 0; i < plan.rows.size(); ++i) {
        const int t = plan.rows[i];
        const auto& trees = plan.trees_per_row[i];
        double acc = 0.0;
        for (int b : trees) {
            const auto& tree = forest.trees[b];
            const int leaf = tree.leaf_for(S_used.row_ptr(t), forest.J);
            if (opts.mode == ViMode::beta) {
                acc += tree.nodes[leaf].beta[opts.beta_index];
            } else {
                double p = 0.0;
                for (int c = 0; c < forest.K; ++c)
                    p += data.X(t, c) * tree.nodes[leaf].beta[c];
                acc += p;
            }
        }
        out[i] = acc / trees.size();
    }
    return out;
}

inline double rmse_against(const std::vector<double>& pred, const std::vector<double>& y,
                           const std::vector<int>& rows) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double e = y[rows[i]] - pred[i];
        s += e * e;
    }
    return std::sqrt(s / rows.size());
}

inline double rms_deviation(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s / a.size());
}

}  // namespace detail

/// Permutation importance. Prediction modes score the percentage RMSE
/// increase from shuffling a feature; beta mode scores the root-mean-square
/// displacement of the chosen coefficient path. Features that never appear in
/// a split score exactly zero.
inline ViReport variable_importance(const MrfForest& forest, const MrfData& data,
                                    const ViOptions& opts = ViOptions()) {
    data.validate();
    if (opts.mode == ViMode::beta && (opts.beta_index < 0 || opts.beta_index >= forest.K))
        throw std::invalid_argument("variable_importance: beta index out of range");
    if (opts.n_repeats < 1) throw std::invalid_argument("variable_importance: n_repeats must be >= 1");
    if (!opts.group_ids.empty() && static_cast<int>(opts.group_ids.size()) != forest.J)
        throw std::invalid_argument("variable_importance: group_ids length mismatch");

    const auto plan = detail::vi_plan(forest, opts);
    const auto base_pred = detail::vi_evaluate(forest, data, data.S, plan, opts);
    const double base_metric = opts.mode == ViMode::beta
                                   ? 0.0
                                   : detail::rmse_against(base_pred, data.y, plan.rows);

    ViReport report;
    report.mode = opts.mode;
    report.feature_names = data.s_names;
    report.scores.assign(forest.J, 0.0);
    report.n_repeats = opts.n_repeats;
    report.seed = opts.seed;

    parallel_for(forest.J, resolve_threads(opts.threads), [&](int j) {
        auto rng = make_stream(opts.seed, static_cast<std::uint64_t>(j), 0x7669);
        double acc = 0.0;
        for (int rep = 0; rep < opts.n_repeats; ++rep) {
            Matrix S_perm = data.S;
            std::vector<int> perm(plan.rows.size());
            for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
            shuffle_in_place(rng, perm);
            auto apply_perm = [&](int col) {
                for (std::size_t i = 0; i < plan.rows.size(); ++i)
                    S_perm(plan.rows[i], col) = data.S(plan.rows[perm[i]], col);
            };
            if (opts.group_ids.empty()) {
                apply_perm(j);
            } else {
                for (int c = 0; c < forest.J; ++c)
                    if (opts.group_ids[c] == opts.group_ids[j]) apply_perm(c);
            }
            const auto perm_pred = detail::vi_evaluate(forest, data, S_perm, plan, opts);
            if (opts.mode == ViMode::beta) {
                acc += detail::rms_deviation(perm_pred, base_pred);
            } else {
                const double perm_metric = detail::rmse_against(perm_pred, data.y, plan.rows);
                acc += 100.0 * (perm_metric / base_metric - 1.0);
            }
        }
        report.scores[j] = acc / opts.n_repeats;
    });
    return report;
}

/// Union of the strongest features across several VI reports (top `k` each).
inline std::vector<int> top_feature_union(const std::vector<ViReport>& reports, int k = 20) {
    std::set<int> chosen;
    for (const auto& rep : reports) {
        const auto order = rep.ranking();
        for (int i = 0; i < std::min<int>(k, static_cast<int>(order.size())); ++i)
            if (rep.scores[order[i]] > 0.0) chosen.insert(order[i]);
    }
    return std::vector<int>(chosen.begin(), chosen.end());
}

inline void write_vi_csv(const ViReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_vi_csv: cannot open '" + path + "'");
    out << "feature,mode,score,n_repeats,seed\n";
    for (std::size_t j = 0; j < report.feature_names.size(); ++j)
        out << report.feature_names[j] << ',' << vi_mode_name(report.mode) << ','
            << format_double(report.scores[j]) << ',' << report.n_repeats << ',' << report.seed
            << '\n';
}

// ---------------------------------------------------------------------------
// Surrogate trees for coefficient paths
// ---------------------------------------------------------------------------

struct SurrogateNode {
    int feature = -1;  // -1 = leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double value = 0.0;       // node mean
    int n = 0;                // observations
    double gain = 0.0;        // deviance reduction of this node's split
    bool is_leaf() const { return feature < 0; }
};

/// A cost-complexity pruned CART regression tree explaining one beta path in
/// terms of a handful of state variables.
struct SurrogateTree {
    std::vector<SurrogateNode> nodes;
    std::vector<std::string> feature_names;
    double cp = 0.075;
    double r2 = kNaN;
    std::vector<double> fitted;  // aligned with the input path (NaN off the fit range)
    std::string note;

    int predict_leaf(const double* row) const {
        int id = 0;
        while (!nodes[id].is_leaf()) {
            const double v = row[nodes[id].feature];
            id = (std::isnan(v) || v <= nodes[id].threshold) ? nodes[id].left : nodes[id].right;
        }
        return id;
    }

    int n_leaves() const {
        int n = 0;
        for (const auto& nd : nodes) n += nd.is_leaf();
        return n;
    }

    std::string to_text() const {
        std::ostringstream os;
        auto rec = [&](auto&& self, int id, int depth) -> void {
            for (int i = 0; i < depth; ++i) os << "  ";
            const auto& nd = nodes[id];
            if (nd.is_leaf()) {
                os << "leaf value=" << nd.value << " n=" << nd.n << '\n';
                return;
            }
            os << feature_names[nd.feature] << " <= " << nd.threshold << " (n=" << nd.n << ")\n";
            self(self, nd.left, depth + 1);
            for (int i = 0; i < depth; ++i) os << "  ";
            os << feature_names[nd.feature] << " >  " << nd.threshold << '\n';
            self(self, nd.right, depth + 1);
        };
        rec(rec, 0, 0);
        return os.str();
    }
};

namespace detail {

struct SurrogateGrow {
    const Matrix* F;
    const std::vector<double>* path;
    int min_leaf;
    std::vector<SurrogateNode>* nodes;

    double mean_over(const std::vector<int>& idx) const {
        double s = 0.0;
        for (int t : idx) s += (*path)[t];
        return s / idx.size();
    }
    double sse_over(const std::vector<int>& idx, double m) const {
        double s = 0.0;
        for (int t : idx) s += ((*path)[t] - m) * ((*path)[t] - m);
        return s;
    }

    int grow(std::vector<int> members) {
        const double mean = mean_over(members);
        const double node_sse = sse_over(members, mean);
        const int id = static_cast<int>(nodes->size());
        nodes->emplace_back();
        (*nodes)[id].value = mean;
        (*nodes)[id].n = static_cast<int>(members.size());

        int best_j = -1;
        double best_c = 0.0, best_obj = kInfeasible;
        if (static_cast<int>(members.size()) >= 2 * min_leaf && node_sse > 0.0) {
            for (int j = 0; j < F->cols(); ++j) {
                std::vector<double> vals;
                vals.reserve(members.size());
                for (int t : members) vals.push_back((*F)(t, j));
                for (double c : candidate_thresholds(vals, 200)) {
                    std::vector<int> l, r;
                    for (int t : members) ((*F)(t, j) <= c ? l : r).push_back(t);
                    if (static_cast<int>(l.size()) < min_leaf ||
                        static_cast<int>(r.size()) < min_leaf)
                        continue;
                    const double obj = sse_over(l, mean_over(l)) + sse_over(r, mean_over(r));
                    if (obj < best_obj) {
                        best_j = j;
                        best_c = c;
                        best_obj = obj;
                    }
                }
            }
        }
        if (best_j < 0 || !(best_obj < node_sse * (1.0 - 1e-12))) return id;

        std::vector<int> l, r;
        for (int t : members) ((*F)(t, best_j) <= best_c ? l : r).push_back(t);
        (*nodes)[id].feature = best_j;
        (*nodes)[id].threshold = best_c;
        (*nodes)[id].gain = node_sse - best_obj;
        const int li = grow(std::move(l));
        (*nodes)[id].left = li;
        const int ri = grow(std::move(r));
        (*nodes)[id].right = ri;
        return id;
    }
};

/// Collapses every split whose own deviance reduction does not exceed
/// cp * root deviance (and everything below it).
inline std::vector<SurrogateNode> prune_surrogate(const std::vector<SurrogateNode>& grown,
                                                  double cp, double root_deviance) {
    std::vector<SurrogateNode> pruned;
    auto rec = [&](auto&& self, int id) -> int {
        const SurrogateNode& nd = grown[id];
        const int out = static_cast<int>(pruned.size());
        pruned.push_back(nd);
        if (nd.is_leaf() || !(nd.gain > cp * root_deviance)) {
            pruned[out].feature = -1;
            pruned[out].left = pruned[out].right = -1;
            pruned[out].gain = 0.0;
            return out;
        }
        const int l = self(self, nd.left);
        pruned[out].left = l;
        const int r = self(self, nd.right);
        pruned[out].right = r;
        return out;
    };
    rec(rec, 0);
    return pruned;
}

}  // namespace detail

/// Fits and cost-complexity prunes a CART regression tree for a coefficient
/// path over candidate state features. A split survives pruning only when its
/// own deviance reduction exceeds cp times the root deviance.
inline SurrogateTree surrogate_beta_tree(const std::vector<double>& beta_path, const Matrix& features,
                                         const std::vector<std::string>& feature_names,
                                         double cp = 0.075, int min_leaf = 10) {
    if (features.cols() < 2)
        throw std::invalid_argument("surrogate_beta_tree: need at least two candidate features");
    if (static_cast<int>(beta_path.size()) != features.rows())
        throw std::invalid_argument("surrogate_beta_tree: path and feature rows differ");
    if (static_cast<int>(feature_names.size()) != features.cols())
        throw std::invalid_argument("surrogate_beta_tree: feature names out of sync");
    if (min_leaf < 1) throw std::invalid_argument("surrogate_beta_tree: min_leaf must be >= 1");

    std::vector<int> fit_rows;
    for (int t = 0; t < features.rows(); ++t)
        if (std::isfinite(beta_path[t]) && row_is_finite(features, t)) fit_rows.push_back(t);
    if (static_cast<int>(fit_rows.size()) < min_leaf)
        throw std::invalid_argument("surrogate_beta_tree: not enough rows with a defined path");

    SurrogateTree tree;
    tree.feature_names = feature_names;
    tree.cp = cp;

    std::vector<SurrogateNode> grown;
    detail::SurrogateGrow g{&features, &beta_path, min_leaf, &grown};
    g.grow(fit_rows);

    const double root_mean = grown[0].value;
    double root_dev = 0.0;
    for (int t : fit_rows) root_dev += (beta_path[t] - root_mean) * (beta_path[t] - root_mean);

    tree.nodes = root_dev > 0.0 ? detail::prune_surrogate(grown, cp, root_dev)
                                : std::vector<SurrogateNode>{grown[0]};
    if (root_dev == 0.0) {
        tree.nodes[0].feature = -1;
        tree.nodes[0].left = tree.nodes[0].right = -1;
        tree.note = "constant path: root-only tree, R^2 undefined";
    }

    tree.fitted.assign(beta_path.size(), kNaN);
    double sse = 0.0;
    for (int t : fit_rows) {
        const int leaf = tree.predict_leaf(features.row_ptr(t));
        tree.fitted[t] = tree.nodes[leaf].value;
        sse += (beta_path[t] - tree.fitted[t]) * (beta_path[t] - tree.fitted[t]);
    }
    tree.r2 = root_dev > 0.0 ? 1.0 - sse / root_dev : kNaN;
    return tree;
}

/// Machine-readable rendering of the surrogate splits (one object per node).
inline std::string surrogate_to_json(const SurrogateTree& tree) {
    std::ostringstream os;
    os << "{\"cp\":" << format_double(tree.cp) << ",\"r2\":";
    os << (std::isnan(tree.r2) ? "null" : format_double(tree.r2));
    os << ",\"nodes\":[";
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        const auto& nd = tree.nodes[i];
        if (i) os << ',';
        if (nd.is_leaf()) {
            os << "{\"leaf\":true,\"value\":" << format_double(nd.value) << ",\"n\":" << nd.n << "}";
        } else {
            os << "{\"feature\":\"" << tree.feature_names[nd.feature]
               << "\",\"threshold\":" << format_double(nd.threshold) << ",\"left\":" << nd.left
               << ",\"right\":" << nd.right << ",\"n\":" << nd.n << "}";
        }
    }
    os << "]}";
    return os.str();
}

}  // namespace mrf

#endif  // MRF_ANALYSIS_HPP

#ifndef MRF_TREE_HPP
#define MRF_TREE_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrf/matrix.hpp"
#include "mrf/ridge_wls.hpp"
#include "mrf/rng.hpp"

namespace mrf {

/// Ensemble hyperparameters. Defaults follow the quarterly configuration:
/// node floor 10, blocks of 8 observations, 75% subsampling, mtry 1/3.
struct HyperParams {
    double mtry_frac = 1.0 / 3.0;
    int min_node_size = 10;     // parent floor to attempt a split
    double mlf = -1.0;          // minimum leaf fraction; < 0 = auto (1 if lambda>0 or zeta>0, else 2)
    double lambda = 0.5;
    double zeta = 0.8;
    double trend_push = 1.0;    // multiplier on the trend column's mtry weight
    int max_candidates = 50;    // threshold candidates kept per feature
    double subsample_rate = 0.75;
    int block_size = 8;
    int n_trees = 100;
    std::uint64_t seed = 0;
    bool bayes_block_weights = false;  // Exp(1) block weights instead of subsampling
    bool standardize = true;
    int threads = 0;  // 0 = all hardware threads

    double effective_mlf() const {
        if (mlf >= 0.0) return mlf;
        return (lambda > 0.0 || zeta > 0.0) ? 1.0 : 2.0;
    }
    /// Children below this observation count are never created.
    int min_child(int K) const {
        const double floor_obs = std::ceil(effective_mlf() * K);
        return std::max(1, static_cast<int>(floor_obs));
    }
    int mtry_count(int J) const {
        const int m = static_cast<int>(std::ceil(mtry_frac * J));
        return std::min(std::max(m, 1), J);
    }

    void validate(int J, int K, int T) const {
        if (!(mtry_frac > 0.0 && mtry_frac <= 1.0))
            throw std::invalid_argument("HyperParams: mtry_frac must be in (0, 1]");
        if (mtry_count(J) < 1) throw std::invalid_argument("HyperParams: mtry_frac * J rounds below 1");
        if (min_node_size < 1) throw std::invalid_argument("HyperParams: min_node_size must be >= 1");
        if (lambda < 0.0) throw std::invalid_argument("HyperParams: lambda must be >= 0");
        if (!(zeta >= 0.0 && zeta < 1.0)) throw std::invalid_argument("HyperParams: zeta must be in [0, 1)");
        if (trend_push < 1.0) throw std::invalid_argument("HyperParams: trend_push must be >= 1");
        if (max_candidates < 1) throw std::invalid_argument("HyperParams: max_candidates must be >= 1");
        if (!(subsample_rate > 0.0 && subsample_rate <= 1.0))
            throw std::invalid_argument("HyperParams: subsample_rate must be in (0, 1]");
        if (block_size < 1) throw std::invalid_argument("HyperParams: block_size must be >= 1");
        if (n_trees < 1) throw std::invalid_argument("HyperParams: n_trees must be >= 1");
        (void)K;
        (void)T;
    }
};

/// One node of an MRF tree: internal nodes route on (feature, threshold),
/// leaves hold the local linear model and their member time indices.
struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<double> beta;  // leaves only
    std::vector<int> members;  // leaves only: training time indices
    bool is_leaf() const { return feature < 0; }
};

struct MrfTree {
    std::vector<TreeNode> nodes;  // node 0 is the root
    std::uint64_t rng_stream_id = 0;
    int n_solver_fallbacks = 0;

    int leaf_for(const double* s_row, int J, bool* nan_routed = nullptr) const {
        (void)J;
        int id = 0;
        while (!nodes[id].is_leaf()) {
            const double v = s_row[nodes[id].feature];
            if (std::isnan(v)) {
                if (nan_routed) *nan_routed = true;
                id = nodes[id].left;
            } else {
                id = (v <= nodes[id].threshold) ? nodes[id].left : nodes[id].right;
            }
        }
        return id;
    }
};

/// Everything a split search needs besides the node itself. `row_weights`
/// (optional) carries Bayesian-bootstrap block weights into every fit.
struct TreeContext {
    const Matrix* S = nullptr;
    const Matrix* X = nullptr;
    const std::vector<double>* y = nullptr;
    std::vector<char> usable;      // rows with finite y, X and S
    RidgeSpec leaf_spec;           // lambda, prior, standardization scales
    double zeta = 0.0;
    int trend_col = -1;
    std::vector<double> row_weights;  // empty or length T
};

/// Midpoints between consecutive sorted unique values, thinned to at most
/// max_candidates positions chosen at evenly spaced (integer) quantiles.
/// This grid is part of the split-search contract: given the same node
/// values, any implementation sees the same candidate set.
inline std::vector<double> candidate_thresholds(std::vector<double> values, int max_candidates) {
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    if (values.size() < 2) return {};
    std::vector<double> mids(values.size() - 1);
    for (std::size_t i = 0; i + 1 < values.size(); ++i) mids[i] = (values[i] + values[i + 1]) / 2.0;
    const int M = static_cast<int>(mids.size());
    if (M <= max_candidates) return mids;
    std::vector<double> out;
    out.reserve(max_candidates);
    int prev_idx = -1;
    for (int i = 0; i < max_candidates; ++i) {
        const int idx = static_cast<int>((static_cast<long long>(i + 1) * M) / (max_candidates + 1));
        const int clipped = std::min(std::max(idx, 0), M - 1);
        if (clipped != prev_idx) {
            out.push_back(mids[clipped]);
            prev_idx = clipped;
        }
    }
    return out;
}

/// Draws the mtry feature subset for one split: ceil(mtry_frac * J) distinct
/// columns, the trend column's weight multiplied by trend_push. Returned
/// sorted ascending so the search scans features in index order.
inline std::vector<int> draw_split_features(std::mt19937_64& rng, int J, const HyperParams& hp,
                                            int trend_col) {
    const int m = hp.mtry_count(J);
    std::vector<int> feats;
    if (hp.trend_push > 1.0 && trend_col >= 0) {
        std::vector<double> w(J, 1.0);
        w[trend_col] = hp.trend_push;
        feats = weighted_sample_without_replacement(rng, w, m);
    } else {
        feats = sample_without_replacement(rng, J, m);
    }
    std::sort(feats.begin(), feats.end());
    return feats;
}

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double objective = kInfeasible;
};

/// split_objective with the tree context applied (row weights folded into the
/// podium weights).
inline double split_objective_ctx(int feature, double threshold, const std::vector<int>& node,
                                  const TreeContext& ctx, int min_child) {
    std::vector<int> left, right;
    left.reserve(node.size());
    right.reserve(node.size());
    for (int t : node) {
        if ((*ctx.S)(t, feature) <= threshold)
            left.push_back(t);
        else
            right.push_back(t);
    }
    if (static_cast<int>(left.size()) < min_child || static_cast<int>(right.size()) < min_child)
        return kInfeasible;

    const int T = static_cast<int>(ctx.y->size());
    double total = 0.0;
    std::vector<int> rows;
    std::vector<double> w;
    for (const auto* child : {&left, &right}) {
        podium_rows(*child, ctx.zeta, T, ctx.usable, rows, w);
        if (!ctx.row_weights.empty())
            for (std::size_t i = 0; i < rows.size(); ++i) w[i] *= ctx.row_weights[rows[i]];
        try {
            total += ridge_wls_solve_rows(*ctx.X, *ctx.y, rows, w, ctx.leaf_spec).weighted_sse;
        } catch (const rank_deficiency_error&) {
            return kInfeasible;
        } catch (const std::invalid_argument&) {
            return kInfeasible;
        }
    }
    return total;
}

/// Candidate split evaluation against a plain data triplet: the sum of the
/// two children's weighted SSE under their podium-expanded ridge fits
/// (penalty term not included in the reported value). Children failing the
/// size floor yield an infeasible sentinel that is never selected.
inline double split_objective(int feature, double threshold, const std::vector<int>& node,
                              const Matrix& X, const std::vector<double>& y, const Matrix& S,
                              const RidgeSpec& spec, double zeta, int min_child,
                              const std::vector<char>& usable) {
    TreeContext ctx;
    ctx.S = &S;
    ctx.X = &X;
    ctx.y = &y;
    ctx.usable = usable;
    ctx.leaf_spec = spec;
    ctx.zeta = zeta;
    return split_objective_ctx(feature, threshold, node, ctx, min_child);
}

/// Greedy split search over a random feature subset. Returns the feasible
/// (j, c) minimizing the two-child podium-ridge objective, or nullopt when no
/// candidate improves on the parent by at least 1e-10 relative. Ties resolve
/// to the lowest feature index, then the lowest threshold (guaranteed by the
/// ascending scan with strict improvement).
inline std::optional<SplitChoice> best_split(const std::vector<int>& node, const HyperParams& hp,
                                             const TreeContext& ctx, double parent_sse,
                                             std::mt19937_64& rng) {
    const int J = ctx.S->cols();
    const int K = ctx.X->cols();
    const std::vector<int> feats = draw_split_features(rng, J, hp, ctx.trend_col);
    const int min_child = hp.min_child(K);

    SplitChoice best;
    std::vector<double> vals;
    vals.reserve(node.size());
    for (int j : feats) {
        vals.clear();
        for (int t : node) vals.push_back((*ctx.S)(t, j));
        const std::vector<double> cands = candidate_thresholds(vals, hp.max_candidates);
        for (double c : cands) {
            const double obj = split_objective_ctx(j, c, node, ctx, min_child);
            if (obj < best.objective) best = {j, c, obj};
        }
    }
    if (best.feature < 0) return std::nullopt;
    if (!(best.objective < parent_sse)) return std::nullopt;
    if (!((parent_sse - best.objective) >= 1e-10 * parent_sse)) return std::nullopt;
    return best;
}

namespace detail {

inline double weighted_sse_at(const Matrix& X, const std::vector<double>& y,
                              const std::vector<int>& rows, const std::vector<double>& w,
                              const std::vector<double>& beta) {
    double sse = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (w[i] == 0.0) continue;
        const double* xr = X.row_ptr(rows[i]);
        double r = y[rows[i]];
        for (int c = 0; c < X.cols(); ++c) r -= xr[c] * beta[c];
        sse += w[i] * r * r;
    }
    return sse;
}

struct NodeFit {
    std::vector<double> beta;
    double sse = 0.0;
    bool fallback = false;
};

inline NodeFit fit_node(const std::vector<int>& node, const TreeContext& ctx,
                        const std::vector<double>& parent_beta) {
    const int T = static_cast<int>(ctx.y->size());
    std::vector<int> rows;
    std::vector<double> w;
    podium_rows(node, ctx.zeta, T, ctx.usable, rows, w);
    if (!ctx.row_weights.empty())
        for (std::size_t i = 0; i < rows.size(); ++i) w[i] *= ctx.row_weights[rows[i]];
    NodeFit fit;
    try {
        RidgeFit rf = ridge_wls_solve_rows(*ctx.X, *ctx.y, rows, w, ctx.leaf_spec);
        fit.beta = std::move(rf.beta);
        fit.sse = rf.weighted_sse;
    } catch (const std::exception&) {
        fit.beta = parent_beta;
        fit.sse = weighted_sse_at(*ctx.X, *ctx.y, rows, w, fit.beta);
        fit.fallback = true;
    }
    return fit;
}

}  // namespace detail

/// Grows one MRF tree by recursive greedy splitting, no pruning. Leaves whose
/// ridge solve fails inherit the parent's coefficients (counted in
/// n_solver_fallbacks). Deterministic given (data, hp, rng state).
inline MrfTree grow_tree(const std::vector<int>& sample, const HyperParams& hp,
                         const TreeContext& ctx, std::mt19937_64& rng) {
    const int K = ctx.X->cols();
    if (static_cast<int>(sample.size()) < hp.min_child(K))
        throw std::invalid_argument("grow_tree: sample smaller than the leaf floor");

    MrfTree tree;

    // Depth-first, left child first, so the RNG consumption order is part of
    // the growth contract.
    struct Rec {
        std::vector<int> members;
        std::vector<double> parent_beta;
        int slot;  // index into tree.nodes
    };

    std::vector<double> root_parent = ctx.leaf_spec.prior_mean.empty()
                                          ? std::vector<double>(K, 0.0)
                                          : ctx.leaf_spec.prior_mean;

    // Recursive growth via an explicit function to keep rng order obvious.
    auto grow_rec = [&](auto&& self, std::vector<int> members,
                        const std::vector<double>& parent_beta) -> int {
        detail::NodeFit fit = detail::fit_node(members, ctx, parent_beta);
        if (fit.fallback) ++tree.n_solver_fallbacks;

        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();

        std::optional<SplitChoice> split;
        if (static_cast<int>(members.size()) >= hp.min_node_size)
            split = best_split(members, hp, ctx, fit.sse, rng);

        if (!split) {
            tree.nodes[id].feature = -1;
            tree.nodes[id].beta = std::move(fit.beta);
            tree.nodes[id].members = std::move(members);
            return id;
        }

        std::vector<int> left, right;
        for (int t : members) {
            if ((*ctx.S)(t, split->feature) <= split->threshold)
                left.push_back(t);
            else
                right.push_back(t);
        }
        tree.nodes[id].feature = split->feature;
        tree.nodes[id].threshold = split->threshold;
        const int l = self(self, std::move(left), fit.beta);
        tree.nodes[id].left = l;
        const int r = self(self, std::move(right), fit.beta);
        tree.nodes[id].right = r;
        return id;
    };

    grow_rec(grow_rec, sample, root_parent);
    return tree;
}

struct TreeApplyResult {
    double prediction = 0.0;
    const std::vector<double>* beta = nullptr;
    bool nan_routed = false;
};

/// Routes one observation through the tree (left on S_j <= c; NaN routing
/// features go left and are flagged) and evaluates the leaf's linear model.
inline TreeApplyResult tree_apply(const MrfTree& tree, const double* s_row, int J,
                                  const double* x_row, int K) {
    TreeApplyResult res;
    const int leaf = tree.leaf_for(s_row, J, &res.nan_routed);
    res.beta = &tree.nodes[leaf].beta;
    double p = 0.0;
    for (int c = 0; c < K; ++c) p += x_row[c] * (*res.beta)[c];
    res.prediction = p;
    return res;
}

}  // namespace mrf

#endif  // MRF_TREE_HPP

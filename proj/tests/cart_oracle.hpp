// Independently coded standard regression forest (CART splits, mean leaves).
// Shares only the documented protocol surfaces with the library: the RNG
// stream derivation, the mtry draw helper and the candidate-threshold grid.
// Split evaluation, growth and prediction are reimplemented from scratch so
// the plain-RF restriction of the MRF engine can be checked against it.
#ifndef MRF_TEST_CART_ORACLE_HPP
#define MRF_TEST_CART_ORACLE_HPP

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "mrf/matrix.hpp"
#include "mrf/rng.hpp"
#include "mrf/tree.hpp"

namespace oracle {

struct CartNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1, right = -1;
    double value = 0.0;  // leaf mean
};

struct CartTree {
    std::vector<CartNode> nodes;

    double predict(const double* s_row) const {
        int id = 0;
        while (nodes[id].feature >= 0) {
            const double v = s_row[nodes[id].feature];
            id = (std::isnan(v) || v <= nodes[id].threshold) ? nodes[id].left : nodes[id].right;
        }
        return nodes[id].value;
    }
};

namespace detail {

inline double mean_over(const std::vector<double>& y, const std::vector<int>& idx) {
    double s = 0.0;
    for (int t : idx) s += y[t];
    return s / static_cast<double>(idx.size());
}

inline double sse_over(const std::vector<double>& y, const std::vector<int>& idx, double mean) {
    double s = 0.0;
    for (int t : idx) {
        const double r = y[t] - mean;
        s += r * r;
    }
    return s;
}

}  // namespace detail

/// Grows one CART regression tree on `sample`, mirroring the library's
/// growth protocol (depth-first, left first; one mtry draw per node of
/// sufficient size; strict-improvement rule) with variance-reduction splits.
inline CartTree grow_cart_tree(const std::vector<int>& sample, const mrf::Matrix& S,
                               const std::vector<double>& y, int min_node_size, int min_child,
                               double mtry_frac, int max_candidates, std::mt19937_64& rng) {
    CartTree tree;
    const int J = S.cols();

    auto rec = [&](auto&& self, std::vector<int> members) -> int {
        const double mean = detail::mean_over(y, members);
        const double parent_sse = detail::sse_over(y, members, mean);

        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();

        int best_j = -1;
        double best_c = 0.0;
        double best_obj = std::numeric_limits<double>::infinity();

        if (static_cast<int>(members.size()) >= min_node_size) {
            const int m = std::min(std::max(static_cast<int>(std::ceil(mtry_frac * J)), 1), J);
            std::vector<int> feats = mrf::sample_without_replacement(rng, J, m);
            std::sort(feats.begin(), feats.end());
            std::vector<double> vals;
            for (int j : feats) {
                vals.clear();
                for (int t : members) vals.push_back(S(t, j));
                const auto cands = mrf::candidate_thresholds(vals, max_candidates);
                for (double c : cands) {
                    std::vector<int> l, r;
                    for (int t : members) (S(t, j) <= c ? l : r).push_back(t);
                    if (static_cast<int>(l.size()) < min_child ||
                        static_cast<int>(r.size()) < min_child)
                        continue;
                    const double ml = detail::mean_over(y, l);
                    const double mr = detail::mean_over(y, r);
                    const double obj = detail::sse_over(y, l, ml) + detail::sse_over(y, r, mr);
                    if (obj < best_obj) {
                        best_j = j;
                        best_c = c;
                        best_obj = obj;
                    }
                }
            }
        }

        bool split_ok = best_j >= 0;
        if (split_ok && !(best_obj < parent_sse)) split_ok = false;
        if (split_ok && !((parent_sse - best_obj) >= 1e-10 * parent_sse)) split_ok = false;

        if (!split_ok) {
            tree.nodes[id].feature = -1;
            tree.nodes[id].value = mean;
            return id;
        }
        std::vector<int> l, r;
        for (int t : members) (S(t, best_j) <= best_c ? l : r).push_back(t);
        tree.nodes[id].feature = best_j;
        tree.nodes[id].threshold = best_c;
        tree.nodes[id].left = self(self, std::move(l));
        tree.nodes[id].right = self(self, std::move(r));
        return id;
    };

    rec(rec, sample);
    return tree;
}

/// Forest prediction: the simple average over trees grown on the provided
/// per-tree samples with streams derived exactly like the library's.
struct CartForest {
    std::vector<CartTree> trees;

    double predict(const double* s_row) const {
        double acc = 0.0;
        for (const auto& t : trees) acc += t.predict(s_row);
        return acc / static_cast<double>(trees.size());
    }
};

inline CartForest grow_cart_forest(const std::vector<std::vector<int>>& samples,
                                   const mrf::Matrix& S, const std::vector<double>& y,
                                   int min_node_size, int min_child, double mtry_frac,
                                   int max_candidates, std::uint64_t seed) {
    CartForest forest;
    for (std::size_t b = 0; b < samples.size(); ++b) {
        auto rng = mrf::make_stream(seed, static_cast<std::uint64_t>(b), mrf::stream_tag::split);
        forest.trees.push_back(grow_cart_tree(samples[b], S, y, min_node_size, min_child,
                                              mtry_frac, max_candidates, rng));
    }
    return forest;
}

}  // namespace oracle

#endif  // MRF_TEST_CART_ORACLE_HPP

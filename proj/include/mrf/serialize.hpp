#ifndef MRF_SERIALIZE_HPP
#define MRF_SERIALIZE_HPP

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "mrf/forest.hpp"

namespace mrf {

inline constexpr const char* kForestFormatVersion = "mrf-forest-v1";

inline nlohmann::json hyperparams_to_json(const HyperParams& hp) {
    return nlohmann::json{
        {"mtry_frac", hp.mtry_frac},
        {"min_node_size", hp.min_node_size},
        {"mlf", hp.mlf},
        {"lambda", hp.lambda},
        {"zeta", hp.zeta},
        {"trend_push", hp.trend_push},
        {"max_candidates", hp.max_candidates},
        {"subsample_rate", hp.subsample_rate},
        {"block_size", hp.block_size},
        {"n_trees", hp.n_trees},
        {"seed", hp.seed},
        {"bayes_block_weights", hp.bayes_block_weights},
        {"standardize", hp.standardize},
    };
}

inline HyperParams hyperparams_from_json(const nlohmann::json& j) {
    HyperParams hp;
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
    hp.seed = j.at("seed").get<std::uint64_t>();
    hp.bayes_block_weights = j.at("bayes_block_weights").get<bool>();
    hp.standardize = j.at("standardize").get<bool>();
    return hp;
}

inline nlohmann::json forest_to_json(const MrfForest& forest) {
    nlohmann::json j;
    j["format"] = kForestFormatVersion;
    j["hp"] = hyperparams_to_json(forest.hp);
    j["s_names"] = forest.s_names;
    j["x_names"] = forest.x_names;
    j["T"] = forest.T;
    j["K"] = forest.K;
    j["J"] = forest.J;
    j["trend_col"] = forest.trend_col;
    j["prior"] = forest.prior;
    j["scales"] = forest.scales;
    j["total_solver_fallbacks"] = forest.total_solver_fallbacks;
    std::string usable(forest.usable.begin(), forest.usable.end());
    for (auto& ch : usable) ch = ch ? '1' : '0';
    j["usable"] = usable;

    nlohmann::json trees = nlohmann::json::array();
    for (int b = 0; b < forest.B(); ++b) {
        nlohmann::json jt;
        jt["stream"] = forest.trees[b].rng_stream_id;
        jt["fallbacks"] = forest.trees[b].n_solver_fallbacks;
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& node : forest.trees[b].nodes) {
            if (node.is_leaf()) {
                nodes.push_back(nlohmann::json{{"beta", node.beta}, {"members", node.members}});
            } else {
                nodes.push_back(nlohmann::json{{"j", node.feature},
                                               {"c", node.threshold},
                                               {"l", node.left},
                                               {"r", node.right}});
            }
        }
        jt["nodes"] = std::move(nodes);
        std::string bag(forest.inbag[b].begin(), forest.inbag[b].end());
        for (auto& ch : bag) ch = ch ? '1' : '0';
        jt["inbag"] = bag;
        trees.push_back(std::move(jt));
    }
    j["trees"] = std::move(trees);
    return j;
}

inline MrfForest forest_from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j.at("format").get<std::string>() != kForestFormatVersion)
        throw std::runtime_error("forest_from_json: unsupported or missing format version");
    MrfForest forest;
    forest.hp = hyperparams_from_json(j.at("hp"));
    forest.s_names = j.at("s_names").get<std::vector<std::string>>();
    forest.x_names = j.at("x_names").get<std::vector<std::string>>();
    forest.T = j.at("T").get<int>();
    forest.K = j.at("K").get<int>();
    forest.J = j.at("J").get<int>();
    forest.trend_col = j.at("trend_col").get<int>();
    forest.prior = j.at("prior").get<std::vector<double>>();
    forest.scales = j.at("scales").get<std::vector<double>>();
    forest.total_solver_fallbacks = j.at("total_solver_fallbacks").get<int>();
    const std::string usable = j.at("usable").get<std::string>();
    forest.usable.assign(usable.size(), 0);
    for (std::size_t i = 0; i < usable.size(); ++i) forest.usable[i] = usable[i] == '1';

    for (const auto& jt : j.at("trees")) {
        MrfTree tree;
        tree.rng_stream_id = jt.at("stream").get<std::uint64_t>();
        tree.n_solver_fallbacks = jt.at("fallbacks").get<int>();
        for (const auto& jn : jt.at("nodes")) {
            TreeNode node;
            if (jn.contains("beta")) {
                node.beta = jn.at("beta").get<std::vector<double>>();
                node.members = jn.at("members").get<std::vector<int>>();
            } else {
                node.feature = jn.at("j").get<int>();
                node.threshold = jn.at("c").get<double>();
                node.left = jn.at("l").get<int>();
                node.right = jn.at("r").get<int>();
            }
            tree.nodes.push_back(std::move(node));
        }
        forest.trees.push_back(std::move(tree));
        const std::string bag = jt.at("inbag").get<std::string>();
        std::vector<char> row(bag.size(), 0);
        for (std::size_t i = 0; i < bag.size(); ++i) row[i] = bag[i] == '1';
        forest.inbag.push_back(std::move(row));
    }
    return forest;
}

inline void save_forest(const MrfForest& forest, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_forest: cannot open '" + path + "'");
    out << forest_to_json(forest).dump() << '\n';
}

inline MrfForest load_forest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_forest: cannot open '" + path + "'");
    nlohmann::json j;
    in >> j;
    return forest_from_json(j);
}

/// The serialized forest as a string (stable across thread counts for the
/// same config and seed).
inline std::string forest_to_string(const MrfForest& forest) { return forest_to_json(forest).dump(); }

}  // namespace mrf

#endif  // MRF_SERIALIZE_HPP

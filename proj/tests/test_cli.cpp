#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "mrf/dataio.hpp"
#include "mrf/rng.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* p = std::getenv("MRF_CLI_PATH");
    REQUIRE(p != nullptr);
    return p;
}

int run_cli(const std::string& args) {
    const std::string cmd = '"' + cli_path() + "\" " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "mrf_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

/// Toy quarterly panel: three stationary series, the target switching on its
/// own lag, long enough for factors and MAFs.
fs::path write_toy_csv(const fs::path& dir) {
    auto rng = mrf::make_stream(451, 0);
    const int T = 160;
    std::vector<double> a(T, 0.0), b(T, 0.0), c(T, 0.0);
    for (int t = 1; t < T; ++t) {
        b[t] = 0.6 * b[t - 1] + mrf::rand_normal(rng);
        c[t] = 0.4 * c[t - 1] + mrf::rand_normal(rng);
        const double mu = a[t - 1] >= 0.0 ? 0.8 : -0.4;
        a[t] = mu + 0.5 * a[t - 1] + 0.3 * b[t - 1] + mrf::rand_normal(rng);
    }
    const fs::path path = dir / "toy.csv";
    std::ofstream out(path);
    out << "date,A,B,C\n";
    mrf::Period p{1960, 1, mrf::Frequency::quarterly};
    for (int t = 0; t < T; ++t) {
        out << p.label() << ',' << mrf::format_double(a[t]) << ',' << mrf::format_double(b[t])
            << ',' << mrf::format_double(c[t]) << '\n';
        p = p.next();
    }
    return path;
}

}  // namespace

TEST_CASE("simulate twice with the same seed produces byte-identical outputs") {
    const auto d1 = fresh_dir("sim1");
    const auto d2 = fresh_dir("sim2");
    const std::string common = "simulate --dgp ar2 --T 100 --sims 3 --seed 1 --threads 2 --out ";
    REQUIRE(run_cli(common + (d1 / "r").string()) == 0);
    REQUIRE(run_cli(common + (d2 / "r").string()) == 0);
    CHECK(slurp(d1 / "r" / "sim_study.csv") == slurp(d2 / "r" / "sim_study.csv"));
    CHECK(slurp(d1 / "r" / "manifest.json") == slurp(d2 / "r" / "manifest.json"));
}

TEST_CASE("fit with fa_arrf on a 3-column toy CSV yields five coefficient series") {
    const auto dir = fresh_dir("fit_faarrf");
    const auto csv = write_toy_csv(dir);
    const std::string out = (dir / "run").string();
    const int rc = run_cli("fit --set dataset=" + csv.string() +
                           " --set target=A --set model=fa_arrf"
                           " --set state.n_factors=2 --set state.maf_P=6"
                           " --set hyper.n_trees=25 --seed 3 --threads 2 --out " + out);
    REQUIRE(rc == 0);

    const std::string gtvp = slurp(fs::path(out) / "gtvp.csv");
    std::set<std::string> coefs;
    std::istringstream ss(gtvp);
    std::string line;
    std::getline(ss, line);  // header
    CHECK(line == "date,coefficient,mean,q05,q16,q84,q95,n_oob");
    while (std::getline(ss, line)) {
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        coefs.insert(line.substr(c1 + 1, c2 - c1 - 1));
    }
    CHECK(coefs.size() == 5);
    CHECK(coefs.count("const") == 1);
    CHECK(coefs.count("y_l0") == 1);
    CHECK(coefs.count("y_l1") == 1);
    CHECK(coefs.count("F1") == 1);
    CHECK(coefs.count("F2") == 1);

    CHECK(fs::exists(fs::path(out) / "forest.json"));
    CHECK(fs::exists(fs::path(out) / "bands.csv"));
    CHECK(fs::exists(fs::path(out) / "manifest.json"));
}

TEST_CASE("missing target column exits with the config code and writes no artifacts") {
    const auto dir = fresh_dir("missing_target");
    const auto csv = write_toy_csv(dir);
    const std::string out = (dir / "run").string();
    const int rc = run_cli("fit --set dataset=" + csv.string() +
                           " --set target=NOPE --set hyper.n_trees=5 --out " + out);
    CHECK(rc == 2);
    CHECK_FALSE(fs::exists(fs::path(out) / "gtvp.csv"));
    CHECK_FALSE(fs::exists(fs::path(out) / "forest.json"));
    CHECK_FALSE(fs::exists(fs::path(out) / "manifest.json"));
}

TEST_CASE("rerunning from a manifest's resolved config reproduces artifacts byte for byte") {
    const auto dir = fresh_dir("replay");
    const auto csv = write_toy_csv(dir);
    const std::string out1 = (dir / "run1").string();
    REQUIRE(run_cli("fit --set dataset=" + csv.string() +
                    " --set target=A --set model=tiny_arrf --set hyper.n_trees=20"
                    " --seed 11 --threads 2 --out " + out1) == 0);

    const std::string out2 = (dir / "run2").string();
    REQUIRE(run_cli("fit --config " + out1 + "/resolved_config.json --out " + out2) == 0);
    for (const char* f : {"gtvp.csv", "forest.json", "bands.csv"})
        CHECK(slurp(fs::path(out1) / f) == slurp(fs::path(out2) / f));
}

TEST_CASE("thread counts do not change fit artifacts") {
    const auto dir = fresh_dir("threads");
    const auto csv = write_toy_csv(dir);
    const std::string base = "fit --set dataset=" + csv.string() +
                             " --set target=A --set model=tiny_arrf --set hyper.n_trees=16"
                             " --seed 5 --out ";
    const std::string out1 = (dir / "t1").string(), out2 = (dir / "t2").string();
    REQUIRE(run_cli(base + out1 + " --threads 1") == 0);
    REQUIRE(run_cli(base + out2 + " --threads 2") == 0);
    CHECK(slurp(fs::path(out1) / "forest.json") == slurp(fs::path(out2) / "forest.json"));
    CHECK(slurp(fs::path(out1) / "gtvp.csv") == slurp(fs::path(out2) / "gtvp.csv"));
}

TEST_CASE("--set overrides reach the forest configuration") {
    const auto dir = fresh_dir("setflag");
    const auto csv = write_toy_csv(dir);
    const std::string out = (dir / "run").string();
    REQUIRE(run_cli("fit --set dataset=" + csv.string() +
                    " --set target=A --set model=tiny_arrf --set hyper.n_trees=7"
                    " --seed 2 --out " + out) == 0);
    const std::string forest = slurp(fs::path(out) / "forest.json");
    CHECK(forest.find("\"n_trees\":7") != std::string::npos);
}

TEST_CASE("oos, vi, surrogate and project subcommands run end to end on the toy data") {
    const auto dir = fresh_dir("endtoend");
    const auto csv = write_toy_csv(dir);

    const std::string oos_out = (dir / "oos").string();
    REQUIRE(run_cli("oos --set dataset=" + csv.string() +
                    " --set target=A --set 'models=[\"ar\",\"tiny_arrf\"]'"
                    " --set base_model=ar --set hyper.n_trees=20"
                    " --set oos.start=1990Q1 --set oos.end=1996Q4"
                    " --seed 7 --threads 2 --out " + oos_out) == 0);
    const std::string table = slurp(fs::path(oos_out) / "eval_table.csv");
    CHECK(table.find("ar,") != std::string::npos);
    CHECK(slurp(fs::path(oos_out) / "eval_tidy.csv").find("tiny_arrf") != std::string::npos);

    const std::string vi_out = (dir / "vi").string();
    REQUIRE(run_cli("vi --set dataset=" + csv.string() +
                    " --set target=A --set model=tiny_arrf --set hyper.n_trees=20"
                    " --set 'vi.modes=[\"oob\",\"beta\"]' --set vi.n_repeats=2"
                    " --seed 7 --threads 2 --out " + vi_out) == 0);
    CHECK(fs::exists(fs::path(vi_out) / "vi_oob.csv"));
    CHECK(fs::exists(fs::path(vi_out) / "vi_beta.csv"));

    const std::string sur_out = (dir / "sur").string();
    REQUIRE(run_cli("surrogate --set dataset=" + csv.string() +
                    " --set target=A --set model=tiny_arrf --set hyper.n_trees=30"
                    " --set surrogate.coefficient=0 --set surrogate.min_leaf=8"
                    " --seed 7 --threads 2 --out " + sur_out) == 0);
    CHECK(fs::exists(fs::path(sur_out) / "surrogate.txt"));
    CHECK(slurp(fs::path(sur_out) / "surrogate.json").find("nodes") != std::string::npos);

    const std::string proj_out = (dir / "proj").string();
    REQUIRE(run_cli("project --set dataset=" + csv.string() +
                    " --set target=A --set model=tiny_arrf --set hyper.n_trees=20"
                    " --set project.split=1990Q1"
                    " --seed 7 --threads 2 --out " + proj_out) == 0);
    const std::string proj = slurp(fs::path(proj_out) / "projected.csv");
    CHECK(proj.find("beta_const") != std::string::npos);
    CHECK(proj.find("1990Q1") != std::string::npos);
}

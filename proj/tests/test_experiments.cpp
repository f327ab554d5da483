#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "smoothdiv/experiments.hpp"
#include "smoothdiv/measures.hpp"
#include "smoothdiv/types.hpp"

using namespace smoothdiv;

namespace {

MeasureSpec narrow_gaussian() {
    Gaussian g;
    g.mean = Eigen::VectorXd::Zero(1);
    g.covariance = Eigen::MatrixXd::Constant(1, 1, 0.25);
    return g;
}

MeasureSpec one_atom() {
    PointCloud c;
    c.points = Eigen::MatrixXd::Constant(1, 1, 0.4);
    c.weights = Eigen::VectorXd::Constant(1, 1.0);
    return c;
}

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.measure = narrow_gaussian();
    cfg.sigma = 1.0;
    cfg.n_grid = {25, 50};
    cfg.reps = 20;
    cfg.seed = 7;
    cfg.grid_points = 600;
    cfg.draws = 200;
    cfg.limit_grid_points = 200;
    return cfg;
}

}  // namespace

TEST_CASE("two sample ks statistic on worked examples") {
    CHECK(ks_statistic({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == 0.0);
    CHECK(ks_statistic({1.0}, {2.0}) == 1.0);
    CHECK(ks_statistic({1.0, 2.0, 3.0}, {1.5, 2.5}) == doctest::Approx(1.0 / 3.0));
    CHECK(ks_statistic({0.1, 0.2}, {0.15, 0.25, 0.35}) == doctest::Approx(2.0 / 3.0));
    // Symmetric in its arguments.
    CHECK(ks_statistic({0.15, 0.25, 0.35}, {0.1, 0.2}) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("one dimensional wasserstein distance on worked examples") {
    CHECK(wasserstein1_1d({0.0, 1.0}, {0.0, 3.0}) == doctest::Approx(1.0));
    CHECK(wasserstein1_1d({0.0}, {5.0}) == doctest::Approx(5.0));
    CHECK(wasserstein1_1d({2.0, 1.0}, {1.0, 2.0}) == 0.0);
    // Translation moves the distance by exactly the shift.
    CHECK(wasserstein1_1d({0.0, 0.5, 1.0}, {0.25, 0.75, 1.25}) == doctest::Approx(0.25));
}

TEST_CASE("log log slope recovers an exact power law") {
    const std::vector<double> ns = {50.0, 100.0, 200.0, 400.0};
    std::vector<double> means;
    for (const double n : ns) means.push_back(2.0 / std::sqrt(n));
    CHECK(fit_loglog_slope(ns, means) == doctest::Approx(-0.5).epsilon(1e-12));

    std::vector<double> flat = {3.0, 3.0, 3.0, 3.0};
    CHECK(fit_loglog_slope(ns, flat) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("a degenerate reference yields an all zero report without aborting") {
    ExperimentConfig cfg;
    cfg.measure = one_atom();
    cfg.n_grid = {20, 40};
    cfg.reps = 10;
    cfg.seed = 3;
    cfg.grid_points = 400;
    cfg.draws = 50;
    cfg.limit_grid_points = 100;

    const ConvergenceReport report = run_convergence(cfg);
    REQUIRE(report.rows.size() == 2);
    // Every sample atom coincides with the reference atom, so the divergences
    // cancel to kernel evaluation roundoff: the scaled statistics sit at the
    // 1e-16 scale rather than exact zero.  Slopes fitted through that noise
    // are arbitrary but must stay finite.
    for (const auto& row : report.rows) {
        CHECK(std::abs(row.mean_scaled_tv) <= 1e-12);
        CHECK(std::abs(row.mean_scaled_chi2) <= 1e-12);
        CHECK(row.sd_scaled_tv <= 1e-12);
    }
    CHECK(std::isfinite(report.slope_tv));
    CHECK(std::isfinite(report.slope_chi2));
    // The factorization path does promise exact zeros for a degenerate field.
    for (const double x : report.limit_tv) CHECK(x == 0.0);
}

TEST_CASE("a short study produces coherent aggregates") {
    const ConvergenceReport report = run_convergence(small_config());
    REQUIRE(report.rows.size() == 2);
    CHECK(report.records.size() == 40);
    CHECK(report.limit_tv.size() == 200);
    CHECK(report.limit_chi2.size() == 200);
    CHECK(report.box.lo(0) < report.box.hi(0));
    CHECK(report.gp_jitter >= 0.0);

    for (const auto& row : report.rows) {
        CHECK(row.mean_scaled_tv > 0.0);
        CHECK(row.sd_scaled_tv > 0.0);
        CHECK(row.sem_scaled_tv == doctest::Approx(row.sd_scaled_tv / std::sqrt(20.0)));
        CHECK(row.ks_tv >= 0.0);
        CHECK(row.ks_tv <= 1.0);
    }
    // Scaled means hover near the limit mean, so 20 reps and 200 limit draws
    // keep them within a loose factor of each other.
    const double limit_mean =
        std::accumulate(report.limit_tv.begin(), report.limit_tv.end(), 0.0) / 200.0;
    CHECK(report.rows.back().mean_scaled_tv > 0.3 * limit_mean);
    CHECK(report.rows.back().mean_scaled_tv < 3.0 * limit_mean);

    // Raw statistics must shrink with n; the recorded slope reflects that.
    CHECK(report.slope_tv < 0.0);
}

TEST_CASE("repetition records do not depend on the worker count") {
    ExperimentConfig cfg = small_config();
    cfg.reps = 8;
    cfg.workers = 1;
    const ConvergenceReport serial = run_convergence(cfg);
    cfg.workers = 4;
    const ConvergenceReport threaded = run_convergence(cfg);

    REQUIRE(serial.records.size() == threaded.records.size());
    bool same = true;
    for (std::size_t i = 0; i < serial.records.size(); ++i) {
        same = same && serial.records[i].stat_tv == threaded.records[i].stat_tv &&
               serial.records[i].stat_chi2 == threaded.records[i].stat_chi2 &&
               serial.records[i].n == threaded.records[i].n &&
               serial.records[i].rep == threaded.records[i].rep;
    }
    CHECK(same);
    CHECK(serial.limit_tv == threaded.limit_tv);
    CHECK(serial.rows.back().mean_scaled_tv == threaded.rows.back().mean_scaled_tv);
}

TEST_CASE("a grid too coarse for the spread aborts the study") {
    ExperimentConfig cfg = small_config();
    cfg.reps = 12;
    cfg.grid_points = 8;
    CHECK_THROWS_AS(run_convergence(cfg), numeric_error);
}

TEST_CASE("study output files are complete and reproducible") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "smoothdiv_test_out";
    fs::remove_all(dir);

    ExperimentConfig cfg = small_config();
    cfg.reps = 6;
    cfg.draws = 40;
    cfg.out_dir = dir.string();
    run_convergence(cfg);

    for (const char* name :
         {"convergence.csv", "convergence_summary.txt", "limit_tv.txt", "limit_chi2.txt"}) {
        CAPTURE(name);
        CHECK(fs::exists(dir / name));
    }

    // Config header block first, then the column line, then one row per rep.
    std::ifstream csv(dir / "convergence.csv");
    std::string line;
    std::size_t comments = 0;
    while (std::getline(csv, line) && !line.empty() && line[0] == '#') ++comments;
    CHECK(comments > 0);
    CHECK(line == "n,rep,stat_tv,stat_chi2,err_tv,err_chi2");
    std::size_t rows = 0;
    while (std::getline(csv, line))
        if (!line.empty() && line[0] != '#') ++rows;
    CHECK(rows == 12);

    const auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const std::string first = slurp(dir / "convergence.csv");
    run_convergence(cfg);
    CHECK(slurp(dir / "convergence.csv") == first);
    fs::remove_all(dir);
}

TEST_CASE("concentration frequencies respect their bound within noise") {
    ExperimentConfig cfg;
    cfg.measure = narrow_gaussian();
    cfg.n_grid = {100};
    cfg.reps = 300;
    cfg.seed = 5;
    cfg.grid_points = 600;
    cfg.which = WhichMeasure::tv;

    const ConcentrationReport report = run_concentration(cfg, {0.01, 0.05, 0.2});
    CHECK(report.n == 100);
    CHECK(report.reps == 300);
    REQUIRE(report.rows.size() == 3);
    for (const auto& row : report.rows) {
        CHECK(row.exceedance >= 0.0);
        CHECK(row.exceedance <= 1.0);
        CHECK(row.bound == doctest::Approx(std::exp(-50.0 * row.t * row.t)));
    }
    // Exceedance is monotone nonincreasing in the threshold, and the wide
    // threshold is essentially never crossed at this n.
    CHECK(report.rows[0].exceedance >= report.rows[2].exceedance);
    CHECK(report.rows[2].exceedance <= 0.05);
}

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smoothdiv/divergence.hpp"
#include "smoothdiv/limit_law.hpp"
#include "smoothdiv/measures.hpp"
#include "smoothdiv/types.hpp"

namespace smoothdiv {

enum class WhichMeasure { tv, chi2, both };

struct ExperimentConfig {
    MeasureSpec measure;
    double sigma = 1.0;
    std::vector<std::size_t> n_grid;
    std::size_t reps = 0;
    std::uint64_t seed = 0;
    int workers = 1;
    WhichMeasure which = WhichMeasure::both;
    int grid_points = 2000;       // statistic integration resolution per axis
    std::size_t draws = 2000;     // reference limit sample size
    int limit_grid_points = 400;  // field resolution per axis for limit draws
    double box_eps = 1e-8;
    std::string out_dir;  // empty: keep everything in memory
};

// Two-sample Kolmogorov-Smirnov statistic: sup |F_a - F_b|.
double ks_statistic(std::vector<double> a, std::vector<double> b);

// One-dimensional 1-Wasserstein distance between empirical samples,
// computed exactly as the area between the two empirical CDFs.
double wasserstein1_1d(std::vector<double> a, std::vector<double> b);

// Least-squares slope of log(means) against log(ns).
double fit_loglog_slope(const std::vector<double>& ns, const std::vector<double>& means);

// One repetition's statistics at a given n, in raw (unscaled) form.
struct RepRecord {
    std::size_t n = 0;
    std::size_t rep = 0;
    double stat_tv = 0.0;
    double stat_chi2 = 0.0;
    double err_tv = 0.0;
    double err_chi2 = 0.0;
};

// Cross-repetition aggregates at one n.  Scaled means use sqrt(n) for TV and
// n for chi-squared, the normalizations under which both statistics have
// nondegenerate limits; ks columns compare the scaled statistics with the
// simulated limit samples.
struct ConvergenceRow {
    std::size_t n = 0;
    double mean_scaled_tv = 0.0, sd_scaled_tv = 0.0, sem_scaled_tv = 0.0, ks_tv = 0.0;
    double mean_scaled_chi2 = 0.0, sd_scaled_chi2 = 0.0, sem_scaled_chi2 = 0.0,
           ks_chi2 = 0.0;
};

struct ConvergenceReport {
    std::vector<ConvergenceRow> rows;
    std::vector<RepRecord> records;
    std::vector<double> limit_tv;
    std::vector<double> limit_chi2;
    double slope_tv = 0.0;
    double slope_chi2 = 0.0;
    double gp_jitter = 0.0;
    IntegrationBox box;
};

// Repetition study across cfg.n_grid.  Each repetition gets its own seed
// derived from (cfg.seed, n, rep), so results are identical for any worker
// count.  If any repetition's integration error exceeds 5 percent of the
// cross-repetition standard deviation at its n, the run aborts with
// numeric_error: the quadrature would be too coarse to trust the spread.
// When cfg.out_dir is set, writes convergence.csv, convergence_summary.txt,
// and the limit sample files.
ConvergenceReport run_convergence(const ExperimentConfig& cfg);

struct ConcentrationRow {
    double t = 0.0;
    double exceedance = 0.0;  // fraction of reps with |stat - mean| > t
    double bound = 0.0;       // exp(-n t^2 / 2)
    double se = 0.0;          // binomial standard error of the exceedance
};

struct ConcentrationReport {
    std::size_t n = 0;
    std::size_t reps = 0;
    std::vector<ConcentrationRow> rows;
};

// Deviation frequencies of the TV statistic against the concentration bound
// at n = cfg.n_grid.front().  Writes concentration.txt when out_dir is set.
ConcentrationReport run_concentration(const ExperimentConfig& cfg,
                                      const std::vector<double>& thresholds);

}  // namespace smoothdiv

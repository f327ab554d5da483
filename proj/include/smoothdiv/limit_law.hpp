#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "smoothdiv/integration.hpp"
#include "smoothdiv/measures.hpp"
#include "smoothdiv/rng.hpp"
#include "smoothdiv/types.hpp"

namespace smoothdiv {

// Discretized centered Gaussian field with the covariance of the smoothed
// empirical process, ready for sampling through its Cholesky factor.
struct GPModel {
    Eigen::MatrixXd nodes;   // grid nodes, one per row
    Eigen::VectorXd rho;     // smoothed reference density at the nodes
    // F such that F F^T has the kernel's exact diagonal: the Cholesky factor
    // of K + jitter I with row j rescaled by sqrt(K_jj / (K_jj + jitter)),
    // so the jitter never inflates a node's variance.
    Eigen::MatrixXd factor;
    double cell_weight = 0.0;
    double jitter = 0.0;  // final diagonal shift actually used
    double sigma = 0.0;
};

// Builds the covariance on the grid and factors it.  Jitter starts at
// 1e-12 of the largest diagonal entry and doubles until the factorization
// succeeds; failure past 1e-6 of that scale raises numeric_error.  An all
// zero covariance (a one-atom reference) yields a zero factor.
GPModel build_gp(const MeasureSpec& spec, Smoothing smoothing, const TensorGrid& grid);

// One field realization per call / column.  Column j of gp_draws depends only
// on (seed, j), so any batching or threading produces identical output.
Eigen::VectorXd gp_draw(const GPModel& model, Rng& rng);
Eigen::MatrixXd gp_draws(const GPModel& model, std::uint64_t seed, std::size_t count);

// Functionals of a field realization: the limits of sqrt(n) tv and n chi2.
double limit_tv_from_field(const GPModel& model, const Eigen::VectorXd& field);
double limit_chi2_from_field(const GPModel& model, const Eigen::VectorXd& field);

double limit_tv_draw(const GPModel& model, Rng& rng);
double limit_chi2_draw(const GPModel& model, Rng& rng);

// Batched limit samples; GEMM over draw blocks, one column per draw.
std::vector<double> limit_tv_sample(const GPModel& model, std::uint64_t seed,
                                    std::size_t count);
std::vector<double> limit_chi2_sample(const GPModel& model, std::uint64_t seed,
                                      std::size_t count);

// Multiplier bootstrap approximation of the same field: anchors X_1..X_m
// drawn once from the measure, each draw reweights the centered kernel
// columns with independent standard normals g_i and scales by m^{-1/2}.
struct MultiplierModel {
    Sample anchors;
    std::size_t m = 0;
    Eigen::MatrixXd kernel_at_nodes;  // node-by-anchor kernel matrix
    Eigen::VectorXd rho;
    Eigen::MatrixXd nodes;
    double cell_weight = 0.0;
    double sigma = 0.0;
};

MultiplierModel build_multiplier(const MeasureSpec& spec, Smoothing smoothing,
                                 const TensorGrid& grid, std::size_t m,
                                 std::uint64_t seed);

Eigen::VectorXd multiplier_draw(const MultiplierModel& model, Rng& rng);
std::vector<double> multiplier_tv_sample(const MultiplierModel& model,
                                         std::uint64_t seed, std::size_t count);

}  // namespace smoothdiv

#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Core>

#include "smoothdiv/measures.hpp"
#include "smoothdiv/types.hpp"

namespace smoothdiv {

struct IntegrationBox {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;
};

// Midpoint lattice over a box, `points_per_axis` cells per axis, every node
// weighted by the cell volume.  Dimension is capped at 3; beyond that the
// node count is no longer workable and importance sampling takes over.
struct TensorGrid {
    IntegrationBox box;
    int points_per_axis = 0;
};

// Cube around the measure's mean that captures all but eps of the smoothed
// mass: a radius holding 1 - eps/2 of the raw measure plus a kernel radius
// holding 1 - eps/2 of the smoothing noise.
IntegrationBox choose_box(const MeasureSpec& spec, Smoothing smoothing, double eps);

Eigen::Index grid_size(const TensorGrid& grid);
Eigen::MatrixXd grid_nodes(const TensorGrid& grid);
double cell_volume(const TensorGrid& grid);

// Evaluates one value per node row; called in blocks to bound memory.
using BatchFn = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

// Midpoint-rule integral with the half-resolution difference as the error
// proxy.  Node evaluation order is fixed, and the pairwise reduction makes
// the total independent of how callers parallelize the evaluations.
EstimateWithError integrate_grid(const TensorGrid& grid, const BatchFn& fn);

struct ImportanceRule {
    MeasureSpec proposal;  // needs a pointwise density: no point clouds
    std::size_t draws = 0;
    std::uint64_t seed = 0;
};

// Raw (unsmoothed) density of a proposal measure.
Eigen::VectorXd proposal_density(const MeasureSpec& proposal, const Eigen::MatrixXd& nodes);

// Self-normalized-free importance estimate of the integral of fn: the mean
// of fn(x)/q(x) over proposal draws, with the sample standard error as the
// error field.  A non-finite ratio raises numeric_error.
EstimateWithError integrate_importance(const ImportanceRule& rule, const BatchFn& fn);

// Moment-matched Gaussian proposal for integrands tied to the smoothed
// measure: the smoothed covariance inflated by a factor of 2 keeps ratios
// bounded for every family.
MeasureSpec default_proposal(const MeasureSpec& spec, Smoothing smoothing);

}  // namespace smoothdiv

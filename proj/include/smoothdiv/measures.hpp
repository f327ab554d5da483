#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "smoothdiv/types.hpp"

namespace smoothdiv {

// The four reference families.  Each one has a closed-form density after
// convolution with the Gaussian smoothing kernel, which is what makes exact
// reference curves cheap to evaluate on integration grids.

struct Gaussian {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;  // symmetric positive semidefinite
};

struct GaussianMixture {
    std::vector<double> weights;  // nonnegative, sum to 1
    std::vector<Gaussian> components;
};

struct UniformBox {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;  // lo < hi coordinatewise
};

struct PointCloud {
    Eigen::MatrixXd points;   // one atom per row
    Eigen::VectorXd weights;  // nonnegative, sum to 1
};

using MeasureSpec = std::variant<Gaussian, GaussianMixture, UniformBox, PointCloud>;

// A set of independent draws, one per row.  `source` carries the family tag
// of the generating measure for file headers and diagnostics.
struct Sample {
    Eigen::MatrixXd points;
    std::uint64_t seed = 0;
    std::string source;
};

Eigen::Index dimension(const MeasureSpec& spec);

// Checks the family invariants listed above; throws config_error on failure.
void validate(const MeasureSpec& spec);

std::string family_name(const MeasureSpec& spec);

Eigen::VectorXd mean_of(const MeasureSpec& spec);
Eigen::MatrixXd covariance_of(const MeasureSpec& spec);

// Density of N(mean, covariance) at x.  Covariance must be positive definite.
double gaussian_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                        const Eigen::MatrixXd& covariance);

Sample sample(const MeasureSpec& spec, std::size_t n, std::uint64_t seed);

// Density of the measure convolved with the isotropic Gaussian kernel of
// bandwidth sigma, evaluated at each row of `nodes`.
Eigen::VectorXd smoothed_density(const MeasureSpec& spec, Smoothing smoothing,
                                 const Eigen::MatrixXd& nodes);
double smoothed_density(const MeasureSpec& spec, Smoothing smoothing,
                        const Eigen::VectorXd& x);

// Pointwise second moment E[k(x - X)^2] of the smoothing kernel k.  Equals
// (4 pi sigma^2)^{-d/2} times the density smoothed at bandwidth sigma/sqrt 2,
// since the squared kernel is again a Gaussian kernel up to that constant.
Eigen::VectorXd squared_kernel_mean(const MeasureSpec& spec, Smoothing smoothing,
                                    const Eigen::MatrixXd& nodes);
double squared_kernel_mean(const MeasureSpec& spec, Smoothing smoothing,
                           const Eigen::VectorXd& x);

// Pointwise variance of k(x - X).  Cancellation residue collapses to an
// exact zero (degenerate references stay exactly degenerate, deep-tail noise
// does not leak sign flips); negativity beyond 1e-10 of the squared kernel
// peak means the two moment evaluations disagree and raises numeric_error.
// See detail::variance_from_parts for the exact rule.
Eigen::VectorXd variance_function(const MeasureSpec& spec, Smoothing smoothing,
                                  const Eigen::MatrixXd& nodes);

// Cov(k(x - X), k(y - X)) over all row pairs of `nodes`.  Uses the product
// identity k_s(x - X) k_s(y - X) = k_{s sqrt 2}(x - y) k_{s / sqrt 2}((x+y)/2 - X),
// so only smoothed densities at bandwidth sigma/sqrt 2 are needed.
Eigen::MatrixXd covariance_kernel(const MeasureSpec& spec, Smoothing smoothing,
                                  const Eigen::MatrixXd& nodes);

// P(||X|| > t).  Exact for point clouds and for centered isotropic Gaussians
// (via the chi-squared survival function); otherwise Monte Carlo against a
// fixed-seed sample that is drawn once per measure and cached.
EstimateWithError tail_probability(const MeasureSpec& spec, double t);

// A valid sub-Gaussian parameter for the family (not necessarily minimal):
// sqrt of the largest covariance eigenvalue for Gaussians, the support
// radius around the mean for boxes and clouds, and for mixtures the largest
// component parameter plus the component-mean dispersion.
double subgaussian_parameter(const MeasureSpec& spec);

namespace detail {

// Clamp rule shared by variance_function and its tests.  kernel_scale is the
// squared peak of the smoothing kernel, (2 pi sigma^2)^-d, which caps both
// arguments for every reference: negativity beyond 1e-10 of it raises
// numeric_error (the formulas cannot produce that, only a bug can), while
// any smaller negative residue and any positive residue within 1e-12 of the
// local scale collapse to an exact zero so degenerate references stay
// exactly degenerate.
double variance_from_parts(double squared_mean, double density,
                           double kernel_scale);

// B with B B^T = covariance; accepts semidefinite input.
Eigen::MatrixXd gaussian_factor(const Eigen::MatrixXd& covariance);

}  // namespace detail

}  // namespace smoothdiv

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smoothdiv/divergence.hpp"
#include "smoothdiv/measures.hpp"
#include "smoothdiv/types.hpp"

namespace smoothdiv {

// Outcome of a sufficient-condition probe.  `lhs` and `rhs` are the two
// sides being compared; `detail` spells out what they are for this check.
struct ConditionReport {
    std::string name;
    bool holds = false;
    double lhs = 0.0;
    double rhs = 0.0;
    std::string detail;
};

// Integral of sqrt of the kernel variance function.  Finiteness of this
// integral is what puts the scaled TV statistic in the Gaussian limit
// regime; the same integral drives both closed-form moment bounds below.
EstimateWithError tv_variance_integral(const MeasureSpec& spec, Smoothing smoothing,
                                       const IntegrationPlan& plan);

// Upper bound on the mean of sqrt(n) times the TV statistic: half the
// variance integral, valid at every sample size.
EstimateWithError tv_upper_bound(const MeasureSpec& spec, Smoothing smoothing,
                                 const IntegrationPlan& plan);

// Matching asymptotic lower constant: (2 pi)^{-1/2} times the variance
// integral, the exact mean of the limiting functional.
EstimateWithError tv_lower_bound(const MeasureSpec& spec, Smoothing smoothing,
                                 const IntegrationPlan& plan);

// Closed-form bound on the variance integral that needs only the norm tails
// of the measure:
//   8^{d/2} + 2^{d/2+1} / (sigma^d Gamma(d/2)) * int t^{d-1} sqrt(P(|X|>t)) dt.
// The t-integral runs through adaptive quadrature over a growing range; a
// range that will not saturate raises numeric_error.
EstimateWithError tv_integrability_bound(const MeasureSpec& spec, Smoothing smoothing);

// Exact mean of n times the chi-squared statistic at every n: the integral
// of variance function over smoothed density.
EstimateWithError chi2_mean_integral(const MeasureSpec& spec, Smoothing smoothing,
                                     const IntegrationPlan& plan);

// The same integral truncated to centered cubes of the given radii,
// for probing whether the full integral has converged or keeps growing.
std::vector<EstimateWithError> chi2_divergence_probe(const MeasureSpec& spec,
                                                     Smoothing smoothing,
                                                     const std::vector<double>& radii,
                                                     int points_per_axis);

// Sub-Gaussian parameter versus bandwidth: beta < sigma / sqrt 2 is the
// sufficient condition under which the chi-squared mean integral is finite
// with the closed-form bound below.
ConditionReport subgaussian_bandwidth_check(const MeasureSpec& spec, Smoothing smoothing);

// Closed-form bound on the chi-squared mean integral for a slack parameter
// eta in (0, 1).  Requires 2 (1 + eta) beta^2 < (1 - eta) sigma^2; an eta
// outside that range raises config_error.
EstimateWithError chi2_mean_upper_bound(const MeasureSpec& spec, Smoothing smoothing,
                                        double eta);

// For Gaussian references only: the eigenvalue-spread condition
// lambda_max < lambda_min + sigma^2 / 2 that guarantees the finite
// chi-squared mean integral without the sub-Gaussian bandwidth condition.
ConditionReport gaussian_spread_check(const MeasureSpec& spec, Smoothing smoothing);

struct MomentEstimate {
    double mean = 0.0;
    double se = 0.0;
    std::size_t draws = 0;
};

// Monte Carlo estimate of E exp(eta |X - EX|^2).
MomentEstimate exp_moment(const MeasureSpec& spec, double eta, std::size_t draws,
                          std::uint64_t seed);

// Checks the sub-Gaussian moment bound E exp(eta |X - EX|^2) <=
// (1 - 2 beta^2 eta)^{-d/2} by Monte Carlo; holds when the estimate is under
// the bound with three standard errors of slack.  Needs eta < 1 / (2 beta^2).
ConditionReport subgaussian_mgf_check(const MeasureSpec& spec, double eta,
                                      std::size_t draws, std::uint64_t seed);

// McDiarmid tail for the TV statistic: P(deviation >= t) <= exp(-n t^2 / 2).
double concentration_bound(std::size_t n, double t);

// Saturation probes for the two integrability conditions: the integral is
// recomputed on a box grown by half; the condition is reported as holding
// when the value moves by less than 0.1 percent.
ConditionReport tv_integral_saturation(const MeasureSpec& spec, Smoothing smoothing,
                                       int grid_points, double eps);
ConditionReport chi2_integral_saturation(const MeasureSpec& spec, Smoothing smoothing,
                                         int grid_points, double eps);

}  // namespace smoothdiv

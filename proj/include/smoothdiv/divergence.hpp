#pragma once

#include <cstdint>
#include <memory>
#include <variant>

#include <Eigen/Core>

#include "smoothdiv/integration.hpp"
#include "smoothdiv/measures.hpp"
#include "smoothdiv/types.hpp"

namespace smoothdiv {

struct DivergenceResult {
    double value = 0.0;
    double integration_error = 0.0;
    std::size_t n = 0;
    double sigma = 0.0;
};

struct DivergencePair {
    DivergenceResult tv;
    DivergenceResult chi2;
};

// How the divergence integrals are evaluated.  Grid plans integrate over the
// stated box; importance plans integrate over all of space but restrict the
// chi-squared integrand to the box, matching the grid-plan domain.
struct GridPlan {
    TensorGrid grid;
    double box_eps = 0.0;
};
struct ImportancePlan {
    ImportanceRule rule;
    IntegrationBox box;
    double box_eps = 0.0;
};
using IntegrationPlan = std::variant<GridPlan, ImportancePlan>;

// Grid up to two dimensions, importance sampling beyond.
IntegrationPlan default_plan(const MeasureSpec& spec, Smoothing smoothing,
                             int grid_points, std::size_t draws, double eps,
                             std::uint64_t seed);

// Kernel density of the sample at bandwidth sigma, one value per node row.
Eigen::VectorXd empirical_smoothed_density(const Sample& s, Smoothing smoothing,
                                           const Eigen::MatrixXd& nodes);
double empirical_smoothed_density(const Sample& s, Smoothing smoothing,
                                  const Eigen::VectorXd& x);

// Precomputes everything about (measure, smoothing, plan) that does not
// depend on the sample: grid nodes and reference curves for grid plans,
// proposal draws and reference values for importance plans.  operator() is
// const and safe to call concurrently from repetition workers.
class DivergenceEvaluator {
public:
    DivergenceEvaluator(MeasureSpec spec, Smoothing smoothing, IntegrationPlan plan);
    ~DivergenceEvaluator();
    DivergenceEvaluator(DivergenceEvaluator&&) noexcept;
    DivergenceEvaluator& operator=(DivergenceEvaluator&&) noexcept;

    // Both divergences from one pass over the sample's density evaluations.
    DivergencePair operator()(const Sample& s) const;

    const IntegrationPlan& plan() const;
    // Smallest reference density on the box boundary; the chi-squared
    // denominator is floored here so near-zero reference mass cannot blow up
    // the integrand inside the box.
    double denominator_floor() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Smoothed total variation distance between the empirical measure of `s` and
// the reference: half the integral of |rho_n - rho|.
DivergenceResult smooth_tv(const Sample& s, const MeasureSpec& spec,
                           Smoothing smoothing, const IntegrationPlan& plan);

// Smoothed chi-squared divergence: integral of (rho_n - rho)^2 / rho over
// the plan's box, with the floored denominator described above.
DivergenceResult smooth_chi2(const Sample& s, const MeasureSpec& spec,
                             Smoothing smoothing, const IntegrationPlan& plan);

DivergencePair smooth_divergences(const Sample& s, const MeasureSpec& spec,
                                  Smoothing smoothing, const IntegrationPlan& plan);

}  // namespace smoothdiv

#include "smoothdiv/bounds.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "smoothdiv/parallel.hpp"
#include "smoothdiv/rng.hpp"
#include "smoothdiv/special.hpp"

namespace smoothdiv {

namespace {

constexpr std::uint64_t kBoundsMaster = 0xb0a2d51df00dULL;

EstimateWithError integrate_plan(const IntegrationPlan& plan, const BatchFn& fn) {
    if (const auto* g = std::get_if<GridPlan>(&plan)) return integrate_grid(g->grid, fn);
    return integrate_importance(std::get<ImportancePlan>(plan).rule, fn);
}

BatchFn sqrt_variance_fn(const MeasureSpec& spec, Smoothing smoothing) {
    return [spec, smoothing](const Eigen::MatrixXd& nodes) {
        return variance_function(spec, smoothing, nodes).cwiseSqrt().eval();
    };
}

BatchFn variance_over_density_fn(const MeasureSpec& spec, Smoothing smoothing) {
    return [spec, smoothing](const Eigen::MatrixXd& nodes) {
        const Eigen::VectorXd v = variance_function(spec, smoothing, nodes);
        const Eigen::VectorXd rho = smoothed_density(spec, smoothing, nodes);
        Eigen::VectorXd out(v.size());
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if (rho[i] > 0.0) {
                out[i] = v[i] / rho[i];
            } else if (v[i] == 0.0) {
                out[i] = 0.0;
            } else {
                throw numeric_error("variance over density integrand hit a zero "
                                    "density with nonzero variance");
            }
        }
        return out;
    };
}

// Integral of t^{d-1} sqrt(tail(t)) over [0, infinity), by adaptive Simpson
// over a range grown by half until the new segment moves the total by less
// than 0.1 percent.
double tail_moment_integral(const std::function<double(double)>& tail, int d,
                            double initial_radius) {
    const double tol = 1e-10;
    auto f = [&](double t) {
        const double p = tail(t);
        return std::pow(t, d - 1) * std::sqrt(std::max(p, 0.0));
    };
    double radius = std::max(initial_radius, 1e-6);
    double total = adaptive_simpson(f, 0.0, radius, tol);
    for (int step = 0; step < 64; ++step) {
        const double grown = radius * 1.5;
        const double extra = adaptive_simpson(f, radius, grown, tol);
        radius = grown;
        total += extra;
        if (std::abs(extra) <= 1e-3 * std::max(std::abs(total), 1e-300)) return total;
    }
    throw numeric_error("norm-tail integral did not saturate; the measure's "
                        "tails are too heavy for this bound");
}

ConditionReport saturation_report(const std::string& name, const MeasureSpec& spec,
                                  Smoothing smoothing, int grid_points, double eps,
                                  const BatchFn& fn) {
    const IntegrationBox box = choose_box(spec, smoothing, eps);
    const Eigen::VectorXd center = 0.5 * (box.lo + box.hi);
    const Eigen::VectorXd radius = 0.5 * (box.hi - box.lo);
    const TensorGrid base{box, grid_points};
    const TensorGrid grown{
        IntegrationBox{center - 1.5 * radius, center + 1.5 * radius},
        grid_points + grid_points / 2};

    const double base_value = integrate_grid(base, fn).value;
    const double grown_value = integrate_grid(grown, fn).value;
    const double change =
        std::abs(grown_value - base_value) / std::max(std::abs(grown_value), 1e-300);

    ConditionReport report;
    report.name = name;
    report.lhs = base_value;
    report.rhs = grown_value;
    report.holds = change < 1e-3;
    std::ostringstream detail;
    detail << "relative change " << change << " when the integration radius grows by half";
    report.detail = detail.str();
    return report;
}

}  // namespace

EstimateWithError tv_variance_integral(const MeasureSpec& spec, Smoothing smoothing,
                                       const IntegrationPlan& plan) {
    return integrate_plan(plan, sqrt_variance_fn(spec, smoothing));
}

EstimateWithError tv_upper_bound(const MeasureSpec& spec, Smoothing smoothing,
                                 const IntegrationPlan& plan) {
    EstimateWithError e = tv_variance_integral(spec, smoothing, plan);
    e.value *= 0.5;
    e.error *= 0.5;
    return e;
}

EstimateWithError tv_lower_bound(const MeasureSpec& spec, Smoothing smoothing,
                                 const IntegrationPlan& plan) {
    EstimateWithError e = tv_variance_integral(spec, smoothing, plan);
    const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    e.value *= c;
    e.error *= c;
    return e;
}

EstimateWithError tv_integrability_bound(const MeasureSpec& spec, Smoothing smoothing) {
    validate(spec);
    const int d = static_cast<int>(dimension(spec));
    const double sigma = smoothing.sigma();

    auto tail_mid = [&](double t) { return tail_probability(spec, t).value; };
    auto tail_hi = [&](double t) {
        const EstimateWithError p = tail_probability(spec, t);
        return std::min(1.0, p.value + 2.0 * p.error);
    };
    // Start past the bulk of the norm distribution so range growth converges
    // in a few steps.
    const double start =
        (mean_of(spec).norm() + std::sqrt(covariance_of(spec).trace())) * 4.0 + sigma;

    const double t_mid = tail_moment_integral(tail_mid, d, start);
    const double t_hi = tail_moment_integral(tail_hi, d, start);

    const double scale =
        std::pow(2.0, 0.5 * d + 1.0) / (std::pow(sigma, d) * std::tgamma(0.5 * d));
    EstimateWithError out;
    out.value = std::pow(8.0, 0.5 * d) + scale * t_mid;
    out.error = scale * std::abs(t_hi - t_mid);
    out.method = tail_probability(spec, start).method == "exact" ? "exact" : "mc";
    return out;
}

EstimateWithError chi2_mean_integral(const MeasureSpec& spec, Smoothing smoothing,
                                     const IntegrationPlan& plan) {
    return integrate_plan(plan, variance_over_density_fn(spec, smoothing));
}

std::vector<EstimateWithError> chi2_divergence_probe(const MeasureSpec& spec,
                                                     Smoothing smoothing,
                                                     const std::vector<double>& radii,
                                                     int points_per_axis) {
    validate(spec);
    const Eigen::VectorXd center = mean_of(spec);
    const BatchFn fn = variance_over_density_fn(spec, smoothing);
    std::vector<EstimateWithError> out;
    out.reserve(radii.size());
    for (const double r : radii) {
        if (!(r > 0.0)) throw config_error("probe radii must be positive");
        const TensorGrid grid{
            IntegrationBox{center.array() - r, center.array() + r}, points_per_axis};
        out.push_back(integrate_grid(grid, fn));
    }
    return out;
}

ConditionReport subgaussian_bandwidth_check(const MeasureSpec& spec,
                                            Smoothing smoothing) {
    ConditionReport report;
    report.name = "subgaussian_bandwidth";
    report.lhs = subgaussian_parameter(spec);
    report.rhs = smoothing.sigma() / std::numbers::sqrt2;
    report.holds = report.lhs < report.rhs;
    report.detail = "sub-Gaussian parameter vs sigma / sqrt 2";
    return report;
}

EstimateWithError chi2_mean_upper_bound(const MeasureSpec& spec, Smoothing smoothing,
                                        double eta) {
    validate(spec);
    if (!(eta > 0.0) || !(eta < 1.0))
        throw config_error("slack parameter eta must lie in (0, 1)");
    const double d = static_cast<double>(dimension(spec));
    const double beta = subgaussian_parameter(spec);
    const double sigma2 = smoothing.sigma2();

    const double bracket = 1.0 - 2.0 * (1.0 + eta) * beta * beta / ((1.0 - eta) * sigma2);
    if (!(bracket > 0.0)) {
        std::ostringstream msg;
        msg << "eta = " << eta << " violates 2 (1 + eta) beta^2 < (1 - eta) sigma^2 "
            << "for beta = " << beta;
        throw config_error(msg.str());
    }

    // Normalizing mass near the origin: C = E exp(-(1 + 1/eta) |X|^2 / (2 sigma^2)).
    const double c_rate = (1.0 + 1.0 / eta) / (2.0 * sigma2);
    double c_value = 0.0, c_error = 0.0;
    std::string method = "exact";
    const auto* g = std::get_if<Gaussian>(&spec);
    if (g && g->mean.lpNorm<Eigen::Infinity>() == 0.0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g->covariance,
                                                          Eigen::EigenvaluesOnly);
        c_value = 1.0;
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
            c_value /= std::sqrt(1.0 + 2.0 * c_rate * std::max(es.eigenvalues()[i], 0.0));
    } else {
        constexpr std::size_t kDraws = 200'000;
        const Sample s = sample(spec, kDraws, mix_seed(kBoundsMaster, streams::moment, 1));
        std::vector<double> terms(kDraws);
        for (std::size_t i = 0; i < kDraws; ++i)
            terms[i] = std::exp(-c_rate *
                                s.points.row(static_cast<Eigen::Index>(i)).squaredNorm());
        c_value = pairwise_mean(terms);
        std::vector<double> sq(kDraws);
        for (std::size_t i = 0; i < kDraws; ++i) {
            const double dev = terms[i] - c_value;
            sq[i] = dev * dev;
        }
        c_error = std::sqrt(pairwise_sum(sq) / (kDraws - 1.0) / kDraws);
        method = "mc";
    }
    if (!(c_value > 0.0))
        throw numeric_error("mass near the origin vanished; the bound constant is "
                            "not usable for this measure");

    const double outer = std::pow(1.0 - eta, -0.5 * d) * std::pow(bracket, -0.5 * d);
    EstimateWithError out;
    out.value = outer / c_value;
    out.error = c_error > 0.0 ? out.value * (c_error / c_value) : 0.0;
    out.method = method;
    return out;
}

ConditionReport gaussian_spread_check(const MeasureSpec& spec, Smoothing smoothing) {
    const auto* g = std::get_if<Gaussian>(&spec);
    if (!g)
        throw config_error("the eigenvalue-spread condition applies to Gaussian "
                           "references only");
    validate(spec);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g->covariance,
                                                      Eigen::EigenvaluesOnly);
    ConditionReport report;
    report.name = "gaussian_spread";
    report.lhs = es.eigenvalues().maxCoeff();
    report.rhs = es.eigenvalues().minCoeff() + 0.5 * smoothing.sigma2();
    report.holds = report.lhs < report.rhs;
    report.detail = "largest covariance eigenvalue vs smallest plus sigma^2 / 2";
    return report;
}

MomentEstimate exp_moment(const MeasureSpec& spec, double eta, std::size_t draws,
                          std::uint64_t seed) {
    validate(spec);
    if (draws < 2) throw config_error("moment estimate needs at least 2 draws");
    const Eigen::VectorXd mu = mean_of(spec);
    const Sample s = sample(spec, draws, seed);
    std::vector<double> terms(draws);
    for (std::size_t i = 0; i < draws; ++i) {
        const double r2 =
            (s.points.row(static_cast<Eigen::Index>(i)).transpose() - mu).squaredNorm();
        terms[i] = std::exp(eta * r2);
    }
    MomentEstimate out;
    out.mean = pairwise_mean(terms);
    std::vector<double> sq(draws);
    for (std::size_t i = 0; i < draws; ++i) {
        const double dev = terms[i] - out.mean;
        sq[i] = dev * dev;
    }
    out.se = std::sqrt(pairwise_sum(sq) / (draws - 1.0) / draws);
    out.draws = draws;
    return out;
}

ConditionReport subgaussian_mgf_check(const MeasureSpec& spec, double eta,
                                      std::size_t draws, std::uint64_t seed) {
    const double beta = subgaussian_parameter(spec);
    if (!(eta > 0.0) || !(eta < 1.0 / (2.0 * beta * beta)))
        throw config_error("moment rate eta must lie in (0, 1 / (2 beta^2))");
    const double d = static_cast<double>(dimension(spec));
    const MomentEstimate lhs = exp_moment(spec, eta, draws, seed);
    const double rhs = std::pow(1.0 - 2.0 * beta * beta * eta, -0.5 * d);

    ConditionReport report;
    report.name = "subgaussian_mgf";
    report.lhs = lhs.mean;
    report.rhs = rhs;
    report.holds = lhs.mean <= rhs * (1.0 + 3.0 * lhs.se / std::max(lhs.mean, 1e-300));
    std::ostringstream detail;
    detail << "monte carlo mean over " << draws << " draws, se " << lhs.se;
    report.detail = detail.str();
    return report;
}

double concentration_bound(std::size_t n, double t) {
    if (!(t >= 0.0)) throw config_error("concentration threshold must be nonnegative");
    return std::exp(-0.5 * static_cast<double>(n) * t * t);
}

ConditionReport tv_integral_saturation(const MeasureSpec& spec, Smoothing smoothing,
                                       int grid_points, double eps) {
    return saturation_report("tv_integral_saturation", spec, smoothing, grid_points,
                             eps, sqrt_variance_fn(spec, smoothing));
}

ConditionReport chi2_integral_saturation(const MeasureSpec& spec, Smoothing smoothing,
                                         int grid_points, double eps) {
    return saturation_report("chi2_integral_saturation", spec, smoothing, grid_points,
                             eps, variance_over_density_fn(spec, smoothing));
}

}  // namespace smoothdiv

#include "smoothdiv/divergence.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "smoothdiv/parallel.hpp"
#include "smoothdiv/rng.hpp"

namespace smoothdiv {

namespace {

constexpr Eigen::Index kNodeBlock = 512;

// Corners and face centers of the box; the minimum reference density over
// these probes is the chi-squared denominator floor.
Eigen::MatrixXd boundary_probes(const IntegrationBox& box) {
    const Eigen::Index d = box.lo.size();
    const Eigen::VectorXd center = 0.5 * (box.lo + box.hi);
    Eigen::MatrixXd probes(2 + 2 * d, d);
    probes.row(0) = box.lo.transpose();
    probes.row(1) = box.hi.transpose();
    for (Eigen::Index a = 0; a < d; ++a) {
        probes.row(2 + 2 * a) = center.transpose();
        probes(2 + 2 * a, a) = box.lo[a];
        probes.row(3 + 2 * a) = center.transpose();
        probes(3 + 2 * a, a) = box.hi[a];
    }
    return probes;
}

double density_floor(const MeasureSpec& spec, Smoothing smoothing,
                     const IntegrationBox& box) {
    const Eigen::VectorXd rho = smoothed_density(spec, smoothing, boundary_probes(box));
    double floor = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < rho.size(); ++i)
        if (rho[i] > 0.0) floor = std::min(floor, rho[i]);
    if (!std::isfinite(floor))
        throw numeric_error("reference density underflows on the whole box boundary");
    return floor;
}

}  // namespace

IntegrationPlan default_plan(const MeasureSpec& spec, Smoothing smoothing,
                             int grid_points, std::size_t draws, double eps,
                             std::uint64_t seed) {
    const IntegrationBox box = choose_box(spec, smoothing, eps);
    if (dimension(spec) <= 2)
        return GridPlan{TensorGrid{box, grid_points}, eps};
    return ImportancePlan{
        ImportanceRule{default_proposal(spec, smoothing), draws,
                       mix_seed(seed, streams::proposal, 0)},
        box, eps};
}

Eigen::VectorXd empirical_smoothed_density(const Sample& s, Smoothing smoothing,
                                           const Eigen::MatrixXd& nodes) {
    const Eigen::Index n = s.points.rows();
    const Eigen::Index d = s.points.cols();
    if (n < 1) throw config_error("empirical density needs a nonempty sample");
    if (nodes.cols() != d)
        throw config_error("empirical density: node dimension does not match the sample");
    const double s2 = smoothing.sigma2();
    const double log_norm =
        -0.5 * d * std::log(2.0 * std::numbers::pi * s2) - std::log(static_cast<double>(n));

    const Eigen::VectorXd sample_sq = s.points.rowwise().squaredNorm();
    Eigen::VectorXd out(nodes.rows());
    for (Eigen::Index at = 0; at < nodes.rows(); at += kNodeBlock) {
        const Eigen::Index b = std::min(kNodeBlock, nodes.rows() - at);
        const auto block = nodes.middleRows(at, b);
        Eigen::MatrixXd e = s.points * block.transpose();  // n x b
        e *= 1.0 / s2;
        e.colwise() -= sample_sq * (0.5 / s2);
        e.rowwise() -= (block.rowwise().squaredNorm() * (0.5 / s2)).transpose();
        out.segment(at, b) = (e.array() + log_norm).exp().colwise().sum().transpose();
    }
    return out;
}

double empirical_smoothed_density(const Sample& s, Smoothing smoothing,
                                  const Eigen::VectorXd& x) {
    return empirical_smoothed_density(s, smoothing, Eigen::MatrixXd(x.transpose()))[0];
}

struct DivergenceEvaluator::Impl {
    MeasureSpec spec;
    Smoothing smoothing;
    IntegrationPlan plan;
    double floor = 0.0;

    // Grid plan state: full and half resolution lattices with their
    // reference curves.
    Eigen::MatrixXd nodes_full, nodes_half;
    Eigen::VectorXd rho_full, rho_half;
    double weight_full = 0.0, weight_half = 0.0;

    // Importance plan state: proposal draws with reference values.
    Eigen::MatrixXd draws;
    Eigen::VectorXd q, rho_draws;
    Eigen::Array<bool, Eigen::Dynamic, 1> in_box;

    Impl(MeasureSpec s, Smoothing sm, IntegrationPlan p)
        : spec(std::move(s)), smoothing(sm), plan(std::move(p)) {
        validate(spec);
        if (const auto* g = std::get_if<GridPlan>(&plan)) {
            floor = density_floor(spec, smoothing, g->grid.box);
            nodes_full = grid_nodes(g->grid);
            rho_full = smoothed_density(spec, smoothing, nodes_full);
            weight_full = cell_volume(g->grid);
            TensorGrid half = g->grid;
            half.points_per_axis = std::max(1, g->grid.points_per_axis / 2);
            nodes_half = grid_nodes(half);
            rho_half = smoothed_density(spec, smoothing, nodes_half);
            weight_half = cell_volume(half);
        } else {
            const auto& ip = std::get<ImportancePlan>(plan);
            floor = density_floor(spec, smoothing, ip.box);
            const Sample proposal_draws =
                sample(ip.rule.proposal, ip.rule.draws, ip.rule.seed);
            draws = proposal_draws.points;
            q = proposal_density(ip.rule.proposal, draws);
            rho_draws = smoothed_density(spec, smoothing, draws);
            in_box.resize(draws.rows());
            for (Eigen::Index i = 0; i < draws.rows(); ++i)
                in_box[i] = (draws.row(i).transpose().array() >= ip.box.lo.array()).all() &&
                            (draws.row(i).transpose().array() <= ip.box.hi.array()).all();
        }
    }

    // Integrals of |rho_n - rho| and of the floored chi-squared integrand on
    // one lattice.
    std::pair<double, double> grid_pass(const Sample& s, const Eigen::MatrixXd& nodes,
                                        const Eigen::VectorXd& rho, double weight) const {
        const Eigen::VectorXd rho_n = empirical_smoothed_density(s, smoothing, nodes);
        const Eigen::Index n = nodes.rows();
        std::vector<double> tv_terms(static_cast<std::size_t>(n));
        std::vector<double> chi2_terms(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            const double diff = rho_n[i] - rho[i];
            tv_terms[static_cast<std::size_t>(i)] = std::abs(diff);
            chi2_terms[static_cast<std::size_t>(i)] =
                diff * diff / std::max(rho[i], floor);
        }
        return {weight * pairwise_sum(tv_terms), weight * pairwise_sum(chi2_terms)};
    }

    DivergencePair evaluate(const Sample& s) const {
        DivergencePair out;
        const std::size_t n = static_cast<std::size_t>(s.points.rows());
        const double sigma = smoothing.sigma();

        if (const auto* g = std::get_if<GridPlan>(&plan)) {
            const auto [tv_fine, chi2_fine] = grid_pass(s, nodes_full, rho_full, weight_full);
            const auto [tv_rough, chi2_rough] = grid_pass(s, nodes_half, rho_half, weight_half);
            // The box holds all but box_eps of the smoothed reference mass,
            // so the truncated TV tail is at most box_eps / 2.
            out.tv = {0.5 * tv_fine,
                      0.5 * std::abs(tv_fine - tv_rough) + 0.5 * g->box_eps, n, sigma};
            out.chi2 = {chi2_fine, std::abs(chi2_fine - chi2_rough), n, sigma};
            return out;
        }

        const Eigen::VectorXd rho_n = empirical_smoothed_density(s, smoothing, draws);
        const Eigen::Index m = draws.rows();
        std::vector<double> tv_ratios(static_cast<std::size_t>(m));
        std::vector<double> chi2_ratios(static_cast<std::size_t>(m));
        for (Eigen::Index i = 0; i < m; ++i) {
            const double diff = rho_n[i] - rho_draws[i];
            const double tv_r = std::abs(diff) / q[i];
            const double chi2_r =
                in_box[i] ? diff * diff / (std::max(rho_draws[i], floor) * q[i]) : 0.0;
            if (!std::isfinite(tv_r) || !std::isfinite(chi2_r))
                throw numeric_error("importance ratio is not finite; the proposal "
                                    "does not cover the divergence integrand");
            tv_ratios[static_cast<std::size_t>(i)] = tv_r;
            chi2_ratios[static_cast<std::size_t>(i)] = chi2_r;
        }
        auto mean_se = [](const std::vector<double>& v) {
            const double mean = pairwise_mean(v);
            std::vector<double> sq(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) {
                const double dev = v[i] - mean;
                sq[i] = dev * dev;
            }
            const double var = pairwise_sum(sq) / (static_cast<double>(v.size()) - 1.0);
            return std::pair{mean, std::sqrt(var / static_cast<double>(v.size()))};
        };
        const auto [tv_mean, tv_se] = mean_se(tv_ratios);
        const auto [chi2_mean, chi2_se] = mean_se(chi2_ratios);
        out.tv = {0.5 * tv_mean, 0.5 * tv_se, n, sigma};
        out.chi2 = {chi2_mean, chi2_se, n, sigma};
        return out;
    }
};

DivergenceEvaluator::DivergenceEvaluator(MeasureSpec spec, Smoothing smoothing,
                                         IntegrationPlan plan)
    : impl_(std::make_unique<Impl>(std::move(spec), smoothing, std::move(plan))) {}

DivergenceEvaluator::~DivergenceEvaluator() = default;
DivergenceEvaluator::DivergenceEvaluator(DivergenceEvaluator&&) noexcept = default;
DivergenceEvaluator& DivergenceEvaluator::operator=(DivergenceEvaluator&&) noexcept =
    default;

DivergencePair DivergenceEvaluator::operator()(const Sample& s) const {
    return impl_->evaluate(s);
}

const IntegrationPlan& DivergenceEvaluator::plan() const { return impl_->plan; }

double DivergenceEvaluator::denominator_floor() const { return impl_->floor; }

DivergencePair smooth_divergences(const Sample& s, const MeasureSpec& spec,
                                  Smoothing smoothing, const IntegrationPlan& plan) {
    return DivergenceEvaluator(spec, smoothing, plan)(s);
}

DivergenceResult smooth_tv(const Sample& s, const MeasureSpec& spec, Smoothing smoothing,
                           const IntegrationPlan& plan) {
    return smooth_divergences(s, spec, smoothing, plan).tv;
}

DivergenceResult smooth_chi2(const Sample& s, const MeasureSpec& spec,
                             Smoothing smoothing, const IntegrationPlan& plan) {
    return smooth_divergences(s, spec, smoothing, plan).chi2;
}

}  // namespace smoothdiv

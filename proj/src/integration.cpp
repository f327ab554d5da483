#include "smoothdiv/integration.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "smoothdiv/parallel.hpp"
#include "smoothdiv/special.hpp"

namespace smoothdiv {

namespace {

constexpr Eigen::Index kEvalBlock = 16384;

// Radius around the overall mean that holds 1 - eps of the raw measure.
double spread_radius(const MeasureSpec& spec, double eps) {
    const Eigen::VectorXd center = mean_of(spec);
    const int d = static_cast<int>(dimension(spec));
    return std::visit(
        [&](const auto& m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Gaussian>) {
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.covariance,
                                                                  Eigen::EigenvaluesOnly);
                const double lambda = std::max(es.eigenvalues().maxCoeff(), 0.0);
                return std::sqrt(lambda * chi_squared_isf(d, eps));
            } else if constexpr (std::is_same_v<T, GaussianMixture>) {
                double r = 0.0;
                for (const auto& c : m.components) {
                    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
                        c.covariance, Eigen::EigenvaluesOnly);
                    const double lambda = std::max(es.eigenvalues().maxCoeff(), 0.0);
                    r = std::max(r, (c.mean - center).norm() +
                                        std::sqrt(lambda * chi_squared_isf(d, eps)));
                }
                return r;
            } else if constexpr (std::is_same_v<T, UniformBox>) {
                return 0.5 * (m.hi - m.lo).norm();
            } else {
                double r = 0.0;
                for (Eigen::Index j = 0; j < m.points.rows(); ++j)
                    r = std::max(r, (m.points.row(j).transpose() - center).norm());
                return r;
            }
        },
        spec);
}

double grid_integral(const TensorGrid& grid, const BatchFn& fn) {
    const Eigen::Index n = grid_size(grid);
    const Eigen::MatrixXd nodes = grid_nodes(grid);
    std::vector<double> values(static_cast<std::size_t>(n));
    for (Eigen::Index at = 0; at < n; at += kEvalBlock) {
        const Eigen::Index b = std::min(kEvalBlock, n - at);
        const Eigen::VectorXd block = fn(nodes.middleRows(at, b));
        if (block.size() != b)
            throw numeric_error("grid integrand returned the wrong number of values");
        for (Eigen::Index i = 0; i < b; ++i)
            values[static_cast<std::size_t>(at + i)] = block[i];
    }
    return cell_volume(grid) * pairwise_sum(values);
}

}  // namespace

IntegrationBox choose_box(const MeasureSpec& spec, Smoothing smoothing, double eps) {
    validate(spec);
    if (!(eps > 0.0) || !(eps < 1.0))
        throw config_error("box mass tolerance must lie in (0, 1)");
    const int d = static_cast<int>(dimension(spec));
    const Eigen::VectorXd center = mean_of(spec);
    const double kernel_radius =
        smoothing.sigma() * std::sqrt(chi_squared_isf(d, 0.5 * eps));
    const double r = spread_radius(spec, 0.5 * eps) + kernel_radius;
    return {center.array() - r, center.array() + r};
}

Eigen::Index grid_size(const TensorGrid& grid) {
    const Eigen::Index d = grid.box.lo.size();
    Eigen::Index n = 1;
    for (Eigen::Index a = 0; a < d; ++a) n *= grid.points_per_axis;
    return n;
}

Eigen::MatrixXd grid_nodes(const TensorGrid& grid) {
    const Eigen::Index d = grid.box.lo.size();
    if (d < 1 || d > 3)
        throw config_error("tensor grids support 1 to 3 dimensions");
    if (grid.points_per_axis < 1)
        throw config_error("tensor grid needs at least one point per axis");
    if (grid.box.hi.size() != d || !((grid.box.hi - grid.box.lo).array() > 0.0).all())
        throw config_error("tensor grid box must satisfy lo < hi per axis");

    const Eigen::Index p = grid.points_per_axis;
    const Eigen::VectorXd step = (grid.box.hi - grid.box.lo) / static_cast<double>(p);
    Eigen::MatrixXd nodes(grid_size(grid), d);
    for (Eigen::Index i = 0; i < nodes.rows(); ++i) {
        Eigen::Index rest = i;
        for (Eigen::Index a = d - 1; a >= 0; --a) {
            const Eigen::Index idx = rest % p;
            rest /= p;
            nodes(i, a) = grid.box.lo[a] + (static_cast<double>(idx) + 0.5) * step[a];
        }
    }
    return nodes;
}

double cell_volume(const TensorGrid& grid) {
    const Eigen::Index d = grid.box.lo.size();
    double v = 1.0;
    for (Eigen::Index a = 0; a < d; ++a)
        v *= (grid.box.hi[a] - grid.box.lo[a]) / grid.points_per_axis;
    return v;
}

EstimateWithError integrate_grid(const TensorGrid& grid, const BatchFn& fn) {
    const double fine = grid_integral(grid, fn);
    TensorGrid coarse = grid;
    coarse.points_per_axis = std::max(1, grid.points_per_axis / 2);
    const double rough = grid_integral(coarse, fn);
    return {fine, std::abs(fine - rough), "grid"};
}

Eigen::VectorXd proposal_density(const MeasureSpec& proposal, const Eigen::MatrixXd& nodes) {
    return std::visit(
        [&](const auto& m) -> Eigen::VectorXd {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Gaussian> ||
                          std::is_same_v<T, GaussianMixture>) {
                // Bandwidth zero would be ill-typed for Smoothing; density of
                // the raw Gaussian family is the same closed form without the
                // kernel inflation, so evaluate each component directly.
                Eigen::VectorXd out = Eigen::VectorXd::Zero(nodes.rows());
                if constexpr (std::is_same_v<T, Gaussian>) {
                    for (Eigen::Index i = 0; i < nodes.rows(); ++i)
                        out[i] = gaussian_density(nodes.row(i).transpose(), m.mean,
                                                  m.covariance);
                } else {
                    for (Eigen::Index i = 0; i < nodes.rows(); ++i) {
                        double acc = 0.0;
                        for (std::size_t k = 0; k < m.components.size(); ++k)
                            acc += m.weights[k] *
                                   gaussian_density(nodes.row(i).transpose(),
                                                    m.components[k].mean,
                                                    m.components[k].covariance);
                        out[i] = acc;
                    }
                }
                return out;
            } else if constexpr (std::is_same_v<T, UniformBox>) {
                const double density = 1.0 / (m.hi - m.lo).prod();
                Eigen::VectorXd out(nodes.rows());
                for (Eigen::Index i = 0; i < nodes.rows(); ++i) {
                    const bool inside = (nodes.row(i).transpose().array() >= m.lo.array()).all() &&
                                        (nodes.row(i).transpose().array() <= m.hi.array()).all();
                    out[i] = inside ? density : 0.0;
                }
                return out;
            } else {
                throw config_error("point clouds have no density and cannot be proposals");
            }
        },
        proposal);
}

EstimateWithError integrate_importance(const ImportanceRule& rule, const BatchFn& fn) {
    if (rule.draws < 2) throw config_error("importance sampling needs at least 2 draws");
    const Sample s = sample(rule.proposal, rule.draws, rule.seed);
    const Eigen::VectorXd q = proposal_density(rule.proposal, s.points);

    const Eigen::Index n = s.points.rows();
    std::vector<double> ratios(static_cast<std::size_t>(n));
    for (Eigen::Index at = 0; at < n; at += kEvalBlock) {
        const Eigen::Index b = std::min(kEvalBlock, n - at);
        const Eigen::VectorXd f = fn(s.points.middleRows(at, b));
        for (Eigen::Index i = 0; i < b; ++i) {
            const double r = f[i] / q[at + i];
            if (!std::isfinite(r))
                throw numeric_error("importance ratio is not finite; the proposal "
                                    "does not cover the integrand");
            ratios[static_cast<std::size_t>(at + i)] = r;
        }
    }
    const double mean = pairwise_mean(ratios);
    std::vector<double> sq(ratios.size());
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        const double dev = ratios[i] - mean;
        sq[i] = dev * dev;
    }
    const double var = pairwise_sum(sq) / (static_cast<double>(ratios.size()) - 1.0);
    const double se = std::sqrt(var / static_cast<double>(ratios.size()));
    return {mean, se, "importance"};
}

MeasureSpec default_proposal(const MeasureSpec& spec, Smoothing smoothing) {
    Gaussian g;
    g.mean = mean_of(spec);
    g.covariance = 2.0 * covariance_of(spec);
    g.covariance.diagonal().array() += 2.0 * smoothing.sigma2();
    return g;
}

}  // namespace smoothdiv

#include "smoothdiv/measures.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "smoothdiv/parallel.hpp"
#include "smoothdiv/rng.hpp"
#include "smoothdiv/special.hpp"

namespace smoothdiv {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::size_t kTailDraws = 1'000'000;
constexpr std::uint64_t kTailMaster = 0x5eedb0875a11c0deULL;  // fixed, shared by all measures

double weight_sum(const Eigen::VectorXd& w) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) s += w[i];
    return s;
}

void check_weights(const Eigen::VectorXd& w, const char* what) {
    if (w.size() == 0) throw config_error(std::string(what) + ": weights are empty");
    if ((w.array() < 0.0).any())
        throw config_error(std::string(what) + ": weights must be nonnegative");
    if (std::abs(weight_sum(w) - 1.0) > 1e-9)
        throw config_error(std::string(what) + ": weights must sum to 1");
}

void check_gaussian(const Gaussian& g) {
    const Eigen::Index d = g.mean.size();
    if (d < 1) throw config_error("gaussian: mean is empty");
    if (g.covariance.rows() != d || g.covariance.cols() != d)
        throw config_error("gaussian: covariance shape does not match the mean");
    if (!g.covariance.isApprox(g.covariance.transpose(), 1e-12))
        throw config_error("gaussian: covariance must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.covariance,
                                                      Eigen::EigenvaluesOnly);
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < -1e-12 * scale)
        throw config_error("gaussian: covariance must be positive semidefinite");
}

// Smoothed density of a single Gaussian component: N(mean, covariance + sigma^2 I).
Eigen::VectorXd gaussian_smoothed(const Gaussian& g, double sigma2,
                                  const Eigen::MatrixXd& nodes) {
    const Eigen::Index d = g.mean.size();
    Eigen::MatrixXd s = g.covariance;
    s.diagonal().array() += sigma2;
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success)
        throw numeric_error("smoothed gaussian covariance failed to factor");
    const Eigen::MatrixXd l = llt.matrixL();
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) log_det += 2.0 * std::log(l(i, i));

    Eigen::MatrixXd diff = nodes.transpose();  // d x N
    diff.colwise() -= g.mean;
    const Eigen::MatrixXd y = l.triangularView<Eigen::Lower>().solve(diff);
    const double log_norm = -0.5 * (log_det + d * std::log(kTwoPi));
    return ((y.colwise().squaredNorm().array() * -0.5) + log_norm).exp().transpose();
}

// Canonical byte key for the tail cache; identical specs share one sample.
std::string cache_key(const MeasureSpec& spec) {
    std::string key = family_name(spec);
    auto push = [&key](const double* p, std::size_t count) {
        const std::size_t old = key.size();
        key.resize(old + count * sizeof(double));
        std::memcpy(key.data() + old, p, count * sizeof(double));
    };
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Gaussian>) {
                push(m.mean.data(), m.mean.size());
                push(m.covariance.data(), m.covariance.size());
            } else if constexpr (std::is_same_v<T, GaussianMixture>) {
                push(m.weights.data(), m.weights.size());
                for (const auto& c : m.components) {
                    push(c.mean.data(), c.mean.size());
                    push(c.covariance.data(), c.covariance.size());
                }
            } else if constexpr (std::is_same_v<T, UniformBox>) {
                push(m.lo.data(), m.lo.size());
                push(m.hi.data(), m.hi.size());
            } else {
                push(m.points.data(), m.points.size());
                push(m.weights.data(), m.weights.size());
            }
        },
        spec);
    return key;
}

// Sorted norms of a fixed-seed sample, cached per measure.
const std::vector<double>& tail_norms(const MeasureSpec& spec) {
    static std::mutex mu;
    static std::map<std::string, std::shared_ptr<std::vector<double>>> cache;
    const std::string key = cache_key(spec);
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return *it->second;
    }
    const Sample s = sample(spec, kTailDraws, mix_seed(kTailMaster, streams::tail, 0));
    auto norms = std::make_shared<std::vector<double>>(kTailDraws);
    for (std::size_t i = 0; i < kTailDraws; ++i)
        (*norms)[i] = s.points.row(static_cast<Eigen::Index>(i)).norm();
    std::sort(norms->begin(), norms->end());
    std::lock_guard<std::mutex> lock(mu);
    auto [it, inserted] = cache.emplace(key, std::move(norms));
    return *it->second;
}

bool is_centered_isotropic(const Gaussian& g, double* lambda) {
    if (g.mean.lpNorm<Eigen::Infinity>() != 0.0) return false;
    const double l0 = g.covariance(0, 0);
    for (Eigen::Index i = 0; i < g.covariance.rows(); ++i)
        for (Eigen::Index j = 0; j < g.covariance.cols(); ++j)
            if (g.covariance(i, j) != (i == j ? l0 : 0.0)) return false;
    if (!(l0 > 0.0)) return false;
    *lambda = l0;
    return true;
}

}  // namespace

Eigen::Index dimension(const MeasureSpec& spec) {
    return std::visit(
        [](const auto& m) -> Eigen::Index {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Gaussian>) return m.mean.size();
            else if constexpr (std::is_same_v<T, GaussianMixture>)
                return m.components.empty() ? 0 : m.components.front().mean.size();
            else if constexpr (std::is_same_v<T, UniformBox>) return m.lo.size();
            else return m.points.cols();
        },
        spec);
}

std::string family_name(const MeasureSpec& spec) {
    return std::visit(
        [](const auto& m) -> std::string {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Gaussian>) return "gaussian";
            else if constexpr (std::is_same_v<T, GaussianMixture>) return "gaussian_mixture";
            else if constexpr (std::is_same_v<T, UniformBox>) return "uniform_box";
            else return "point_cloud";
        },
        spec);
}

void validate(const MeasureSpec& spec) {
    const Eigen::Index d = dimension(spec);
    if (d < 1) throw config_error("measure has no dimensions");
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Gaussian>) {
                check_gaussian(m);
            } else if constexpr (std::is_same_v<T, GaussianMixture>) {
                if (m.components.empty())
                    throw config_error("gaussian_mixture: no components");
                if (m.weights.size() != m.components.size())
                    throw config_error("gaussian_mixture: weights and components disagree");
                Eigen::VectorXd w =
                    Eigen::Map<const Eigen::VectorXd>(m.weights.data(),
                                                      static_cast<Eigen::Index>(m.weights.size()));
                check_weights(w, "gaussian_mixture");
                for (const auto& c : m.components) {
                    if (c.mean.size() != d)
                        throw config_error("gaussian_mixture: component dimensions disagree");
                    check_gaussian(c);
                }
            } else if constexpr (std::is_same_v<T, UniformBox>) {
                if (m.hi.size() != d)
                    throw config_error("uniform_box: lo and hi lengths disagree");
                if (!((m.hi - m.lo).array() > 0.0).all())
                    throw config_error("uniform_box: requires lo < hi on every axis");
            } else {
                if (m.points.rows() < 1) throw config_error("point_cloud: no atoms");
                if (m.weights.size() != m.points.rows())
                    throw config_error("point_cloud: weights and atoms disagree");
                check_weights(m.weights, "point_cloud");
            }
        },
        spec);
}

Eigen::VectorXd mean_of(const MeasureSpec& spec) {
    return std::visit(
        [&](const auto& m) -> Eigen::VectorXd {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Gaussian>) return m.mean;
            else if constexpr (std::is_same_v<T, GaussianMixture>) {
                Eigen::VectorXd mu = Eigen::VectorXd::Zero(dimension(spec));
                for (std::size_t k = 0; k < m.components.size(); ++k)
                    mu += m.weights[k] * m.components[k].mean;
                return mu;
            } else if constexpr (std::is_same_v<T, UniformBox>)
                return 0.5 * (m.lo + m.hi);
            else
                return m.points.transpose() * m.weights;
        },
        spec);
}

Eigen::MatrixXd covariance_of(const MeasureSpec& spec) {
    const Eigen::Index d = dimension(spec);
    return std::visit(
        [&](const auto& m) -> Eigen::MatrixXd {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Gaussian>) return m.covariance;
            else if constexpr (std::is_same_v<T, GaussianMixture>) {
                const Eigen::VectorXd mu = mean_of(spec);
                Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
                for (std::size_t k = 0; k < m.components.size(); ++k) {
                    const Eigen::VectorXd delta = m.components[k].mean - mu;
                    c += m.weights[k] * (m.components[k].covariance +
                                         delta * delta.transpose());
                }
                return c;
            } else if constexpr (std::is_same_v<T, UniformBox>) {
                return ((m.hi - m.lo).array().square() / 12.0).matrix().asDiagonal();
            } else {
                const Eigen::VectorXd mu = mean_of(spec);
                Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
                for (Eigen::Index j = 0; j < m.points.rows(); ++j) {
                    const Eigen::VectorXd delta = m.points.row(j).transpose() - mu;
                    c += m.weights[j] * delta * delta.transpose();
                }
                return c;
            }
        },
        spec);
}

double gaussian_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                        const Eigen::MatrixXd& covariance) {
    Gaussian g{mean, covariance};
    Eigen::MatrixXd node = x.transpose();
    return gaussian_smoothed(g, 0.0, node)[0];
}

namespace detail {

Eigen::MatrixXd gaussian_factor(const Eigen::MatrixXd& covariance) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance);
    if (es.info() != Eigen::Success)
        throw numeric_error("covariance eigendecomposition failed");
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    Eigen::VectorXd lambda = es.eigenvalues();
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
        if (lambda[i] < -1e-12 * scale)
            throw config_error("covariance must be positive semidefinite");
        lambda[i] = std::sqrt(std::max(lambda[i], 0.0));
    }
    return es.eigenvectors() * lambda.asDiagonal();
}

double variance_from_parts(double squared_mean, double density,
                           double kernel_scale) {
    const double v = squared_mean - density * density;
    // A formula bug shows up as a variance that is meaningfully negative at
    // the working scale of the computation.  Negative residue far below that
    // scale is tail cancellation (the two closed forms lose their last
    // digits at different radii, e.g. a box reference whose narrow-bandwidth
    // erf difference underflows to zero while the density is still 1e-9) and
    // is an exact zero.  The scale must not depend on which nodes happen to
    // share the evaluation batch, so callers pass the squared kernel peak,
    // which caps both arguments for every reference measure.
    if (v < -1e-10 * kernel_scale)
        throw numeric_error("variance function went negative beyond roundoff");
    if (v <= 0.0) return 0.0;
    // The forms also cancel to a +/- 1e-16 relative residue when the kernel
    // is a constant of X (a one-atom reference).  A magnitude that small is
    // an exact zero, and returning it as such keeps the downstream field
    // factorization exactly degenerate instead of noise-scaled.
    if (v <= 1e-12 * std::max(squared_mean, density * density)) return 0.0;
    return v;
}

}  // namespace detail

Sample sample(const MeasureSpec& spec, std::size_t n, std::uint64_t seed) {
    validate(spec);
    const Eigen::Index d = dimension(spec);
    Sample out;
    out.points.resize(static_cast<Eigen::Index>(n), d);
    out.seed = seed;
    out.source = family_name(spec);
    Rng rng(seed);

    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Gaussian>) {
                const Eigen::MatrixXd b = detail::gaussian_factor(m.covariance);
                for (std::size_t i = 0; i < n; ++i)
                    out.points.row(static_cast<Eigen::Index>(i)) =
                        (m.mean + b * rng.normal_vector(d)).transpose();
            } else if constexpr (std::is_same_v<T, GaussianMixture>) {
                std::vector<Eigen::MatrixXd> factors;
                factors.reserve(m.components.size());
                for (const auto& c : m.components)
                    factors.push_back(detail::gaussian_factor(c.covariance));
                for (std::size_t i = 0; i < n; ++i) {
                    const double u = rng.uniform();
                    double acc = 0.0;
                    std::size_t k = 0;
                    for (; k + 1 < m.weights.size(); ++k) {
                        acc += m.weights[k];
                        if (u < acc) break;
                    }
                    out.points.row(static_cast<Eigen::Index>(i)) =
                        (m.components[k].mean + factors[k] * rng.normal_vector(d))
                            .transpose();
                }
            } else if constexpr (std::is_same_v<T, UniformBox>) {
                for (std::size_t i = 0; i < n; ++i)
                    for (Eigen::Index a = 0; a < d; ++a)
                        out.points(static_cast<Eigen::Index>(i), a) =
                            m.lo[a] + rng.uniform() * (m.hi[a] - m.lo[a]);
            } else {
                Eigen::VectorXd cumulative(m.weights.size());
                double acc = 0.0;
                for (Eigen::Index j = 0; j < m.weights.size(); ++j)
                    cumulative[j] = (acc += m.weights[j]);
                for (std::size_t i = 0; i < n; ++i) {
                    const double u = rng.uniform() * acc;
                    Eigen::Index j = 0;
                    while (j + 1 < cumulative.size() && u >= cumulative[j]) ++j;
                    out.points.row(static_cast<Eigen::Index>(i)) = m.points.row(j);
                }
            }
        },
        spec);
    return out;
}

Eigen::VectorXd smoothed_density(const MeasureSpec& spec, Smoothing smoothing,
                                 const Eigen::MatrixXd& nodes) {
    const Eigen::Index d = dimension(spec);
    if (nodes.cols() != d)
        throw config_error("smoothed_density: node dimension does not match the measure");
    const double s2 = smoothing.sigma2();

    return std::visit(
        [&](const auto& m) -> Eigen::VectorXd {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Gaussian>) {
                return gaussian_smoothed(m, s2, nodes);
            } else if constexpr (std::is_same_v<T, GaussianMixture>) {
                Eigen::VectorXd out = Eigen::VectorXd::Zero(nodes.rows());
                for (std::size_t k = 0; k < m.components.size(); ++k)
                    out += m.weights[k] * gaussian_smoothed(m.components[k], s2, nodes);
                return out;
            } else if constexpr (std::is_same_v<T, UniformBox>) {
                // Per-axis factor: mass of the kernel between the box walls,
                // divided by the wall separation.
                const double inv_sigma = 1.0 / smoothing.sigma();
                Eigen::VectorXd out = Eigen::VectorXd::Ones(nodes.rows());
                for (Eigen::Index a = 0; a < d; ++a) {
                    const double width = m.hi[a] - m.lo[a];
                    for (Eigen::Index i = 0; i < nodes.rows(); ++i) {
                        const double z_lo = (nodes(i, a) - m.lo[a]) * inv_sigma;
                        const double z_hi = (nodes(i, a) - m.hi[a]) * inv_sigma;
                        out[i] *= (normal_cdf(z_lo) - normal_cdf(z_hi)) / width;
                    }
                }
                return out;
            } else {
                const double log_norm = -0.5 * d * std::log(kTwoPi * s2);
                const Eigen::VectorXd atom_sq = m.points.rowwise().squaredNorm();
                const Eigen::VectorXd node_sq = nodes.rowwise().squaredNorm();
                Eigen::VectorXd out(nodes.rows());
                constexpr Eigen::Index block = 4096;
                for (Eigen::Index at = 0; at < nodes.rows(); at += block) {
                    const Eigen::Index b = std::min(block, nodes.rows() - at);
                    Eigen::MatrixXd e = nodes.middleRows(at, b) * m.points.transpose();
                    e *= 1.0 / s2;
                    e.colwise() -= node_sq.segment(at, b) * (0.5 / s2);
                    e.rowwise() -= atom_sq.transpose() * (0.5 / s2);
                    out.segment(at, b) =
                        ((e.array() + log_norm).exp().matrix() * m.weights);
                }
                return out;
            }
        },
        spec);
}

double smoothed_density(const MeasureSpec& spec, Smoothing smoothing,
                        const Eigen::VectorXd& x) {
    return smoothed_density(spec, smoothing, Eigen::MatrixXd(x.transpose()))[0];
}

Eigen::VectorXd squared_kernel_mean(const MeasureSpec& spec, Smoothing smoothing,
                                    const Eigen::MatrixXd& nodes) {
    const double d = static_cast<double>(dimension(spec));
    const double scale = std::pow(4.0 * std::numbers::pi * smoothing.sigma2(), -0.5 * d);
    const Smoothing narrow(smoothing.sigma() / std::numbers::sqrt2);
    return scale * smoothed_density(spec, narrow, nodes);
}

double squared_kernel_mean(const MeasureSpec& spec, Smoothing smoothing,
                           const Eigen::VectorXd& x) {
    return squared_kernel_mean(spec, smoothing, Eigen::MatrixXd(x.transpose()))[0];
}

Eigen::VectorXd variance_function(const MeasureSpec& spec, Smoothing smoothing,
                                  const Eigen::MatrixXd& nodes) {
    const Eigen::VectorXd m2 = squared_kernel_mean(spec, smoothing, nodes);
    const Eigen::VectorXd rho = smoothed_density(spec, smoothing, nodes);
    const double scale = std::pow(2.0 * std::numbers::pi * smoothing.sigma2(),
                                  -static_cast<double>(nodes.cols()));
    Eigen::VectorXd v(nodes.rows());
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = detail::variance_from_parts(m2[i], rho[i], scale);
    return v;
}

Eigen::MatrixXd covariance_kernel(const MeasureSpec& spec, Smoothing smoothing,
                                  const Eigen::MatrixXd& nodes) {
    const Eigen::Index n = nodes.rows();
    const Eigen::Index d = nodes.cols();
    const double s2 = smoothing.sigma2();
    const double pair_norm = std::pow(4.0 * std::numbers::pi * s2, -0.5 * d);

    // Midpoint density at bandwidth sigma/sqrt 2 for every node pair.
    Eigen::MatrixXd midpoints(n * n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            midpoints.row(i * n + j) = 0.5 * (nodes.row(i) + nodes.row(j));
    const Smoothing narrow(smoothing.sigma() / std::numbers::sqrt2);
    const Eigen::VectorXd mid_rho = smoothed_density(spec, narrow, midpoints);

    const Eigen::MatrixXd gram = nodes * nodes.transpose();
    const Eigen::VectorXd sq = nodes.rowwise().squaredNorm();
    const Eigen::VectorXd rho = smoothed_density(spec, smoothing, nodes);

    // Diagonal through the same clamp as variance_function, then every
    // off-diagonal entry projected onto its Cauchy-Schwarz interval: the
    // cancellation residue must not exceed what the variances allow, and a
    // degenerate reference must yield the exact zero matrix.
    const double scale = std::pow(2.0 * std::numbers::pi * s2,
                                  -static_cast<double>(d));
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] = detail::variance_from_parts(pair_norm * mid_rho[i * n + i], rho[i],
                                           scale);

    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k(i, i) = v[i];
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double dist2 = sq[i] + sq[j] - 2.0 * gram(i, j);
            const double pair_kernel = pair_norm * std::exp(-0.25 * dist2 / s2);
            const double raw = pair_kernel * mid_rho[i * n + j] - rho[i] * rho[j];
            const double bound = std::sqrt(v[i] * v[j]);
            k(i, j) = k(j, i) = std::clamp(raw, -bound, bound);
        }
    }
    return k;
}

EstimateWithError tail_probability(const MeasureSpec& spec, double t) {
    validate(spec);
    if (t < 0.0) return {1.0, 0.0, "exact"};

    if (const auto* cloud = std::get_if<PointCloud>(&spec)) {
        double p = 0.0;
        for (Eigen::Index j = 0; j < cloud->points.rows(); ++j)
            if (cloud->points.row(j).norm() > t) p += cloud->weights[j];
        return {p, 0.0, "exact"};
    }
    if (const auto* g = std::get_if<Gaussian>(&spec)) {
        double lambda = 0.0;
        if (is_centered_isotropic(*g, &lambda)) {
            const double p =
                chi_squared_survival(static_cast<int>(g->mean.size()), t * t / lambda);
            return {p, 0.0, "exact"};
        }
    }
    const std::vector<double>& norms = tail_norms(spec);
    const auto it = std::upper_bound(norms.begin(), norms.end(), t);
    const double p = static_cast<double>(norms.end() - it) / norms.size();
    const double se = std::sqrt(p * (1.0 - p) / norms.size());
    return {p, se, "mc"};
}

double subgaussian_parameter(const MeasureSpec& spec) {
    validate(spec);
    return std::visit(
        [&](const auto& m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Gaussian>) {
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.covariance,
                                                                  Eigen::EigenvaluesOnly);
                return std::sqrt(std::max(es.eigenvalues().maxCoeff(), 0.0));
            } else if constexpr (std::is_same_v<T, GaussianMixture>) {
                // Component parameter plus mean dispersion; valid because a
                // mixture draw is a component draw shifted by at most the
                // dispersion of the component means.
                const Eigen::VectorXd mu = mean_of(spec);
                double beta = 0.0, dispersion = 0.0;
                for (const auto& c : m.components) {
                    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
                        c.covariance, Eigen::EigenvaluesOnly);
                    beta = std::max(beta,
                                    std::sqrt(std::max(es.eigenvalues().maxCoeff(), 0.0)));
                    dispersion = std::max(dispersion, (c.mean - mu).norm());
                }
                return beta + dispersion;
            } else if constexpr (std::is_same_v<T, UniformBox>) {
                return 0.5 * (m.hi - m.lo).norm();
            } else {
                const Eigen::VectorXd mu = mean_of(spec);
                double r = 0.0;
                for (Eigen::Index j = 0; j < m.points.rows(); ++j)
                    r = std::max(r, (m.points.row(j).transpose() - mu).norm());
                return r;
            }
        },
        spec);
}

}  // namespace smoothdiv

#include "smoothdiv/limit_law.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>

#include "smoothdiv/parallel.hpp"

namespace smoothdiv {

namespace {

double field_abs_integral(const GPModel& model, const Eigen::VectorXd& field) {
    std::vector<double> terms(static_cast<std::size_t>(field.size()));
    for (Eigen::Index i = 0; i < field.size(); ++i)
        terms[static_cast<std::size_t>(i)] = std::abs(field[i]);
    return model.cell_weight * pairwise_sum(terms);
}

double field_chi2_integral(const GPModel& model, const Eigen::VectorXd& field) {
    std::vector<double> terms(static_cast<std::size_t>(field.size()));
    for (Eigen::Index i = 0; i < field.size(); ++i) {
        const double rho = model.rho[i];
        terms[static_cast<std::size_t>(i)] =
            rho > 0.0 ? field[i] * field[i] / rho : 0.0;
    }
    return model.cell_weight * pairwise_sum(terms);
}

// Noise for draw j is keyed to (seed, j) alone so the draw does not depend
// on how many neighbours were requested alongside it.
Eigen::VectorXd normal_column(Eigen::Index rows, std::uint64_t seed,
                              std::uint64_t stream, std::size_t index) {
    Eigen::VectorXd z(rows);
    Rng rng(mix_seed(seed, stream, index));
    for (Eigen::Index i = 0; i < rows; ++i) z[i] = rng.normal();
    return z;
}

}  // namespace

GPModel build_gp(const MeasureSpec& spec, Smoothing smoothing, const TensorGrid& grid) {
    GPModel model;
    model.nodes = grid_nodes(grid);
    model.rho = smoothed_density(spec, smoothing, model.nodes);
    model.cell_weight = cell_volume(grid);
    model.sigma = smoothing.sigma();

    Eigen::MatrixXd k = covariance_kernel(spec, smoothing, model.nodes);
    const double max_diag = k.diagonal().maxCoeff();
    if (max_diag <= 0.0) {
        // Degenerate reference: the kernel statistic has no variance.
        model.factor = Eigen::MatrixXd::Zero(k.rows(), k.cols());
        model.jitter = 0.0;
        return model;
    }
    double jitter = 1e-12 * max_diag;
    const double jitter_cap = 1e-6 * max_diag;
    for (;; jitter *= 2.0) {
        Eigen::MatrixXd shifted = k;
        shifted.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(shifted);
        if (llt.info() == Eigen::Success) {
            // Undo the jitter's variance inflation per node: rescaling row j
            // by sqrt(K_jj / (K_jj + jitter)) makes the field variance equal
            // the kernel diagonal exactly.  Without this the chi-squared
            // functional is poisoned: near the box edge 1 / rho is large
            // enough to turn even a 1e-14 inflation into visible mass.
            const Eigen::VectorXd diag = k.diagonal().cwiseMax(0.0);
            const Eigen::VectorXd damp =
                (diag.array() / (diag.array() + jitter)).sqrt();
            model.factor = damp.asDiagonal() * Eigen::MatrixXd(llt.matrixL());
            model.jitter = jitter;
            return model;
        }
        if (jitter > jitter_cap)
            throw numeric_error("field covariance failed to factor within the "
                                "jitter budget");
    }
}

Eigen::VectorXd gp_draw(const GPModel& model, Rng& rng) {
    return model.factor * rng.normal_vector(model.factor.cols());
}

Eigen::MatrixXd gp_draws(const GPModel& model, std::uint64_t seed, std::size_t count) {
    // One matrix-vector product per draw.  A batched product would round
    // draw j differently depending on the batch width, and these draws are
    // promised to be a pure function of (seed, j).
    Eigen::MatrixXd fields(model.nodes.rows(), static_cast<Eigen::Index>(count));
    for (std::size_t j = 0; j < count; ++j) {
        const Eigen::VectorXd field =
            model.factor *
            normal_column(model.factor.cols(), seed, streams::limit, j);
        fields.col(static_cast<Eigen::Index>(j)) = field;
    }
    return fields;
}

double limit_tv_from_field(const GPModel& model, const Eigen::VectorXd& field) {
    return 0.5 * field_abs_integral(model, field);
}

double limit_chi2_from_field(const GPModel& model, const Eigen::VectorXd& field) {
    return field_chi2_integral(model, field);
}

double limit_tv_draw(const GPModel& model, Rng& rng) {
    return limit_tv_from_field(model, gp_draw(model, rng));
}

double limit_chi2_draw(const GPModel& model, Rng& rng) {
    return limit_chi2_from_field(model, gp_draw(model, rng));
}

namespace {

std::vector<double> limit_sample(const GPModel& model, std::uint64_t seed,
                                 std::size_t count, bool chi2) {
    std::vector<double> out(count);
    for (std::size_t j = 0; j < count; ++j) {
        const Eigen::VectorXd field =
            model.factor *
            normal_column(model.factor.cols(), seed, streams::limit, j);
        out[j] = chi2 ? limit_chi2_from_field(model, field)
                      : limit_tv_from_field(model, field);
    }
    return out;
}

}  // namespace

std::vector<double> limit_tv_sample(const GPModel& model, std::uint64_t seed,
                                    std::size_t count) {
    return limit_sample(model, seed, count, false);
}

std::vector<double> limit_chi2_sample(const GPModel& model, std::uint64_t seed,
                                      std::size_t count) {
    return limit_sample(model, seed, count, true);
}

MultiplierModel build_multiplier(const MeasureSpec& spec, Smoothing smoothing,
                                 const TensorGrid& grid, std::size_t m,
                                 std::uint64_t seed) {
    if (m < 2) throw config_error("multiplier bootstrap needs at least 2 anchors");
    MultiplierModel model;
    model.anchors = sample(spec, m, mix_seed(seed, streams::anchors, 0));
    model.m = m;
    model.nodes = grid_nodes(grid);
    model.rho = smoothed_density(spec, smoothing, model.nodes);
    model.cell_weight = cell_volume(grid);
    model.sigma = smoothing.sigma();

    // kernel_at_nodes(i, j) = k_sigma(node_i - anchor_j); each anchor column
    // is the kernel density of a one-point sample, so reuse that evaluator.
    const Eigen::Index n_nodes = model.nodes.rows();
    model.kernel_at_nodes.resize(n_nodes, static_cast<Eigen::Index>(m));
    const double s2 = smoothing.sigma2();
    const double log_norm =
        -0.5 * static_cast<double>(model.nodes.cols()) *
        std::log(2.0 * std::numbers::pi * s2);
    const Eigen::VectorXd node_sq = model.nodes.rowwise().squaredNorm();
    const Eigen::VectorXd anchor_sq = model.anchors.points.rowwise().squaredNorm();
    Eigen::MatrixXd e = model.nodes * model.anchors.points.transpose();
    e *= 1.0 / s2;
    e.colwise() -= node_sq * (0.5 / s2);
    e.rowwise() -= anchor_sq.transpose() * (0.5 / s2);
    model.kernel_at_nodes = (e.array() + log_norm).exp();
    return model;
}

Eigen::VectorXd multiplier_draw(const MultiplierModel& model, Rng& rng) {
    const Eigen::VectorXd g =
        rng.normal_vector(static_cast<Eigen::Index>(model.m));
    const double scale = 1.0 / std::sqrt(static_cast<double>(model.m));
    return scale * (model.kernel_at_nodes * g - model.rho * g.sum());
}

std::vector<double> multiplier_tv_sample(const MultiplierModel& model,
                                         std::uint64_t seed, std::size_t count) {
    std::vector<double> out(count);
    const double scale = 1.0 / std::sqrt(static_cast<double>(model.m));
    std::vector<double> terms(static_cast<std::size_t>(model.nodes.rows()));
    for (std::size_t j = 0; j < count; ++j) {
        const Eigen::VectorXd g = normal_column(
            static_cast<Eigen::Index>(model.m), seed, streams::multiplier, j);
        Eigen::VectorXd field = model.kernel_at_nodes * g;
        field -= model.rho * g.sum();
        for (Eigen::Index i = 0; i < field.size(); ++i)
            terms[static_cast<std::size_t>(i)] = std::abs(field[i]);
        out[j] = 0.5 * scale * model.cell_weight * pairwise_sum(terms);
    }
    return out;
}

}  // namespace smoothdiv

#include "smoothdiv/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "smoothdiv/bounds.hpp"
#include "smoothdiv/config_io.hpp"
#include "smoothdiv/parallel.hpp"

namespace smoothdiv {

namespace {

double sample_sd(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double dev = v[i] - mean;
        sq[i] = dev * dev;
    }
    return std::sqrt(pairwise_sum(sq) / (static_cast<double>(v.size()) - 1.0));
}

bool wants_tv(WhichMeasure w) { return w != WhichMeasure::chi2; }
bool wants_chi2(WhichMeasure w) { return w != WhichMeasure::tv; }

std::vector<HeaderField> common_fields(const ExperimentConfig& cfg) {
    std::vector<HeaderField> f;
    f.push_back({"sigma", format_double(cfg.sigma)});
    f.push_back({"seed", std::to_string(cfg.seed)});
    f.push_back({"eps", format_double(cfg.box_eps)});
    f.push_back({"grid", std::to_string(cfg.grid_points)});
    std::string which = cfg.which == WhichMeasure::tv
                            ? "tv"
                            : cfg.which == WhichMeasure::chi2 ? "chi2" : "both";
    f.push_back({"measure", which});
    return f;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(v[i]);
    }
    return out;
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path path = std::filesystem::path(dir) / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot write output file " + path.string());
    return out;
}

void write_limit_file(const ExperimentConfig& cfg, const std::string& name,
                      const std::vector<double>& values, const IntegrationBox& box,
                      double jitter) {
    std::ofstream out = open_out(cfg.out_dir, name);
    std::vector<HeaderField> fields = common_fields(cfg);
    fields.push_back({"draws", std::to_string(values.size())});
    fields.push_back({"limit-grid", std::to_string(cfg.limit_grid_points)});
    std::string box_text;
    for (Eigen::Index a = 0; a < box.lo.size(); ++a) {
        if (a) box_text += ' ';
        box_text += format_double(box.lo[a]) + ".." + format_double(box.hi[a]);
    }
    fields.push_back({"box", box_text});
    fields.push_back({"jitter", format_double(jitter)});
    write_config_header(out, "limit-sample", cfg.measure, fields);
    for (const double v : values) out << format_double(v) << "\n";
}

}  // namespace

double ks_statistic(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty())
        throw config_error("ks statistic needs two nonempty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        // Step past every copy of the current value in both samples before
        // comparing, so ties contribute no spurious gap.
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na -
                                 static_cast<double>(j) / nb));
    }
    return d;
}

double wasserstein1_1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty())
        throw config_error("wasserstein distance needs two nonempty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    // Area between the empirical CDFs, accumulated across the merged order
    // statistics.
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double w = 0.0;
    double last = std::min(a.front(), b.front());
    while (i < a.size() || j < b.size()) {
        const double next = (i < a.size() && (j >= b.size() || a[i] <= b[j])) ? a[i]
                                                                              : b[j];
        w += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) *
             (next - last);
        last = next;
        if (i < a.size() && a[i] == next)
            ++i;
        else
            ++j;
    }
    return w;
}

double fit_loglog_slope(const std::vector<double>& ns, const std::vector<double>& means) {
    if (ns.size() != means.size() || ns.size() < 2)
        throw config_error("slope fit needs matching samples of size >= 2");
    const double m = static_cast<double>(ns.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < ns.size(); ++i) {
        if (!(ns[i] > 0.0) || !(means[i] > 0.0))
            throw config_error("slope fit needs positive values");
        const double x = std::log(ns[i]);
        const double y = std::log(means[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

ConvergenceReport run_convergence(const ExperimentConfig& cfg) {
    validate(cfg.measure);
    if (cfg.n_grid.empty()) throw config_error("convergence run needs an n grid");
    if (cfg.reps < 2) throw config_error("convergence run needs at least 2 repetitions");
    const Smoothing smoothing(cfg.sigma);

    const IntegrationPlan plan = default_plan(cfg.measure, smoothing, cfg.grid_points,
                                              cfg.draws, cfg.box_eps, cfg.seed);
    const DivergenceEvaluator evaluate(cfg.measure, smoothing, plan);

    ConvergenceReport report;
    report.box = choose_box(cfg.measure, smoothing, cfg.box_eps);

    // Reference limit samples on a fixed field grid over the same box.
    if (dimension(cfg.measure) > 2)
        throw config_error("limit field simulation supports 1 or 2 dimensions");
    const TensorGrid field_grid{report.box, cfg.limit_grid_points};
    const GPModel model = build_gp(cfg.measure, smoothing, field_grid);
    report.gp_jitter = model.jitter;
    if (wants_tv(cfg.which))
        report.limit_tv = limit_tv_sample(model, cfg.seed, cfg.draws);
    if (wants_chi2(cfg.which))
        report.limit_chi2 = limit_chi2_sample(model, cfg.seed, cfg.draws);

    report.records.resize(cfg.n_grid.size() * cfg.reps);
    for (std::size_t ni = 0; ni < cfg.n_grid.size(); ++ni) {
        const std::size_t n = cfg.n_grid[ni];
        if (n < 1) throw config_error("sample sizes must be positive");
        const std::uint64_t n_seed = mix_seed(cfg.seed, streams::sample, n);
        RepRecord* slot = report.records.data() + ni * cfg.reps;
        parallel_for(cfg.reps, cfg.workers, [&](std::size_t rep) {
            const Sample s =
                sample(cfg.measure, n, mix_seed(n_seed, streams::sample, rep));
            const DivergencePair pair = evaluate(s);
            slot[rep] = {n,       rep,
                         pair.tv.value,  pair.chi2.value,
                         pair.tv.integration_error, pair.chi2.integration_error};
        });

        ConvergenceRow row;
        row.n = n;
        std::vector<double> scaled_tv(cfg.reps), scaled_chi2(cfg.reps);
        double max_err_tv = 0.0, max_err_chi2 = 0.0;
        for (std::size_t rep = 0; rep < cfg.reps; ++rep) {
            scaled_tv[rep] = std::sqrt(static_cast<double>(n)) * slot[rep].stat_tv;
            scaled_chi2[rep] = static_cast<double>(n) * slot[rep].stat_chi2;
            max_err_tv = std::max(max_err_tv, slot[rep].err_tv);
            max_err_chi2 = std::max(max_err_chi2, slot[rep].err_chi2);
        }
        const double reps_d = static_cast<double>(cfg.reps);
        if (wants_tv(cfg.which)) {
            row.mean_scaled_tv = pairwise_mean(scaled_tv);
            row.sd_scaled_tv = sample_sd(scaled_tv, row.mean_scaled_tv);
            row.sem_scaled_tv = row.sd_scaled_tv / std::sqrt(reps_d);
            row.ks_tv = ks_statistic(scaled_tv, report.limit_tv);
            // The raw-statistic spread at this n, against the per-rep error.
            // A spread at or below the box-mass floor means the statistic is
            // degenerate, not that the quadrature is too coarse; skip then.
            const double raw_sd = row.sd_scaled_tv / std::sqrt(static_cast<double>(n));
            if (raw_sd > cfg.box_eps && max_err_tv > 0.05 * raw_sd) {
                std::ostringstream msg;
                msg << "integration error " << max_err_tv << " exceeds 5% of the "
                    << "tv spread " << raw_sd << " at n = " << n
                    << "; refine the integration plan";
                throw numeric_error(msg.str());
            }
        }
        if (wants_chi2(cfg.which)) {
            row.mean_scaled_chi2 = pairwise_mean(scaled_chi2);
            row.sd_scaled_chi2 = sample_sd(scaled_chi2, row.mean_scaled_chi2);
            row.sem_scaled_chi2 = row.sd_scaled_chi2 / std::sqrt(reps_d);
            row.ks_chi2 = ks_statistic(scaled_chi2, report.limit_chi2);
            const double raw_sd =
                row.sd_scaled_chi2 / static_cast<double>(n);
            if (raw_sd > cfg.box_eps && max_err_chi2 > 0.05 * raw_sd) {
                std::ostringstream msg;
                msg << "integration error " << max_err_chi2 << " exceeds 5% of the "
                    << "chi2 spread " << raw_sd << " at n = " << n
                    << "; refine the integration plan";
                throw numeric_error(msg.str());
            }
        }
        report.rows.push_back(row);
    }

    if (cfg.n_grid.size() >= 2) {
        std::vector<double> ns(cfg.n_grid.begin(), cfg.n_grid.end());
        std::vector<double> mean_tv, mean_chi2;
        for (const auto& row : report.rows) {
            mean_tv.push_back(row.mean_scaled_tv / std::sqrt(static_cast<double>(row.n)));
            mean_chi2.push_back(row.mean_scaled_chi2 / static_cast<double>(row.n));
        }
        // Slopes are meaningless for a degenerate statistic; leave them 0 then.
        const auto positive = [](const std::vector<double>& xs) {
            return std::all_of(xs.begin(), xs.end(), [](double x) { return x > 0.0; });
        };
        if (wants_tv(cfg.which) && positive(mean_tv))
            report.slope_tv = fit_loglog_slope(ns, mean_tv);
        if (wants_chi2(cfg.which) && positive(mean_chi2))
            report.slope_chi2 = fit_loglog_slope(ns, mean_chi2);
    }

    if (!cfg.out_dir.empty()) {
        {
            std::ofstream csv = open_out(cfg.out_dir, "convergence.csv");
            std::vector<HeaderField> fields = common_fields(cfg);
            fields.push_back({"n-grid", join_sizes(cfg.n_grid)});
            fields.push_back({"reps", std::to_string(cfg.reps)});
            write_config_header(csv, "convergence", cfg.measure, fields);
            csv << "n,rep,stat_tv,stat_chi2,err_tv,err_chi2\n";
            for (const auto& r : report.records)
                csv << r.n << ',' << r.rep << ',' << format_double(r.stat_tv) << ','
                    << format_double(r.stat_chi2) << ',' << format_double(r.err_tv)
                    << ',' << format_double(r.err_chi2) << "\n";
        }
        {
            std::ofstream summary = open_out(cfg.out_dir, "convergence_summary.txt");
            std::vector<HeaderField> fields = common_fields(cfg);
            fields.push_back({"n-grid", join_sizes(cfg.n_grid)});
            fields.push_back({"reps", std::to_string(cfg.reps)});
            write_config_header(summary, "convergence", cfg.measure, fields);
            for (const auto& row : report.rows) {
                summary << "row n=" << row.n;
                if (wants_tv(cfg.which))
                    summary << " mean_scaled_tv=" << format_double(row.mean_scaled_tv)
                            << " sd_scaled_tv=" << format_double(row.sd_scaled_tv)
                            << " sem_scaled_tv=" << format_double(row.sem_scaled_tv)
                            << " ks_tv=" << format_double(row.ks_tv);
                if (wants_chi2(cfg.which))
                    summary << " mean_scaled_chi2=" << format_double(row.mean_scaled_chi2)
                            << " sd_scaled_chi2=" << format_double(row.sd_scaled_chi2)
                            << " sem_scaled_chi2=" << format_double(row.sem_scaled_chi2)
                            << " ks_chi2=" << format_double(row.ks_chi2);
                summary << "\n";
            }
            if (cfg.n_grid.size() >= 2) {
                if (wants_tv(cfg.which))
                    summary << "slope_tv = " << format_double(report.slope_tv) << "\n";
                if (wants_chi2(cfg.which))
                    summary << "slope_chi2 = " << format_double(report.slope_chi2)
                            << "\n";
            }
        }
        if (wants_tv(cfg.which))
            write_limit_file(cfg, "limit_tv.txt", report.limit_tv, report.box,
                             report.gp_jitter);
        if (wants_chi2(cfg.which))
            write_limit_file(cfg, "limit_chi2.txt", report.limit_chi2, report.box,
                             report.gp_jitter);
    }
    return report;
}

ConcentrationReport run_concentration(const ExperimentConfig& cfg,
                                      const std::vector<double>& thresholds) {
    validate(cfg.measure);
    if (cfg.n_grid.empty()) throw config_error("concentration run needs a sample size");
    if (cfg.reps < 2) throw config_error("concentration run needs at least 2 repetitions");
    if (thresholds.empty()) throw config_error("concentration run needs thresholds");
    const Smoothing smoothing(cfg.sigma);
    const std::size_t n = cfg.n_grid.front();

    const IntegrationPlan plan = default_plan(cfg.measure, smoothing, cfg.grid_points,
                                              cfg.draws, cfg.box_eps, cfg.seed);
    const DivergenceEvaluator evaluate(cfg.measure, smoothing, plan);

    std::vector<double> stats(cfg.reps);
    const std::uint64_t n_seed = mix_seed(cfg.seed, streams::sample, n);
    parallel_for(cfg.reps, cfg.workers, [&](std::size_t rep) {
        const Sample s = sample(cfg.measure, n, mix_seed(n_seed, streams::sample, rep));
        stats[rep] = evaluate(s).tv.value;
    });
    const double mean = pairwise_mean(stats);

    ConcentrationReport report;
    report.n = n;
    report.reps = cfg.reps;
    for (const double t : thresholds) {
        std::size_t count = 0;
        for (const double s : stats)
            if (std::abs(s - mean) > t) ++count;
        ConcentrationRow row;
        row.t = t;
        row.exceedance = static_cast<double>(count) / static_cast<double>(cfg.reps);
        row.bound = concentration_bound(n, t);
        row.se = std::sqrt(row.exceedance * (1.0 - row.exceedance) /
                           static_cast<double>(cfg.reps));
        report.rows.push_back(row);
    }

    if (!cfg.out_dir.empty()) {
        std::ofstream out = open_out(cfg.out_dir, "concentration.txt");
        std::vector<HeaderField> fields = common_fields(cfg);
        fields.push_back({"n", std::to_string(n)});
        fields.push_back({"reps", std::to_string(cfg.reps)});
        write_config_header(out, "concentration", cfg.measure, fields);
        for (const auto& row : report.rows)
            out << "row t=" << format_double(row.t)
                << " exceedance=" << format_double(row.exceedance)
                << " bound=" << format_double(row.bound)
                << " se=" << format_double(row.se) << "\n";
    }
    return report;
}

}  // namespace smoothdiv

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "smoothdiv/bounds.hpp"
#include "smoothdiv/config_io.hpp"
#include "smoothdiv/divergence.hpp"
#include "smoothdiv/experiments.hpp"
#include "smoothdiv/integration.hpp"
#include "smoothdiv/limit_law.hpp"
#include "smoothdiv/measures.hpp"
#include "smoothdiv/parallel.hpp"
#include "smoothdiv/rng.hpp"
#include "smoothdiv/types.hpp"

namespace {

using namespace smoothdiv;

// Options shared by every subcommand.  Each subcommand registers the subset
// it uses; flags always win over config-file contents.
struct Options {
    std::string spec_path;
    double sigma = 1.0;
    std::uint64_t seed = 0;
    int workers = 0;  // 0: resolved to the logical core count
    std::string out_dir;
    double eps = 1e-8;
    int grid = 2000;
    std::size_t draws = 2000;
    std::size_t n = 0;
    std::size_t reps = 0;
    std::vector<std::size_t> n_grid;
    std::string measure = "both";
};

WhichMeasure parse_which(const std::string& text) {
    if (text == "tv") return WhichMeasure::tv;
    if (text == "chi2") return WhichMeasure::chi2;
    if (text == "both") return WhichMeasure::both;
    throw config_error("--measure must be one of tv, chi2, both");
}

// --seed wins; otherwise SMOOTHDIV_SEED; otherwise the documented default 0.
std::uint64_t resolve_seed(bool seed_given, std::uint64_t flag_value) {
    if (seed_given) return flag_value;
    if (const char* env = std::getenv("SMOOTHDIV_SEED")) {
        std::string text(env);
        std::size_t used = 0;
        unsigned long long value = 0;
        try {
            value = std::stoull(text, &used);
        } catch (const std::exception&) {
            throw config_error("SMOOTHDIV_SEED must be an unsigned integer, got '" +
                               text + "'");
        }
        if (used != text.size())
            throw config_error("SMOOTHDIV_SEED must be an unsigned integer, got '" +
                               text + "'");
        return value;
    }
    return 0;
}

int resolve_workers(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

std::string estimate_line(const std::string& name, const EstimateWithError& e) {
    return name + " = " + format_double(e.value) + " +/- " + format_double(e.error) +
           " (" + e.method + ")";
}

std::string divergence_line(const std::string& name, const DivergenceResult& r,
                            const std::string& method) {
    return name + " = " + format_double(r.value) + " +/- " +
           format_double(r.integration_error) + " (" + method + ")";
}

std::string condition_line(const ConditionReport& r) {
    return "condition=" + r.name + " holds=" + (r.holds ? "1" : "0") +
           " lhs=" + format_double(r.lhs) + " rhs=" + format_double(r.rhs) +
           " detail=" + r.detail;
}

// Prints `lines` to stdout and, when `dir` is nonempty, writes them under a
// config header to dir/name so reruns are byte-comparable.
void emit(const std::string& dir, const std::string& name, const std::string& command,
          const MeasureSpec& spec, const std::vector<HeaderField>& fields,
          const std::vector<std::string>& lines) {
    for (const auto& line : lines) std::cout << line << "\n";
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    std::ofstream out(std::filesystem::path(dir) / name, std::ios::binary);
    if (!out) throw config_error("cannot open output file in '" + dir + "'");
    write_config_header(out, command, spec, fields);
    for (const auto& line : lines) out << line << "\n";
}

std::vector<HeaderField> base_fields(const Options& opt) {
    std::vector<HeaderField> f;
    f.push_back({"sigma", format_double(opt.sigma)});
    f.push_back({"seed", std::to_string(opt.seed)});
    f.push_back({"eps", format_double(opt.eps)});
    return f;
}

std::string plan_method(const IntegrationPlan& plan) {
    return std::holds_alternative<GridPlan>(plan) ? "grid" : "importance";
}

int cmd_estimate(const Options& opt) {
    const MeasureSpec spec = load_measure(opt.spec_path);
    const Smoothing smoothing(opt.sigma);
    const WhichMeasure which = parse_which(opt.measure);
    const IntegrationPlan plan =
        default_plan(spec, smoothing, opt.grid, opt.draws, opt.eps, opt.seed);
    const Sample s = sample(spec, opt.n, mix_seed(opt.seed, streams::sample, opt.n));
    const DivergencePair pair = smooth_divergences(s, spec, smoothing, plan);
    const std::string method = plan_method(plan);

    std::vector<std::string> lines;
    if (which != WhichMeasure::chi2) lines.push_back(divergence_line("tv", pair.tv, method));
    if (which != WhichMeasure::tv) lines.push_back(divergence_line("chi2", pair.chi2, method));

    std::vector<HeaderField> fields = base_fields(opt);
    fields.push_back({"n", std::to_string(opt.n)});
    fields.push_back({"grid", std::to_string(opt.grid)});
    fields.push_back({"draws", std::to_string(opt.draws)});
    fields.push_back({"measure", opt.measure});
    emit(opt.out_dir, "estimate.txt", "estimate", spec, fields, lines);
    return 0;
}

void write_limit_samples(const Options& opt, const MeasureSpec& spec,
                         const std::string& name, const std::vector<double>& values,
                         const IntegrationBox& box, double jitter) {
    std::filesystem::create_directories(opt.out_dir);
    std::ofstream out(std::filesystem::path(opt.out_dir) / name, std::ios::binary);
    if (!out) throw config_error("cannot open output file in '" + opt.out_dir + "'");
    std::vector<HeaderField> fields = base_fields(opt);
    fields.push_back({"measure", opt.measure});
    fields.push_back({"draws", std::to_string(values.size())});
    fields.push_back({"limit-grid", std::to_string(opt.grid)});
    std::string box_text;
    for (Eigen::Index a = 0; a < box.lo.size(); ++a) {
        if (a) box_text += ' ';
        box_text += format_double(box.lo[a]) + ".." + format_double(box.hi[a]);
    }
    fields.push_back({"box", box_text});
    fields.push_back({"jitter", format_double(jitter)});
    write_config_header(out, "limit-sample", spec, fields);
    for (const double v : values) out << format_double(v) << "\n";
}

int cmd_limit(const Options& opt) {
    const MeasureSpec spec = load_measure(opt.spec_path);
    const Smoothing smoothing(opt.sigma);
    const WhichMeasure which = parse_which(opt.measure);
    const IntegrationBox box = choose_box(spec, smoothing, opt.eps);
    const GPModel model = build_gp(spec, smoothing, TensorGrid{box, opt.grid});

    const auto summarize = [&](const std::string& name, const std::vector<double>& v) {
        const double mean = pairwise_mean(v);
        double sq = 0.0;
        for (const double x : v) sq += (x - mean) * (x - mean);
        const double sd = v.size() > 1
                              ? std::sqrt(sq / (static_cast<double>(v.size()) - 1.0))
                              : 0.0;
        std::cout << name << ": draws=" << v.size() << " mean=" << format_double(mean)
                  << " sd=" << format_double(sd) << "\n";
    };

    if (which != WhichMeasure::chi2) {
        const std::vector<double> tv = limit_tv_sample(model, opt.seed, opt.draws);
        summarize("limit_tv", tv);
        if (!opt.out_dir.empty())
            write_limit_samples(opt, spec, "limit_tv.txt", tv, box, model.jitter);
    }
    if (which != WhichMeasure::tv) {
        const std::vector<double> chi2 = limit_chi2_sample(model, opt.seed, opt.draws);
        summarize("limit_chi2", chi2);
        if (!opt.out_dir.empty())
            write_limit_samples(opt, spec, "limit_chi2.txt", chi2, box, model.jitter);
    }
    return 0;
}

int cmd_bounds(const Options& opt) {
    const MeasureSpec spec = load_measure(opt.spec_path);
    const Smoothing smoothing(opt.sigma);
    const IntegrationPlan plan =
        default_plan(spec, smoothing, opt.grid, opt.draws, opt.eps, opt.seed);

    std::vector<std::string> lines;
    lines.push_back(
        estimate_line("tv_variance_integral", tv_variance_integral(spec, smoothing, plan)));
    lines.push_back(estimate_line("tv_upper_bound", tv_upper_bound(spec, smoothing, plan)));
    lines.push_back(estimate_line("tv_lower_bound", tv_lower_bound(spec, smoothing, plan)));
    lines.push_back(
        estimate_line("tv_integrability_bound", tv_integrability_bound(spec, smoothing)));
    lines.push_back(
        estimate_line("chi2_mean_integral", chi2_mean_integral(spec, smoothing, plan)));
    for (const double eta : {0.05, 0.1, 0.2}) {
        const std::string name = "chi2_mean_upper_bound[eta=" + format_double(eta) + "]";
        try {
            lines.push_back(estimate_line(name, chi2_mean_upper_bound(spec, smoothing, eta)));
        } catch (const config_error& e) {
            lines.push_back(name + " unavailable: " + e.what());
        }
    }

    std::vector<HeaderField> fields = base_fields(opt);
    fields.push_back({"grid", std::to_string(opt.grid)});
    fields.push_back({"draws", std::to_string(opt.draws)});
    emit(opt.out_dir, "bounds.txt", "bounds", spec, fields, lines);
    return 0;
}

int cmd_check(const Options& opt) {
    const MeasureSpec spec = load_measure(opt.spec_path);
    const Smoothing smoothing(opt.sigma);

    std::vector<std::string> lines;
    lines.push_back(condition_line(subgaussian_bandwidth_check(spec, smoothing)));
    if (std::holds_alternative<Gaussian>(spec))
        lines.push_back(condition_line(gaussian_spread_check(spec, smoothing)));
    lines.push_back(
        condition_line(tv_integral_saturation(spec, smoothing, opt.grid, opt.eps)));
    lines.push_back(
        condition_line(chi2_integral_saturation(spec, smoothing, opt.grid, opt.eps)));
    const double beta = subgaussian_parameter(spec);
    if (beta > 0.0) {
        const double eta = 1.0 / (4.0 * beta * beta);
        lines.push_back(
            condition_line(subgaussian_mgf_check(spec, eta, opt.draws, opt.seed)));
    } else {
        lines.push_back("condition=subgaussian_mgf skipped: measure is a point mass");
    }

    std::vector<HeaderField> fields = base_fields(opt);
    fields.push_back({"grid", std::to_string(opt.grid)});
    fields.push_back({"draws", std::to_string(opt.draws)});
    emit(opt.out_dir, "checks.txt", "check", spec, fields, lines);
    return 0;
}

ExperimentConfig experiment_config(const Options& opt) {
    ExperimentConfig cfg;
    cfg.measure = load_measure(opt.spec_path);
    cfg.sigma = opt.sigma;
    cfg.n_grid = opt.n_grid;
    cfg.reps = opt.reps;
    cfg.seed = opt.seed;
    cfg.workers = resolve_workers(opt.workers);
    cfg.which = parse_which(opt.measure);
    cfg.grid_points = opt.grid;
    cfg.draws = opt.draws;
    cfg.box_eps = opt.eps;
    cfg.out_dir = opt.out_dir;
    return cfg;
}

int cmd_convergence(const Options& opt) {
    const ExperimentConfig cfg = experiment_config(opt);
    const ConvergenceReport report = run_convergence(cfg);
    for (const auto& row : report.rows) {
        std::cout << "n=" << row.n;
        if (cfg.which != WhichMeasure::chi2)
            std::cout << " mean_scaled_tv=" << format_double(row.mean_scaled_tv)
                      << " sem=" << format_double(row.sem_scaled_tv)
                      << " ks_tv=" << format_double(row.ks_tv);
        if (cfg.which != WhichMeasure::tv)
            std::cout << " mean_scaled_chi2=" << format_double(row.mean_scaled_chi2)
                      << " sem=" << format_double(row.sem_scaled_chi2)
                      << " ks_chi2=" << format_double(row.ks_chi2);
        std::cout << "\n";
    }
    if (cfg.n_grid.size() >= 2) {
        if (cfg.which != WhichMeasure::chi2)
            std::cout << "slope_tv = " << format_double(report.slope_tv) << "\n";
        if (cfg.which != WhichMeasure::tv)
            std::cout << "slope_chi2 = " << format_double(report.slope_chi2) << "\n";
    }
    return 0;
}

int cmd_concentration(const Options& opt) {
    Options fixed = opt;
    fixed.measure = "tv";  // the deviation bound concerns the TV statistic
    fixed.n_grid = {opt.n};
    const ExperimentConfig cfg = experiment_config(fixed);
    const ConcentrationReport report =
        run_concentration(cfg, {0.02, 0.05, 0.1});
    for (const auto& row : report.rows)
        std::cout << "t=" << format_double(row.t)
                  << " exceedance=" << format_double(row.exceedance)
                  << " bound=" << format_double(row.bound)
                  << " se=" << format_double(row.se) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian-smoothed divergences between an empirical measure and a "
                 "reference distribution"};
    app.require_subcommand(1);

    Options opt;
    bool seed_given = false;

    const auto add_common = [&](CLI::App* sub, bool with_out_default_dot) {
        sub->add_option("--spec,--config", opt.spec_path, "measure config file")
            ->required();
        sub->add_option("--sigma", opt.sigma, "smoothing kernel bandwidth")
            ->capture_default_str();
        sub->add_option("--seed", opt.seed,
                        "master seed (default 0; SMOOTHDIV_SEED overrides the "
                        "default when this flag is absent)")
            ->each([&](const std::string&) { seed_given = true; });
        sub->add_option("--eps", opt.eps, "smoothed mass allowed outside the box")
            ->capture_default_str();
        if (with_out_default_dot) {
            opt.out_dir = ".";
            sub->add_option("--out", opt.out_dir, "output directory")
                ->capture_default_str();
        } else {
            sub->add_option("--out", opt.out_dir,
                            "output directory (omit to print only)");
        }
    };

    CLI::App* estimate = app.add_subcommand(
        "estimate", "divergences of one empirical sample against the reference");
    add_common(estimate, false);
    estimate->add_option("--n", opt.n, "sample size")->required();
    estimate->add_option("--grid", opt.grid, "integration points per axis")
        ->capture_default_str();
    estimate->add_option("--draws", opt.draws, "importance draws when d > 2")
        ->capture_default_str();
    estimate->add_option("--measure", opt.measure, "tv, chi2, or both")
        ->capture_default_str();

    CLI::App* limit = app.add_subcommand(
        "limit", "samples of the limiting field functionals");
    add_common(limit, true);
    limit->add_option("--draws", opt.draws, "number of limit draws")
        ->capture_default_str();
    opt.grid = 400;
    limit->add_option("--grid", opt.grid, "field nodes per axis")
        ->capture_default_str();
    limit->add_option("--measure", opt.measure, "tv, chi2, or both")
        ->capture_default_str();

    CLI::App* bounds = app.add_subcommand(
        "bounds", "moment integrals and their closed-form bounds");
    add_common(bounds, false);
    bounds->add_option("--grid", opt.grid, "integration points per axis");
    bounds->add_option("--draws", opt.draws, "importance draws when d > 2");

    CLI::App* check = app.add_subcommand(
        "check", "sufficient-condition reports for the reference measure");
    add_common(check, false);
    check->add_option("--grid", opt.grid, "integration points per axis");
    check->add_option("--draws", opt.draws, "Monte Carlo draws for moment checks");

    CLI::App* convergence = app.add_subcommand(
        "convergence", "repetition study of the scaled statistics across n");
    add_common(convergence, true);
    convergence->add_option("--n-grid", opt.n_grid, "comma-separated sample sizes")
        ->required()
        ->delimiter(',');
    convergence->add_option("--reps", opt.reps, "repetitions per n")->required();
    convergence->add_option("--grid", opt.grid, "integration points per axis");
    convergence->add_option("--draws", opt.draws, "limit sample size");
    convergence->add_option("--measure", opt.measure, "tv, chi2, or both");
    convergence->add_option("--workers", opt.workers,
                            "worker threads (default: logical cores)");

    CLI::App* concentration = app.add_subcommand(
        "concentration", "TV deviation frequencies against the tail bound");
    add_common(concentration, true);
    concentration->add_option("--n", opt.n, "sample size")->required();
    concentration->add_option("--reps", opt.reps, "repetitions")->required();
    concentration->add_option("--grid", opt.grid, "integration points per axis");
    concentration->add_option("--workers", opt.workers,
                              "worker threads (default: logical cores)");

    // Registration above mutates the shared struct while wiring defaults, so
    // each subcommand restores its own defaults right before it parses.
    const auto defaults = [&](int grid, std::size_t draws, const char* out) {
        return [&opt, grid, draws, out](std::size_t) {
            opt.grid = grid;
            opt.draws = draws;
            opt.out_dir = out;
        };
    };
    estimate->preparse_callback(defaults(2000, 2000, ""));
    limit->preparse_callback(defaults(400, 2000, "."));
    bounds->preparse_callback(defaults(2000, 2000, ""));
    check->preparse_callback(defaults(2000, 100000, ""));
    convergence->preparse_callback(defaults(2000, 2000, "."));
    concentration->preparse_callback(defaults(2000, 2000, "."));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        opt.seed = resolve_seed(seed_given, opt.seed);
        if (estimate->parsed()) return cmd_estimate(opt);
        if (limit->parsed()) return cmd_limit(opt);
        if (bounds->parsed()) return cmd_bounds(opt);
        if (check->parsed()) return cmd_check(opt);
        if (convergence->parsed()) return cmd_convergence(opt);
        if (concentration->parsed()) return cmd_concentration(opt);
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

// Acceptance battery: runs the full empirical validation suite at desk scale
// and prints one PASS/FAIL line per criterion with the measured quantities.
// Exit status is the number of failed criteria.
//
// Everything here is statistical, so each criterion states its own tolerance
// (multiples of a standard error, fixed KS budgets, or closed-form targets).
// Seeds are fixed; reruns produce identical lines.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <utility>
#include <string>
#include <vector>

#include "smoothdiv/bounds.hpp"
#include "smoothdiv/divergence.hpp"
#include "smoothdiv/experiments.hpp"
#include "smoothdiv/limit_law.hpp"
#include "smoothdiv/measures.hpp"
#include "smoothdiv/parallel.hpp"
#include "smoothdiv/rng.hpp"
#include "smoothdiv/types.hpp"

using namespace smoothdiv;
namespace fs = std::filesystem;

namespace {

int failures = 0;

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(6);
    ss << v;
    return ss.str();
}

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    if (!pass) ++failures;
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << id << " " << name << ": " << detail
              << "\n"
              << std::flush;
}

MeasureSpec gauss(double variance, Eigen::Index d) {
    Gaussian g;
    g.mean = Eigen::VectorXd::Zero(d);
    g.covariance = variance * Eigen::MatrixXd::Identity(d, d);
    return g;
}

MeasureSpec box01(Eigen::Index d) {
    UniformBox b;
    b.lo = Eigen::VectorXd::Zero(d);
    b.hi = Eigen::VectorXd::Ones(d);
    return b;
}

struct MeanSem {
    double mean = 0.0;
    double sem = 0.0;
};

MeanSem mean_sem(const std::vector<double>& xs) {
    const double mean = pairwise_mean(xs);
    double sq = 0.0;
    for (const double x : xs) sq += (x - mean) * (x - mean);
    const double var = sq / (static_cast<double>(xs.size()) - 1.0);
    return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

// 1. The mean of n * chi2 equals the variance-to-density integral at every n,
//    not just in the limit.  Demands agreement within 3 SEM at n in {50, 500}.
void chi2_mean_identity() {
    const MeasureSpec spec = gauss(0.25, 1);
    const Smoothing sm(1.0);
    const double j =
        chi2_mean_integral(spec, sm, default_plan(spec, sm, 4000, 0, 1e-8, 0)).value;
    const DivergenceEvaluator ev(spec, sm, default_plan(spec, sm, 2000, 0, 1e-8, 0));

    bool pass = true;
    std::ostringstream detail;
    detail << "J=" << fmt(j);
    constexpr std::size_t reps = 1000;
    for (const std::size_t n : {std::size_t(50), std::size_t(500)}) {
        std::vector<double> scaled(reps);
        for (std::size_t r = 0; r < reps; ++r) {
            const Sample s = sample(spec, n, mix_seed(2201, streams::sample, n * 10000 + r));
            scaled[r] = static_cast<double>(n) * ev(s).chi2.value;
        }
        const MeanSem m = mean_sem(scaled);
        const double dev = std::abs(m.mean - j);
        pass = pass && dev <= 3.0 * m.sem;
        detail << " | n=" << n << " mean=" << fmt(m.mean) << " dev=" << fmt(dev)
               << " allow=" << fmt(3.0 * m.sem);
    }
    report(1, "chi2-mean-identity", pass, detail.str());
}

// Shared study behind criteria 2-4: reps=500 at n in {50, 500, 5000} plus
// 5000 reference limit draws on a 400-node field grid.
ConvergenceReport limit_study() {
    ExperimentConfig cfg;
    cfg.measure = gauss(0.25, 1);
    cfg.sigma = 1.0;
    cfg.n_grid = {50, 500, 5000};
    cfg.reps = 500;
    cfg.seed = 2024;
    cfg.workers = 1;
    cfg.grid_points = 2000;
    cfg.draws = 5000;
    cfg.limit_grid_points = 400;
    return run_convergence(cfg);
}

// 2. The scaled TV mean sits under half the variance integral at every n and,
//    by n=5000, above 95 percent of the limit mean.
void tv_moment_sandwich(const ConvergenceReport& study) {
    const MeasureSpec spec = gauss(0.25, 1);
    const Smoothing sm(1.0);
    const IntegrationPlan plan = default_plan(spec, sm, 4000, 0, 1e-8, 0);
    const double upper = tv_upper_bound(spec, sm, plan).value;
    const double lower = tv_lower_bound(spec, sm, plan).value;

    bool pass = true;
    std::ostringstream detail;
    detail << "upper=" << fmt(upper) << " lower=" << fmt(lower);
    for (const auto& row : study.rows) {
        const bool under = row.mean_scaled_tv <= upper + 3.0 * row.sem_scaled_tv;
        pass = pass && under;
        detail << " | n=" << row.n << " mean=" << fmt(row.mean_scaled_tv);
    }
    const auto& last = study.rows.back();
    const bool over = last.mean_scaled_tv >= 0.95 * lower - 3.0 * last.sem_scaled_tv;
    pass = pass && over;
    detail << " | floor at n=5000: " << fmt(0.95 * lower);
    report(2, "tv-moment-sandwich", pass, detail.str());
}

// 3./4. Distributional convergence of the scaled statistics to the simulated
//    limits: KS decreasing across n (0.02 slack) and small at n=5000.
void limit_law(const ConvergenceReport& study, int id, const char* name, bool tv,
               double final_budget) {
    const auto ks_of = [&](const ConvergenceRow& row) {
        return tv ? row.ks_tv : row.ks_chi2;
    };
    bool pass = true;
    std::ostringstream detail;
    for (std::size_t i = 0; i < study.rows.size(); ++i) {
        if (i) pass = pass && ks_of(study.rows[i]) <= ks_of(study.rows[i - 1]) + 0.02;
        detail << (i ? " " : "") << "ks(n=" << study.rows[i].n
               << ")=" << fmt(ks_of(study.rows[i]));
    }
    pass = pass && ks_of(study.rows.back()) <= final_budget;
    detail << " budget=" << fmt(final_budget);
    report(id, name, pass, detail.str());
}

// 5. Raw statistics decay at the parametric rates: fitted log-log slopes near
//    -1/2 for TV and -1 for chi2.
void rate_exponents() {
    ExperimentConfig cfg;
    cfg.measure = gauss(0.25, 1);
    cfg.sigma = 1.0;
    cfg.n_grid = {50, 200, 800, 3200};
    cfg.reps = 300;
    cfg.seed = 515;
    cfg.workers = 1;
    cfg.grid_points = 2000;
    cfg.draws = 100;
    const ConvergenceReport study = run_convergence(cfg);
    const bool tv_ok = study.slope_tv >= -0.55 && study.slope_tv <= -0.45;
    const bool chi_ok = study.slope_chi2 >= -1.1 && study.slope_chi2 <= -0.9;
    std::ostringstream detail;
    detail << "slope_tv=" << fmt(study.slope_tv) << " in [-0.55,-0.45], slope_chi2="
           << fmt(study.slope_chi2) << " in [-1.1,-0.9]";
    report(5, "rate-exponents", tv_ok && chi_ok, detail.str());
}

// 6. Deviation frequencies of the TV statistic stay under the gaussian tail
//    bound at every threshold, up to binomial noise.
void concentration_tail() {
    ExperimentConfig cfg;
    cfg.measure = gauss(0.25, 1);
    cfg.sigma = 1.0;
    cfg.n_grid = {200};
    cfg.reps = 2000;
    cfg.seed = 606;
    cfg.workers = 1;
    cfg.grid_points = 2000;
    cfg.which = WhichMeasure::tv;
    const ConcentrationReport rpt = run_concentration(cfg, {0.02, 0.05, 0.1});
    bool pass = true;
    std::ostringstream detail;
    for (const auto& row : rpt.rows) {
        pass = pass && row.exceedance <= row.bound + 2.0 * row.se;
        detail << "t=" << fmt(row.t) << " freq=" << fmt(row.exceedance)
               << " bound=" << fmt(row.bound) << "  ";
    }
    report(6, "concentration-tail", pass, detail.str());
}

// 7. The closed-form tail bound dominates the variance integral it caps, for
//    gaussian and box references in one and two dimensions.
void integrability_bound_dominance() {
    const Smoothing sm(1.0);
    bool pass = true;
    std::ostringstream detail;
    for (const int d : {1, 2}) {
        for (const MeasureSpec& spec : {gauss(0.25, d), box01(d)}) {
            const int grid = d == 1 ? 2000 : 300;
            const double integral =
                tv_variance_integral(spec, sm, default_plan(spec, sm, grid, 0, 1e-8, 0))
                    .value;
            const double bound = tv_integrability_bound(spec, sm).value;
            pass = pass && bound > integral;
            detail << family_name(spec) << " d=" << d << ": " << fmt(bound) << " > "
                   << fmt(integral) << "  ";
        }
    }
    report(7, "integrability-bound-dominance", pass, detail.str());
}

// 8. The slack-parameterized mean bound dominates the exact mean integral.
void chi2_bound_dominance() {
    const MeasureSpec spec = gauss(0.25, 1);
    const Smoothing sm(1.0);
    const double j =
        chi2_mean_integral(spec, sm, default_plan(spec, sm, 4000, 0, 1e-8, 0)).value;
    bool pass = true;
    std::ostringstream detail;
    detail << "J=" << fmt(j);
    for (const double eta : {0.05, 0.1, 0.2}) {
        const double bound = chi2_mean_upper_bound(spec, sm, eta).value;
        pass = pass && bound >= j;
        detail << " | eta=" << fmt(eta) << " bound=" << fmt(bound);
    }
    report(8, "chi2-bound-dominance", pass, detail.str());
}

// 9. Truncated mean-integral probe: expected to separate a reference wider
//    than the kernel (unbounded-looking growth) from a narrow one (saturated).
//    For gaussian references the integral is finite for every spread, so the
//    wide case grows by a bounded factor and the >10x requirement cannot be
//    met; the criterion is kept as stated and reports its measured growth.
void divergence_probe_separation() {
    const Smoothing sm(1.0);
    const std::vector<double> radii = {5.0, 40.0};
    const auto wide = chi2_divergence_probe(gauss(4.0, 1), sm, radii, 4000);
    const auto narrow = chi2_divergence_probe(gauss(0.25, 1), sm, radii, 4000);
    const double wide_growth = wide[1].value / wide[0].value;
    const double narrow_growth = narrow[1].value / narrow[0].value;
    const bool pass = wide_growth > 10.0 && narrow_growth < 1.01;
    std::ostringstream detail;
    detail << "wide growth " << fmt(wide_growth) << " (needs > 10), narrow growth "
           << fmt(narrow_growth) << " (needs < 1.01)";
    report(9, "divergence-probe-separation", pass, detail.str());
}

// 10. The field sampler reproduces its covariance entrywise, and the
//     multiplier construction draws the same TV functional distribution.
void field_sampler_fidelity() {
    const MeasureSpec spec = gauss(0.25, 1);
    const Smoothing sm(1.0);
    const IntegrationBox box = choose_box(spec, sm, 1e-8);

    const GPModel coarse = build_gp(spec, sm, TensorGrid{box, 50});
    constexpr std::size_t draws = 20000;
    const Eigen::MatrixXd fields = gp_draws(coarse, 1001, draws);
    const Eigen::MatrixXd cov_hat =
        fields * fields.transpose() / static_cast<double>(draws);
    const Eigen::MatrixXd truth = covariance_kernel(spec, sm, coarse.nodes);
    const double max_dev = (cov_hat - truth).cwiseAbs().maxCoeff();
    const double tol = 5.0 * truth.diagonal().maxCoeff() / std::sqrt(double(draws));
    const bool entries_ok = max_dev <= tol;

    const GPModel fine = build_gp(spec, sm, TensorGrid{box, 100});
    const std::vector<double> exact = limit_tv_sample(fine, 1002, 10000);
    const MultiplierModel boot = build_multiplier(spec, sm, TensorGrid{box, 100}, 4000, 1003);
    const std::vector<double> approx = multiplier_tv_sample(boot, 1004, 10000);
    const double ks = ks_statistic(exact, approx);
    const bool ks_ok = ks <= 0.05;

    std::ostringstream detail;
    detail << "max covariance deviation " << fmt(max_dev) << " (tol " << fmt(tol)
           << "), multiplier ks " << fmt(ks) << " (tol 0.05)";
    report(10, "field-sampler-fidelity", entries_ok && ks_ok, detail.str());
}

// 11. Exponential moment at the half-saturation rate: for a standard normal
//     in d dimensions the mean of exp(|X|^2 / 4) is exactly 2^{d/2}.
void mgf_equality_case() {
    bool pass = true;
    std::ostringstream detail;
    for (const int d : {1, 2}) {
        const MomentEstimate m = exp_moment(gauss(1.0, d), 0.25, 200000, 1100 + d);
        const double target = std::pow(2.0, 0.5 * d);
        const double dev = std::abs(m.mean - target);
        pass = pass && dev <= 3.0 * m.se;
        detail << "d=" << d << " mean=" << fmt(m.mean) << " target=" << fmt(target)
               << " dev=" << fmt(dev) << " allow=" << fmt(3.0 * m.se) << "  ";
    }
    report(11, "mgf-equality-case", pass, detail.str());
}

// 12. Every subcommand, rerun with the same configuration and seed, writes
//     byte-identical files.
void cli_determinism() {
    const fs::path root = fs::temp_directory_path() / "smoothdiv_acceptance";
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path spec = root / "measure.cfg";
    {
        std::ofstream out(spec);
        out << "variant = gaussian\ndimension = 1\nmean = 0\ncovariance = 0.25\n";
    }

    const auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const auto run = [&](const std::string& args, const fs::path& out) {
        const std::string cmd = std::string(SMOOTHDIV_CLI_PATH) + " " + args + " --out " +
                                out.string() + " > " + (out / "stdout.txt").string() +
                                " 2>&1";
        fs::create_directories(out);
        return std::system(cmd.c_str()) == 0;
    };

    const std::string base = " --spec " + spec.string() + " --seed 3";
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"estimate", "estimate" + base + " --n 60 --grid 600"},
        {"limit", "limit" + base + " --grid 150 --draws 300"},
        {"bounds", "bounds" + base + " --grid 600"},
        {"check", "check" + base + " --grid 600 --draws 20000"},
        {"convergence",
         "convergence" + base + " --n-grid 25,50 --reps 5 --grid 500 --draws 50"},
        {"concentration", "concentration" + base + " --n 40 --reps 40 --grid 500"},
    };

    bool pass = true;
    std::ostringstream detail;
    for (const auto& [name, args] : commands) {
        const fs::path a = root / (name + "_a");
        const fs::path b = root / (name + "_b");
        bool same = run(args, a) && run(args, b);
        std::size_t files = 0;
        if (same) {
            for (const auto& entry : fs::directory_iterator(a)) {
                ++files;
                same = same && fs::exists(b / entry.path().filename()) &&
                       slurp(entry.path()) == slurp(b / entry.path().filename());
            }
            same = same && files > 0;
        }
        pass = pass && same;
        detail << name << (same ? " ok(" : " DIFFERS(") << files << " files)  ";
    }
    fs::remove_all(root);
    report(12, "cli-determinism", pass, detail.str());
}

}  // namespace

int main() {
    std::cout << "acceptance battery: quarter-variance gaussian reference, sigma = 1 "
                 "unless stated\n";
    try {
        chi2_mean_identity();
        const ConvergenceReport study = limit_study();
        tv_moment_sandwich(study);
        limit_law(study, 3, "tv-limit-law", true, 0.08);
        limit_law(study, 4, "chi2-limit-law", false, 0.10);
        rate_exponents();
        concentration_tail();
        integrability_bound_dominance();
        chi2_bound_dominance();
        divergence_probe_separation();
        field_sampler_fidelity();
        mgf_equality_case();
        cli_determinism();
    } catch (const std::exception& e) {
        std::cout << "[FAIL] battery aborted: " << e.what() << "\n";
        return 99;
    }
    std::cout << (failures == 0 ? "acceptance: all criteria passed\n"
                                : "acceptance: " + std::to_string(failures) +
                                      " criterion(s) failed\n");
    return failures;
}

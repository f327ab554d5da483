#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <numbers>
#include <sstream>
#include <string>

#include "smoothdiv/config_io.hpp"
#include "smoothdiv/measures.hpp"
#include "smoothdiv/types.hpp"

using namespace smoothdiv;

TEST_CASE("parses the documented gaussian example") {
    const MeasureSpec spec = parse_measure(
        "# two dimensional reference\n"
        "variant = gaussian\n"
        "dimension = 2\n"
        "mean = 0 0\n"
        "covariance = 1 0 ; 0 1\n");
    const auto& g = std::get<Gaussian>(spec);
    CHECK(g.mean.size() == 2);
    CHECK(g.mean(0) == 0.0);
    CHECK(g.covariance(0, 0) == 1.0);
    CHECK(g.covariance(0, 1) == 0.0);
}

TEST_CASE("parses a mixture with component sections") {
    const MeasureSpec spec = parse_measure(
        "variant = gaussian_mixture\n"
        "dimension = 1\n"
        "weights = 0.3 0.7\n"
        "[component]\n"
        "mean = -1\n"
        "covariance = 0.25\n"
        "[component]\n"
        "mean = 2\n"
        "covariance = 0.5\n");
    const auto& m = std::get<GaussianMixture>(spec);
    REQUIRE(m.components.size() == 2);
    CHECK(m.weights[1] == 0.7);
    CHECK(m.components[0].mean(0) == -1.0);
    CHECK(m.components[1].covariance(0, 0) == 0.5);
}

namespace {

MeasureSpec awkward_cloud() {
    PointCloud c;
    c.points = Eigen::MatrixXd(3, 2);
    c.points << 0.1, -0.2, 1.0 / 3.0, std::numbers::pi, -7.25, 1e-12;
    c.weights = Eigen::VectorXd(3);
    c.weights << 0.25, 0.5, 0.25;
    return c;
}

}  // namespace

TEST_CASE("serialize and parse round trip every family exactly") {
    UniformBox box;
    box.lo = Eigen::VectorXd(2);
    box.hi = Eigen::VectorXd(2);
    box.lo << -0.1, 2.0;
    box.hi << 0.9, 5.5;

    Gaussian g;
    g.mean = Eigen::VectorXd(2);
    g.mean << 0.1, -0.3;
    g.covariance = Eigen::MatrixXd(2, 2);
    g.covariance << 1.7, 0.2, 0.2, 0.6;

    GaussianMixture mix;
    mix.weights = {1.0 / 3.0, 2.0 / 3.0};
    Gaussian a = g, b = g;
    b.mean(0) = 4.0;
    mix.components = {a, b};

    for (const MeasureSpec& spec :
         {MeasureSpec(box), MeasureSpec(g), MeasureSpec(mix), awkward_cloud()}) {
        const std::string text = serialize_measure(spec);
        const MeasureSpec back = parse_measure(text);
        CHECK(serialize_measure(back) == text);
        CHECK(family_name(back) == family_name(spec));
        CHECK(dimension(back) == dimension(spec));
        // Values survive bit for bit, not just approximately.
        CHECK((mean_of(back) - mean_of(spec)).cwiseAbs().maxCoeff() == 0.0);
        CHECK((covariance_of(back) - covariance_of(spec)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("parse failures carry the offending line") {
    const auto msg_of = [](const std::string& text) {
        try {
            parse_measure(text);
        } catch (const config_error& e) {
            return std::string(e.what());
        }
        return std::string();
    };

    CHECK(msg_of("variant = gaussian\ndimension = 1\nmean = 0\nwat = 1\n"
                 "covariance = 1\n")
              .find("line 4") != std::string::npos);
    CHECK(msg_of("variant = gaussian\ndimension = 1\nmean = 0\nmean = 1\n"
                 "covariance = 1\n")
              .find("line 4") != std::string::npos);
    CHECK(msg_of("variant = gaussian\ndimension = 1\nmean = zero\ncovariance = 1\n")
              .find("line 3") != std::string::npos);
    CHECK_THROWS_AS(parse_measure("variant = pareto\ndimension = 1\n"), config_error);
    CHECK_THROWS_AS(parse_measure("variant = gaussian\ndimension = 1\nmean = 0\n"),
                    config_error);
    // Ragged covariance rows.
    CHECK_THROWS_AS(parse_measure("variant = gaussian\ndimension = 2\nmean = 0 0\n"
                                  "covariance = 1 0 ; 0\n"),
                    config_error);
    // Family invariants are enforced at the end of parsing.
    CHECK_THROWS_AS(parse_measure("variant = uniform_box\ndimension = 1\nlo = 1\nhi = 1\n"),
                    config_error);
    CHECK_THROWS_AS(parse_measure("variant = gaussian_mixture\ndimension = 1\n"
                                  "weights = 0.4 0.4\n[component]\nmean = 0\n"
                                  "covariance = 1\n[component]\nmean = 1\n"
                                  "covariance = 1\n"),
                    config_error);
}

TEST_CASE("load_measure reports missing files as config errors") {
    CHECK_THROWS_AS(load_measure("/nonexistent/path/to/spec.cfg"), config_error);
}

TEST_CASE("format_double emits the shortest exact decimal") {
    CHECK(format_double(0.05) == "0.05");
    CHECK(format_double(2.0) == "2");
    CHECK(format_double(1e-8) == "1e-08");
    CHECK(format_double(-0.75) == "-0.75");
    for (const double v : {std::numbers::pi, 0.1, 1.0 / 3.0, 1e300, 4.9e-324, -1.5e-7}) {
        const std::string text = format_double(v);
        CHECK(std::strtod(text.c_str(), nullptr) == v);
    }
}

TEST_CASE("config headers are deterministic and fully commented") {
    Gaussian g;
    g.mean = Eigen::VectorXd::Zero(1);
    g.covariance = Eigen::MatrixXd::Constant(1, 1, 0.25);
    const std::vector<HeaderField> fields = {{"sigma", "1"}, {"seed", "0"}};

    std::ostringstream a, b;
    write_config_header(a, "estimate", g, fields);
    write_config_header(b, "estimate", g, fields);
    CHECK(a.str() == b.str());

    const std::string text = a.str();
    CHECK(text.find("# command = estimate\n") != std::string::npos);
    CHECK(text.find("# sigma = 1\n") != std::string::npos);
    CHECK(text.find("# cfg: variant = gaussian\n") != std::string::npos);
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        CHECK(line.rfind("# ", 0) == 0);
    }
}

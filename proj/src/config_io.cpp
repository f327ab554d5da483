#include "smoothdiv/config_io.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

namespace smoothdiv {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

[[noreturn]] void fail(int line, const std::string& message) {
    throw config_error("measure config line " + std::to_string(line) + ": " + message);
}

double parse_number(const std::string& token, int line) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size())
        fail(line, "bad number '" + token + "'");
    return v;
}

std::vector<double> parse_vector(const std::string& text, int line) {
    std::vector<double> out;
    std::istringstream in(text);
    std::string token;
    while (in >> token) out.push_back(parse_number(token, line));
    if (out.empty()) fail(line, "expected at least one number");
    return out;
}

// Rows separated by ';', entries by whitespace; all rows must agree in width.
Eigen::MatrixXd parse_matrix(const std::string& text, int line) {
    std::vector<std::vector<double>> rows;
    std::string row_text;
    std::istringstream in(text);
    while (std::getline(in, row_text, ';')) rows.push_back(parse_vector(row_text, line));
    const std::size_t cols = rows.front().size();
    Eigen::MatrixXd m(rows.size(), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != cols) fail(line, "ragged matrix rows");
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = rows[i][j];
    }
    return m;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct Field {
    std::string value;
    int line = 0;
};
using FieldMap = std::map<std::string, Field>;

const Field& require(const FieldMap& fields, const std::string& key, int section_line) {
    const auto it = fields.find(key);
    if (it == fields.end())
        fail(section_line, "missing required field '" + key + "'");
    return it->second;
}

void reject_unknown(const FieldMap& fields, std::initializer_list<const char*> allowed) {
    for (const auto& [key, field] : fields) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) fail(field.line, "unknown field '" + key + "'");
    }
}

Gaussian gaussian_from(const FieldMap& fields, Eigen::Index dim, int section_line) {
    reject_unknown(fields, {"mean", "covariance"});
    const Field& mean_f = require(fields, "mean", section_line);
    const Field& cov_f = require(fields, "covariance", section_line);
    Gaussian g;
    g.mean = to_vector(parse_vector(mean_f.value, mean_f.line));
    g.covariance = parse_matrix(cov_f.value, cov_f.line);
    if (g.mean.size() != dim) fail(mean_f.line, "mean length does not match dimension");
    if (g.covariance.rows() != dim || g.covariance.cols() != dim)
        fail(cov_f.line, "covariance shape does not match dimension");
    return g;
}

std::string format_vector(const Eigen::VectorXd& v) {
    std::string out;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) out += ' ';
        out += format_double(v[i]);
    }
    return out;
}

std::string format_matrix(const Eigen::MatrixXd& m) {
    std::string out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (i) out += " ; ";
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out += ' ';
            out += format_double(m(i, j));
        }
    }
    return out;
}

}  // namespace

std::string format_double(double value) {
    char buf[40];
    // Shortest decimal form that parses back to the same double.
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return ec == std::errc() ? std::string(buf, end) : "nan";
}

MeasureSpec parse_measure(const std::string& text) {
    FieldMap top;
    std::vector<FieldMap> components;
    std::vector<int> component_lines;
    FieldMap* current = &top;

    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line != "[component]") fail(line_no, "unknown section '" + line + "'");
            components.emplace_back();
            component_lines.push_back(line_no);
            current = &components.back();
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) fail(line_no, "expected 'key = value'");
        if (current->count(key)) fail(line_no, "duplicate field '" + key + "'");
        (*current)[key] = Field{value, line_no};
    }

    const Field& variant = require(top, "variant", 1);
    const Field& dim_f = require(top, "dimension", 1);
    const double dim_value = parse_number(dim_f.value, dim_f.line);
    const Eigen::Index dim = static_cast<Eigen::Index>(dim_value);
    if (dim < 1 || static_cast<double>(dim) != dim_value)
        fail(dim_f.line, "dimension must be a positive integer");

    MeasureSpec spec;
    if (variant.value == "gaussian") {
        if (!components.empty())
            fail(component_lines.front(), "gaussian takes no [component] sections");
        FieldMap fields = top;
        fields.erase("variant");
        fields.erase("dimension");
        spec = gaussian_from(fields, dim, variant.line);
    } else if (variant.value == "gaussian_mixture") {
        reject_unknown(top, {"variant", "dimension", "weights"});
        const Field& weights_f = require(top, "weights", variant.line);
        GaussianMixture mix;
        mix.weights = parse_vector(weights_f.value, weights_f.line);
        if (components.empty()) fail(variant.line, "gaussian_mixture needs [component] sections");
        for (std::size_t k = 0; k < components.size(); ++k)
            mix.components.push_back(gaussian_from(components[k], dim, component_lines[k]));
        spec = std::move(mix);
    } else if (variant.value == "uniform_box") {
        reject_unknown(top, {"variant", "dimension", "lo", "hi"});
        const Field& lo_f = require(top, "lo", variant.line);
        const Field& hi_f = require(top, "hi", variant.line);
        UniformBox box;
        box.lo = to_vector(parse_vector(lo_f.value, lo_f.line));
        box.hi = to_vector(parse_vector(hi_f.value, hi_f.line));
        if (box.lo.size() != dim || box.hi.size() != dim)
            fail(lo_f.line, "lo/hi length does not match dimension");
        spec = std::move(box);
    } else if (variant.value == "point_cloud") {
        reject_unknown(top, {"variant", "dimension", "points", "weights"});
        const Field& points_f = require(top, "points", variant.line);
        const Field& weights_f = require(top, "weights", variant.line);
        PointCloud cloud;
        cloud.points = parse_matrix(points_f.value, points_f.line);
        cloud.weights = to_vector(parse_vector(weights_f.value, weights_f.line));
        if (cloud.points.cols() != dim)
            fail(points_f.line, "atom width does not match dimension");
        spec = std::move(cloud);
    } else {
        fail(variant.line, "unknown variant '" + variant.value + "'");
    }
    if (!components.empty() && variant.value != "gaussian_mixture")
        fail(component_lines.front(), "[component] sections only apply to gaussian_mixture");

    validate(spec);
    return spec;
}

MeasureSpec load_measure(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open measure config '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_measure(buffer.str());
}

std::string serialize_measure(const MeasureSpec& spec) {
    std::string out = "variant = " + family_name(spec) + "\n";
    out += "dimension = " + std::to_string(dimension(spec)) + "\n";
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Gaussian>) {
                out += "mean = " + format_vector(m.mean) + "\n";
                out += "covariance = " + format_matrix(m.covariance) + "\n";
            } else if constexpr (std::is_same_v<T, GaussianMixture>) {
                out += "weights = " + format_vector(to_vector(m.weights)) + "\n";
                for (const auto& c : m.components) {
                    out += "[component]\n";
                    out += "mean = " + format_vector(c.mean) + "\n";
                    out += "covariance = " + format_matrix(c.covariance) + "\n";
                }
            } else if constexpr (std::is_same_v<T, UniformBox>) {
                out += "lo = " + format_vector(m.lo) + "\n";
                out += "hi = " + format_vector(m.hi) + "\n";
            } else {
                out += "points = " + format_matrix(m.points) + "\n";
                out += "weights = " + format_vector(m.weights) + "\n";
            }
        },
        spec);
    return out;
}

void write_config_header(std::ostream& out, const std::string& command,
                         const MeasureSpec& spec,
                         const std::vector<HeaderField>& fields) {
    out << "# smoothdiv 0.1.0\n";
    out << "# command = " << command << "\n";
    for (const auto& f : fields) out << "# " << f.key << " = " << f.value << "\n";
    std::istringstream cfg(serialize_measure(spec));
    std::string line;
    while (std::getline(cfg, line)) out << "# cfg: " << line << "\n";
}

}  // namespace smoothdiv

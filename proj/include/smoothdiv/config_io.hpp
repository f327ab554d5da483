#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "smoothdiv/measures.hpp"

namespace smoothdiv {

// Plain-text measure configs.  Scalars and vectors are whitespace separated,
// matrix rows are separated by ';', comments start with '#'.  Example:
//
//   variant = gaussian
//   dimension = 2
//   mean = 0 0
//   covariance = 1 0 ; 0 1
//
// Mixtures list top-level `weights` and one `[component]` section per
// component, each with `mean` and `covariance`.

MeasureSpec parse_measure(const std::string& text);
MeasureSpec load_measure(const std::string& path);

// Canonical form: parse(serialize(spec)) reproduces spec exactly, and equal
// specs serialize to identical bytes.
std::string serialize_measure(const MeasureSpec& spec);

// Shortest decimal form that round-trips the exact double.
std::string format_double(double value);

// Header block shared by all output files: generator tag, command, the
// key/value pairs, then the measure config with each line prefixed "cfg: ".
// Contains nothing run-dependent, so reruns are byte-identical.
struct HeaderField {
    std::string key;
    std::string value;
};
void write_config_header(std::ostream& out, const std::string& command,
                         const MeasureSpec& spec,
                         const std::vector<HeaderField>& fields);

}  // namespace smoothdiv

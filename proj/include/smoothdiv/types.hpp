#pragma once

#include <stdexcept>
#include <string>

namespace smoothdiv {

// Raised when an input violates a documented precondition: malformed config
// file, nonpositive bandwidth, mismatched dimensions.  The CLI maps this to
// exit code 2.
class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when a computation cannot certify its own result: an integral fails
// to saturate, a covariance factorization fails, an importance ratio is not
// finite.  The CLI maps this to exit code 3.
class numeric_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bandwidth of the isotropic Gaussian smoothing kernel.  Invariant: sigma > 0.
class Smoothing {
public:
    explicit Smoothing(double sigma) : sigma_(sigma) {
        if (!(sigma > 0.0))
            throw config_error("smoothing bandwidth must satisfy sigma > 0");
    }
    double sigma() const { return sigma_; }
    double sigma2() const { return sigma_ * sigma_; }

private:
    double sigma_;
};

// Numeric result paired with an error proxy.  `method` names how the value
// was produced: "grid", "importance", "mc", or "exact".
struct EstimateWithError {
    double value = 0.0;
    double error = 0.0;
    std::string method;
};

}  // namespace smoothdiv

#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace seeopt {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

inline constexpr const char* kVersion = "0.1.0";

// Bad or inconsistent inputs: config files, shape mismatches, invalid parameters.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Runtime numerical trouble: divergent paths, singular solves, stalled line searches.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace seeopt

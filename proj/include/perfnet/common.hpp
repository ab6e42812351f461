#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace perfnet {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Stacked agent decisions, one agent per row.
using AgentMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Errc {
  invalid_size,
  not_regular,
  not_connected,
  validation,
  shape,
  unsupported_kind,
  calibration,
  no_fixed_point,
  stability_violated,
  inapplicable,
  invariant,
  contract,
  config,
  dataset,
  fit_unavailable,
};

std::string_view to_string(Errc code) noexcept;

/// Library-wide exception. The code lets callers (the CLI in particular)
/// map failures onto exit statuses without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace perfnet

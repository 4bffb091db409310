#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace matchri {

// Pooled treated/control sample. Rows keep their input order; `row_id` is the
// stable identifier used for deterministic tie-breaking and reporting.
struct Sample {
    Eigen::VectorXd y;
    std::vector<std::uint8_t> w;
    Eigen::MatrixXd x;  // N x k, one row per observation
    std::vector<std::int64_t> row_id;

    std::vector<std::size_t> treated;   // row positions with w == 1, in row order
    std::vector<std::size_t> controls;  // row positions with w == 0, in row order

    std::size_t size() const { return static_cast<std::size_t>(y.size()); }
    std::size_t n_treated() const { return treated.size(); }
    std::size_t n_controls() const { return controls.size(); }
    std::size_t n_covariates() const { return static_cast<std::size_t>(x.cols()); }
};

// Unvalidated columnar input. `w` is real-valued so that non-binary codes
// coming from files can be reported instead of silently truncated.
struct RawData {
    std::vector<double> y;
    std::vector<double> w;
    std::vector<std::vector<double>> x;  // one inner vector per row
    std::vector<std::int64_t> row_id;    // optional; 0..N-1 when empty
    // Row numbers used in error messages (e.g. file line numbers); optional.
    std::vector<std::size_t> source_row;
};

/// Checks the sample contract (binary w, finite y and x, k >= 1, at least one
/// treated and one control row) and builds a Sample. Errors name the offending
/// row and column.
Sample validate_sample(const RawData& raw);

/// Convenience overload for in-memory data: x is N x k.
Sample make_sample(std::span<const double> y, std::span<const int> w, const Eigen::MatrixXd& x,
                   std::span<const std::int64_t> row_id = {});

}  // namespace matchri

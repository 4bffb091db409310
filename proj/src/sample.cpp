#include "matchri/sample.h"

#include <cmath>
#include <string>

#include "matchri/error.h"

namespace matchri {

namespace {

std::string where(const RawData& raw, std::size_t i) {
    const std::size_t row = raw.source_row.empty() ? i : raw.source_row[i];
    return "row " + std::to_string(row);
}

}  // namespace

Sample validate_sample(const RawData& raw) {
    const std::size_t n = raw.y.size();
    if (n == 0) {
        throw DataError("empty sample");
    }
    if (raw.w.size() != n || raw.x.size() != n) {
        throw DataError("outcome, treatment and covariate columns have different lengths");
    }
    if (!raw.row_id.empty() && raw.row_id.size() != n) {
        throw DataError("row_id length does not match the sample");
    }
    const std::size_t k = raw.x.front().size();
    if (k == 0) {
        throw DataError("at least one covariate column is required");
    }

    Sample s;
    s.y.resize(static_cast<Eigen::Index>(n));
    s.w.resize(n);
    s.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    s.row_id.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double wi = raw.w[i];
        if (wi != 0.0 && wi != 1.0) {
            throw DataError("non-binary treatment value at " + where(raw, i) + ", column w");
        }
        if (!std::isfinite(raw.y[i])) {
            throw DataError("non-finite outcome at " + where(raw, i) + ", column y");
        }
        if (raw.x[i].size() != k) {
            throw DataError("ragged covariate row at " + where(raw, i));
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (!std::isfinite(raw.x[i][j])) {
                throw DataError("non-finite covariate at " + where(raw, i) + ", column x" + std::to_string(j + 1));
            }
            s.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = raw.x[i][j];
        }
        s.y[static_cast<Eigen::Index>(i)] = raw.y[i];
        s.w[i] = wi == 1.0 ? 1 : 0;
        s.row_id[i] = raw.row_id.empty() ? static_cast<std::int64_t>(i) : raw.row_id[i];
        (s.w[i] ? s.treated : s.controls).push_back(i);
    }
    if (s.treated.empty()) {
        throw DataError("sample has no treated rows");
    }
    if (s.controls.empty()) {
        throw DataError("sample has no control rows");
    }
    return s;
}

Sample make_sample(std::span<const double> y, std::span<const int> w, const Eigen::MatrixXd& x,
                   std::span<const std::int64_t> row_id) {
    RawData raw;
    raw.y.assign(y.begin(), y.end());
    raw.w.assign(w.begin(), w.end());
    if (static_cast<std::size_t>(x.rows()) != y.size()) {
        throw DataError("covariate matrix row count does not match the outcome length");
    }
    raw.x.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        raw.x[i].resize(static_cast<std::size_t>(x.cols()));
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            raw.x[i][static_cast<std::size_t>(j)] = x(static_cast<Eigen::Index>(i), j);
        }
    }
    raw.row_id.assign(row_id.begin(), row_id.end());
    return validate_sample(raw);
}

}  // namespace matchri

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "matchri/inference.h"
#include "matchri/matching.h"
#include "matchri/sample.h"
#include "matchri/simulation.h"

namespace matchri::io {

using Json = nlohmann::ordered_json;

struct CsvColumns {
    std::string y = "y";
    std::string w = "w";
};

/// Reads a comma-separated file with a header naming the outcome, treatment
/// and covariate columns x1..xk (case-insensitive, any order). Unknown
/// columns are skipped and reported in `warnings`.
Sample load_csv(const std::string& path, const CsvColumns& columns = {}, std::vector<std::string>* warnings = nullptr);

/// Writes y, w, x1..xk with round-trip precision.
void write_sample_csv(const Sample& sample, const std::string& path);

/// k x k matrix from a headerless CSV file.
Eigen::MatrixXd load_matrix_csv(const std::string& path);

enum class Format { kCsv, kJsonLines, kText };

Format parse_format(const std::string& name);

// Fully resolved options of one CLI invocation.
struct RunConfig {
    std::string subcommand;

    std::string input;
    CsvColumns columns;
    std::vector<int> m{1};
    std::string metric = "euclid";
    std::string v_matrix;
    std::vector<std::string> exact;
    std::string bias_adjust = "off";
    double alpha = 0.10;
    double c = 0.0;
    std::vector<std::string> methods;  // empty: all applicable
    std::string stat = "absmean";
    std::uint64_t seed = 0;
    std::uint64_t n_draws = 9999;
    std::uint64_t max_enumeration = std::uint64_t{1} << 20;
    int j_var = 1;
    std::string ai_variance = "combined";

    double ci_lo = -10.0;
    double ci_hi = 10.0;
    int grid = 201;

    std::vector<std::string> panel{"A"};
    std::vector<int> n1{5, 10, 25, 50};
    int n0 = 1000;
    int k = 1;
    double tau = 0.0;
    std::vector<double> taus{0.0, 0.25, 0.5, 0.75, 1.0};
    bool size_adjust = true;
    std::size_t reps = 2000;

    std::string output;
    std::optional<std::string> format;  // default depends on the subcommand
    unsigned threads = 0;               // never echoed; cannot change results

    /// Resolved options as a flat JSON object (provenance echo). Excludes the
    /// thread count and the output path.
    Json echo() const;
};

/// Applies a flat JSON object onto `config`. Unknown keys and out-of-range
/// values throw ConfigError.
void apply_json(RunConfig& config, const Json& object);

/// Defaults, then the JSON file at `config_path` (if any), then `overrides`
/// (the explicitly given command-line flags, same keys).
RunConfig parse_config(const std::string& subcommand, const std::string& config_path, const Json& overrides);

/// Checks cross-field consistency for the subcommand.
void check(const RunConfig& config);

MatchSpec match_spec(const RunConfig& config, const Sample* sample);
TestConfig test_config(const RunConfig& config);

// One output table: named columns and rows of JSON scalars.
struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<Json>> rows;
};

struct Report {
    Json config;
    std::vector<Table> tables;
    std::vector<std::string> warnings;  // for stderr; not part of the rendered output
};

std::string render(const Report& report, Format format);

/// Writes `text` to `path` through a temporary file and rename, so a failed
/// run never leaves a partial file.
void write_atomic(const std::string& path, const std::string& text);

Report cmd_estimate(const RunConfig& config);
Report cmd_test(const RunConfig& config);
Report cmd_ci(const RunConfig& config);
Report cmd_mc(const RunConfig& config);
Report cmd_power(const RunConfig& config);
Report cmd_draw(const RunConfig& config);

Report run(const RunConfig& config);

}  // namespace matchri::io

#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "matchri/sample.h"

namespace matchri {

enum class Metric {
    kWeightedEuclidean,  // d(a,b)^2 = (a-b)' V (a-b), V = identity unless supplied
    kMahalanobis,        // V = inverse covariance of the control covariates
};

enum class BiasAdjust {
    kOff,
    kAllControls,    // outcome model fitted on every control row
    kNeighborsOnly,  // outcome model fitted on the union of matched controls
};

struct MatchSpec {
    int m = 1;
    Metric metric = Metric::kWeightedEuclidean;
    std::optional<Eigen::MatrixXd> v;          // k x k, symmetric positive definite
    std::vector<std::size_t> exact_columns;    // covariates that must match exactly
    BiasAdjust bias_adjust = BiasAdjust::kOff;
    double center = 0.0;                       // null value c subtracted from unit effects
};

struct Neighbor {
    std::size_t row;       // position in the sample
    std::int64_t row_id;
    double distance;
};

struct MatchedSets {
    int m = 0;
    // neighbors[t] lists the m controls matched to treated unit t (t indexes
    // Sample::treated), sorted by (distance, row_id).
    std::vector<std::vector<Neighbor>> neighbors;
    // k_count[row] = number of treated units using control `row` as a match.
    // Indexed by sample row; zero for treated rows and unused controls.
    std::vector<int> k_count;
    // Treated units grouped by "shares at least one matched control", ordered
    // by the smallest member row_id. Members are treated indices sorted by row_id.
    std::vector<std::vector<std::size_t>> components;
    std::vector<std::int64_t> treated_row_id;  // row_id of each treated unit

    std::size_t n_treated() const { return neighbors.size(); }
    bool has_shared_neighbors() const { return components.size() < neighbors.size(); }
};

struct UnitEffects {
    std::vector<double> tau_i;  // per treated unit, already net of `center`
    double tau_hat = 0.0;       // mean(tau_i) + center
    double center = 0.0;
    bool bias_adjusted = false;
};

// Linear outcome model mu0(x) = intercept + slopes' x fitted on controls.
struct OutcomeModel {
    Eigen::VectorXd coef;  // intercept followed by k slopes

    double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

/// Sample covariance (denominator N0 - 1) of the control covariates. Throws
/// NumericError when it is singular, which rules out the Mahalanobis metric.
Eigen::MatrixXd control_covariance(const Sample& sample);

/// Covariates mapped so that plain Euclidean distance between rows equals the
/// metric requested by `spec`.
Eigen::MatrixXd metric_coordinates(const Sample& sample, const MatchSpec& spec);

/// The spec.m nearest eligible controls of treated unit `treated_index`
/// (an index into Sample::treated). Ties go to the smaller row_id.
std::vector<Neighbor> find_neighbors(const Sample& sample, const MatchSpec& spec, std::size_t treated_index);

/// Same search on precomputed metric coordinates.
std::vector<Neighbor> find_neighbors(const Sample& sample, const MatchSpec& spec, const Eigen::MatrixXd& coords,
                                     std::size_t treated_index);

/// The `count` closest rows in the same treatment group as `row`, excluding
/// `row` itself, with the same tie-break rule.
std::vector<Neighbor> nearest_in_group(const Sample& sample, const Eigen::MatrixXd& coords, std::size_t row,
                                       int count);

MatchedSets match_all(const Sample& sample, const MatchSpec& spec);

/// Connected components of treated units under "share a matched control".
std::vector<std::vector<std::size_t>> shared_components(const MatchedSets& sets);

UnitEffects unit_effects(const Sample& sample, const MatchedSets& sets, const MatchSpec& spec);

enum class FitScope { kAllControls, kNeighborsOnly };

OutcomeModel fit_outcome_model(const Sample& sample, const MatchedSets& sets, FitScope scope);

UnitEffects bias_adjusted_unit_effects(const Sample& sample, const MatchedSets& sets, const MatchSpec& spec,
                                       const OutcomeModel& model);

/// Outcomes entering treated set t: element 0 is the treated outcome Y_t,
/// elements 1..m are the matched control outcomes, each shifted by
/// mu0(X_t) - mu0(X_neighbor) when a model is given.
std::vector<double> set_outcomes(const Sample& sample, const MatchedSets& sets, std::size_t treated_index,
                                 const OutcomeModel* model);

struct Estimate {
    MatchedSets sets;
    UnitEffects effects;
    std::optional<OutcomeModel> model;
};

/// match_all followed by (bias-adjusted) unit effects per spec.bias_adjust.
Estimate estimate(const Sample& sample, const MatchSpec& spec);

/// Unit effects for an existing match re-centered at a different null value.
UnitEffects recenter(const UnitEffects& effects, double center);

}  // namespace matchri

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "matchri/matching.h"
#include "matchri/sample.h"

namespace matchri {

enum class PermStat {
    kAbsMean,       // |mean of set effects|
    kStandardized,  // |mean| / SD, the sign-changes statistic
};

struct TestConfig {
    double alpha = 0.10;
    std::uint64_t max_enumeration = std::uint64_t{1} << 20;
    std::uint64_t n_draws = 9999;
    PermStat stat = PermStat::kAbsMean;
    std::uint64_t seed = 0;
};

void validate(const TestConfig& config);

struct RandomizationResult {
    double statistic = 0.0;
    double p_value = 1.0;
    bool reject = false;
    // Cardinality of the (constrained) transformation group. Stored as a
    // double because sampled groups can exceed 2^64.
    double group_size = 0.0;
    // Number of transformations actually evaluated (group_size when
    // enumerated, n_draws + 1 when sampled).
    std::uint64_t reference_size = 0;
    bool enumerated = true;
    double critical_value = 0.0;
    double min_attainable_p = 1.0;
};

/// |mean(values)| / SD(values) with the N-1 denominator about the mean of
/// `values`. Zero SD yields +inf for a nonzero mean and 0 otherwise.
double studentized_abs_mean(std::span<const double> values);

/// The same statistic from n, sum and sum of squares. SD is taken as zero
/// when the centered second moment is within rounding noise of zero.
double studentized_from_moments(double sum, double sumsq, std::size_t n);

/// T(gS): studentized_abs_mean of signs[i] * effects[i]. Needs N >= 2.
double sign_statistic(std::span<const double> effects, std::span<const int> signs);

// Sign changes constrained to one sign per shared-neighbor component.
class SignChangeGroup {
  public:
    SignChangeGroup(std::vector<std::vector<std::size_t>> components, const TestConfig& config);

    std::size_t n_units() const { return n_units_; }
    std::size_t n_components() const { return components_.size(); }
    bool enumerated() const { return enumerated_; }
    double group_size() const;
    std::uint64_t reference_size() const;

    /// Per-unit signs of element `e`. Element 0 is the identity.
    void unit_signs(std::uint64_t e, std::span<int> out) const;

    /// sum_c g_c * per_component[c] for element `e`, in component order.
    double signed_sum(std::uint64_t e, std::span<const double> per_component) const;

    /// Whether element `e` flips `component`.
    bool flipped(std::uint64_t e, std::size_t component) const;

  private:
    std::vector<std::vector<std::size_t>> components_;
    std::size_t n_units_ = 0;
    bool enumerated_ = true;
    std::uint64_t n_draws_ = 0;
    std::size_t words_ = 0;
    std::vector<std::uint64_t> draws_;  // n_draws_ x words_ flip bits
};

SignChangeGroup sign_change_group(const std::vector<std::vector<std::size_t>>& components,
                                  const TestConfig& config);

RandomizationResult sign_changes_test(const UnitEffects& effects,
                                      const std::vector<std::vector<std::size_t>>& components,
                                      const TestConfig& config);

// Within-set role reassignments: each treated set picks which of its m + 1
// members plays the treated role. A control shared by several sets must have
// the same role in all of them.
class PermutationGroup {
  public:
    PermutationGroup(const MatchedSets& sets, const TestConfig& config);

    std::size_t n_sets() const { return n_sets_; }
    bool enumerated() const { return enumerated_; }
    double group_size() const { return size_; }
    std::uint64_t reference_size() const;

    /// Chosen member (0 = treated unit, j = j-th neighbor) per set for
    /// element `e`. Element 0 is the identity.
    void roles(std::uint64_t e, std::span<int> out) const;

  private:
    struct Option {
        std::vector<std::size_t> chosen;  // indices into Block::shared
        std::uint64_t count = 0;          // assignments under this option (saturating)
        double weight = 0.0;
    };
    struct Block {
        std::vector<std::size_t> sets;
        // shared[s] = list of (local set, member position) holding shared control s
        std::vector<std::vector<std::pair<std::size_t, int>>> shared;
        std::vector<std::vector<int>> free_positions;  // per local set: 0 plus private member positions
        std::vector<Option> options;
        std::uint64_t count = 0;
        double weight = 0.0;
    };

    void decode_block(const Block& b, std::uint64_t local, std::span<int> out) const;
    template <class Rng>
    void sample_block(const Block& b, Rng& rng, std::span<int> out) const;

    std::size_t n_sets_ = 0;
    std::vector<Block> blocks_;
    double size_ = 1.0;
    bool enumerated_ = true;
    std::uint64_t n_draws_ = 0;
    std::vector<std::uint16_t> draws_;  // n_draws_ x n_sets_ roles
};

PermutationGroup permutation_group(const MatchedSets& sets, const TestConfig& config);

RandomizationResult permutation_test(const Sample& sample, const MatchedSets& sets, const MatchSpec& spec,
                                     const TestConfig& config, const OutcomeModel* model = nullptr);

enum class AiVarianceForm {
    // conditional + heterogeneity. The sum reduces to
    // (1/N1^2) [sum_t (tau_t - mean)^2 + sum_c K(K-1)/M^2 sigma_c^2] >= 0.
    kCombined,
    // conditional + max(heterogeneity, 0); never below the conditional part.
    kFloored,
};

struct AiVariance {
    double conditional = 0.0;    // sum of K_M-weighted conditional variances / N1^2
    double heterogeneity = 0.0;  // before any flooring
    AiVarianceForm form = AiVarianceForm::kCombined;

    double total() const {
        if (form == AiVarianceForm::kFloored) return conditional + (heterogeneity > 0.0 ? heterogeneity : 0.0);
        return std::max(conditional + heterogeneity, 0.0);
    }
};

std::string to_string(AiVarianceForm form);
AiVarianceForm parse_ai_variance_form(const std::string& name);

/// Matching-based conditional variances with `j_var` same-group neighbors.
AiVariance ai_variance(const Sample& sample, const MatchedSets& sets, const UnitEffects& effects,
                       const MatchSpec& spec, int j_var = 1, AiVarianceForm form = AiVarianceForm::kCombined);

struct AsymptoticResult {
    double estimate = 0.0;
    double std_error = 0.0;
    double z = 0.0;
    double p_value = 1.0;
    bool reject = false;
    AiVariance variance;
};

/// Two-sided normal test of tau = center. Throws NumericError on zero variance.
AsymptoticResult ai_test(const UnitEffects& effects, const AiVariance& variance, double alpha);

enum class TestMethod { kAi, kSign, kPerm };

std::string to_string(TestMethod method);
TestMethod parse_test_method(const std::string& name);

struct CiSearch {
    double lo = -10.0;
    double hi = 10.0;
    int grid_points = 201;
};

struct ConfidenceInterval {
    double lower = 0.0;
    double upper = 0.0;
    double alpha = 0.10;
    TestMethod method = TestMethod::kSign;
    int grid_points = 0;
    double tolerance = 0.0;  // bisection width at each boundary
    bool lower_censored = false;
    bool upper_censored = false;
    // False when some grid point between lower and upper is rejected.
    bool contiguous = true;

    bool range_censored() const { return lower_censored || upper_censored; }
};

/// Confidence set for tau by inverting `method` over a grid of null values,
/// refined by bisection at each boundary. Matching is computed once.
ConfidenceInterval invert_ci(const Sample& sample, const MatchSpec& spec, const TestConfig& config,
                             TestMethod method, const CiSearch& search, int j_var = 1,
                             AiVarianceForm form = AiVarianceForm::kCombined);

}  // namespace matchri

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "matchri/error.h"
#include "matchri/inference.h"
#include "matchri/rng.h"

namespace matchri {

namespace {

constexpr std::uint64_t kSaturated = std::numeric_limits<std::uint64_t>::max();
constexpr std::size_t kMaxBlockOptions = std::size_t{1} << 20;

std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) {
    if (a != 0 && b > kSaturated / a) return kSaturated;
    return a * b;
}

std::uint64_t saturating_add(std::uint64_t a, std::uint64_t b) { return b > kSaturated - a ? kSaturated : a + b; }

// Order statistics, p-value and the non-randomized decision rule over the
// reference set `stats` (identity included), in which every listed value
// occurs `multiplicity` times.
// Statistics within this relative distance count as ties. Mathematically
// equal values reached through different summation orders differ by a few
// ulps; the moment formula for the studentized statistic adds some more.
constexpr double kTieTolerance = 1e-9;

double tie_slack(double v) { return std::isfinite(v) ? kTieTolerance * std::max(std::fabs(v), 1e-300) : 0.0; }

RandomizationResult decide(double observed, std::vector<double> stats, double alpha, std::size_t multiplicity = 1) {
    RandomizationResult r;
    r.statistic = observed;
    const std::size_t k_total = stats.size() * multiplicity;
    const double kd = static_cast<double>(k_total);
    // k = ceil(K (1 - alpha)); the offset absorbs representation error in alpha.
    auto k = static_cast<std::size_t>(std::ceil(kd * (1.0 - alpha) - 1e-9));
    k = std::clamp<std::size_t>(k, 1, k_total);
    const double floor_obs = observed - tie_slack(observed);
    std::size_t at_least = 0;
    double top = stats.front();
    for (double t : stats) {
        at_least += t >= floor_obs;
        top = std::max(top, t);
    }
    const double floor_top = top - tie_slack(top);
    const auto n_top = static_cast<std::size_t>(
        std::count_if(stats.begin(), stats.end(), [floor_top](double t) { return t >= floor_top; }));
    const std::size_t rank = (k - 1) / multiplicity;
    std::nth_element(stats.begin(), stats.begin() + static_cast<std::ptrdiff_t>(rank), stats.end());
    r.critical_value = stats[rank];
    r.reject = observed > r.critical_value + tie_slack(r.critical_value);
    r.p_value = static_cast<double>(at_least * multiplicity) / kd;
    r.min_attainable_p = static_cast<double>(n_top * multiplicity) / kd;
    r.reference_size = k_total;
    return r;
}

}  // namespace

void validate(const TestConfig& config) {
    if (!(config.alpha > 0.0 && config.alpha < 1.0)) {
        throw ConfigError("alpha must lie in (0, 1)");
    }
    if (config.n_draws < 1) {
        throw ConfigError("n_draws must be at least 1");
    }
    if (config.max_enumeration < 1) {
        throw ConfigError("max_enumeration must be at least 1");
    }
}

double studentized_from_moments(double sum, double sumsq, std::size_t n) {
    const double nd = static_cast<double>(n);
    const double mean = sum / nd;
    const double ss = sumsq - nd * mean * mean;
    // Deviations below rounding noise of the raw second moment count as zero SD.
    if (ss <= 16.0 * std::numeric_limits<double>::epsilon() * sumsq) {
        return mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return std::fabs(mean) / std::sqrt(ss / (nd - 1.0));
}

double studentized_abs_mean(std::span<const double> values) {
    if (values.size() < 2) {
        throw DataError("studentized statistic needs at least two treated units");
    }
    double sum = 0.0;
    double sumsq = 0.0;
    for (double v : values) {
        sum += v;
        sumsq += v * v;
    }
    return studentized_from_moments(sum, sumsq, values.size());
}

double sign_statistic(std::span<const double> effects, std::span<const int> signs) {
    if (effects.size() != signs.size()) {
        throw ConfigError("sign vector length does not match the effects");
    }
    std::vector<double> v(effects.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = signs[i] < 0 ? -effects[i] : effects[i];
    return studentized_abs_mean(v);
}

// ---------------------------------------------------------------------------
// Sign changes

SignChangeGroup::SignChangeGroup(std::vector<std::vector<std::size_t>> components, const TestConfig& config)
    : components_(std::move(components)) {
    validate(config);
    for (const auto& c : components_) n_units_ += c.size();
    const std::size_t n_comp = components_.size();
    enumerated_ = n_comp < 63 && (std::uint64_t{1} << n_comp) <= config.max_enumeration;
    if (!enumerated_) {
        n_draws_ = config.n_draws;
        words_ = (n_comp + 63) / 64;
        draws_.resize(n_draws_ * words_);
        rng::Engine g(config.seed);
        for (std::uint64_t d = 0; d < n_draws_; ++d) {
            for (std::size_t w = 0; w < words_; ++w) {
                std::uint64_t bits = g();
                const std::size_t used = std::min<std::size_t>(64, n_comp - 64 * w);
                if (used < 64) bits &= (std::uint64_t{1} << used) - 1;
                draws_[d * words_ + w] = bits;
            }
        }
    }
}

double SignChangeGroup::group_size() const { return std::ldexp(1.0, static_cast<int>(components_.size())); }

std::uint64_t SignChangeGroup::reference_size() const {
    return enumerated_ ? (std::uint64_t{1} << components_.size()) : n_draws_ + 1;
}

bool SignChangeGroup::flipped(std::uint64_t e, std::size_t component) const {
    if (enumerated_) return (e >> component) & 1U;
    if (e == 0) return false;
    return (draws_[(e - 1) * words_ + component / 64] >> (component % 64)) & 1U;
}

double SignChangeGroup::signed_sum(std::uint64_t e, std::span<const double> per_component) const {
    double sum = 0.0;
    if (enumerated_ || e == 0) {
        for (std::size_t c = 0; c < per_component.size(); ++c) {
            sum += flipped(e, c) ? -per_component[c] : per_component[c];
        }
        return sum;
    }
    const std::uint64_t* bits = &draws_[(e - 1) * words_];
    for (std::size_t c = 0; c < per_component.size(); ++c) {
        const auto flip = static_cast<double>((bits[c / 64] >> (c % 64)) & 1U);
        sum += (1.0 - 2.0 * flip) * per_component[c];
    }
    return sum;
}

void SignChangeGroup::unit_signs(std::uint64_t e, std::span<int> out) const {
    for (std::size_t c = 0; c < components_.size(); ++c) {
        const int s = flipped(e, c) ? -1 : 1;
        for (std::size_t u : components_[c]) out[u] = s;
    }
}

SignChangeGroup sign_change_group(const std::vector<std::vector<std::size_t>>& components,
                                  const TestConfig& config) {
    return SignChangeGroup(components, config);
}

RandomizationResult sign_changes_test(const UnitEffects& effects,
                                      const std::vector<std::vector<std::size_t>>& components,
                                      const TestConfig& config) {
    const std::size_t n1 = effects.tau_i.size();
    if (n1 < 2) {
        throw DataError("sign-changes test needs at least two treated units");
    }
    const SignChangeGroup group(components, config);
    if (group.n_units() != n1) {
        throw ConfigError("components do not partition the treated units");
    }
    // A sign change keeps the second moment and flips whole component sums.
    double sumsq = 0.0;
    for (double t : effects.tau_i) sumsq += t * t;
    std::vector<double> comp_sum;
    for (const auto& comp : components) {
        double s = 0.0;
        for (std::size_t u : comp) s += effects.tau_i[u];
        comp_sum.push_back(s);
    }
    const std::uint64_t k = group.reference_size();
    std::vector<double> stats;
    std::size_t multiplicity = 1;
    if (group.enumerated()) {
        // T(g) = T(-g) exactly, so only masks leaving the last component
        // unflipped are evaluated, each standing for a pair. Signed sums of
        // the low and high component halves are tabulated once; complementary
        // masks give exactly negated sums.
        const std::size_t n_comp = comp_sum.size();
        const std::size_t n_low = n_comp / 2;
        auto tabulate = [&](std::size_t first, std::size_t count) {
            std::vector<double> table(std::size_t{1} << count);
            for (std::size_t mask = 0; mask < table.size(); ++mask) {
                double sum = 0.0;
                for (std::size_t c = 0; c < count; ++c) {
                    sum += (mask >> c) & 1U ? -comp_sum[first + c] : comp_sum[first + c];
                }
                table[mask] = sum;
            }
            return table;
        };
        const std::vector<double> low = tabulate(0, n_low);
        const std::vector<double> high = tabulate(n_low, n_comp - n_low);
        const std::uint64_t low_mask = (std::uint64_t{1} << n_low) - 1;
        multiplicity = 2;
        stats.resize(k / 2);
        for (std::uint64_t e = 0; e < k / 2; ++e) {
            stats[e] = studentized_from_moments(low[e & low_mask] + high[e >> n_low], sumsq, n1);
        }
    } else {
        stats.resize(k);
        for (std::uint64_t e = 0; e < k; ++e) {
            stats[e] = studentized_from_moments(group.signed_sum(e, comp_sum), sumsq, n1);
        }
    }
    const double observed = stats[0];
    RandomizationResult r = decide(observed, std::move(stats), config.alpha, multiplicity);
    r.enumerated = group.enumerated();
    r.group_size = group.group_size();
    return r;
}

// ---------------------------------------------------------------------------
// Within-set permutations

PermutationGroup::PermutationGroup(const MatchedSets& sets, const TestConfig& config) : n_sets_(sets.n_treated()) {
    validate(config);
    std::uint64_t exact = 1;
    for (const auto& comp : sets.components) {
        Block b;
        b.sets = comp;
        // (control row, local set, member position) for every match in the block
        std::vector<std::tuple<std::size_t, std::size_t, int>> uses;
        for (std::size_t ls = 0; ls < comp.size(); ++ls) {
            const auto& nbs = sets.neighbors[comp[ls]];
            for (std::size_t j = 0; j < nbs.size(); ++j) {
                uses.emplace_back(nbs[j].row, ls, static_cast<int>(j + 1));
            }
        }
        std::sort(uses.begin(), uses.end());
        b.free_positions.assign(comp.size(), std::vector<int>{0});
        for (std::size_t i = 0; i < uses.size();) {
            std::size_t j = i;
            while (j < uses.size() && std::get<0>(uses[j]) == std::get<0>(uses[i])) ++j;
            if (j - i == 1) {
                b.free_positions[std::get<1>(uses[i])].push_back(std::get<2>(uses[i]));
            } else {
                auto& holders = b.shared.emplace_back();
                for (std::size_t u = i; u < j; ++u) holders.emplace_back(std::get<1>(uses[u]), std::get<2>(uses[u]));
            }
            i = j;
        }
        for (auto& fp : b.free_positions) std::sort(fp.begin(), fp.end());

        // Options: sets of shared controls placed in the treated role, no two
        // held by the same set. Every other set picks its treated unit or a
        // private control. The empty option comes first (identity).
        std::vector<char> covered(comp.size(), 0);
        std::vector<std::size_t> chosen;
        auto add_option = [&]() {
            Option o;
            o.chosen = chosen;
            o.count = 1;
            o.weight = 1.0;
            for (std::size_t ls = 0; ls < comp.size(); ++ls) {
                if (!covered[ls]) {
                    o.count = saturating_mul(o.count, b.free_positions[ls].size());
                    o.weight *= static_cast<double>(b.free_positions[ls].size());
                }
            }
            b.count = saturating_add(b.count, o.count);
            b.weight += o.weight;
            b.options.push_back(std::move(o));
            if (b.options.size() > kMaxBlockOptions) {
                throw NumericError("permutation group: shared-neighbor structure too large to enumerate");
            }
        };
        auto recurse = [&](auto&& self, std::size_t s) -> void {
            if (s == b.shared.size()) {
                add_option();
                return;
            }
            self(self, s + 1);
            const auto& holders = b.shared[s];
            const bool free = std::none_of(holders.begin(), holders.end(), [&](const auto& h) { return covered[h.first]; });
            if (free) {
                for (const auto& h : holders) covered[h.first] = 1;
                chosen.push_back(s);
                self(self, s + 1);
                chosen.pop_back();
                for (const auto& h : holders) covered[h.first] = 0;
            }
        };
        recurse(recurse, 0);
        size_ *= b.weight;
        exact = saturating_mul(exact, b.count);
        blocks_.push_back(std::move(b));
    }
    enumerated_ = exact != kSaturated && exact <= config.max_enumeration;
    if (!enumerated_) {
        n_draws_ = config.n_draws;
        draws_.resize(n_draws_ * n_sets_);
        std::vector<int> roles(n_sets_);
        rng::Engine g(config.seed);
        for (std::uint64_t d = 0; d < n_draws_; ++d) {
            for (const Block& b : blocks_) sample_block(b, g, roles);
            for (std::size_t t = 0; t < n_sets_; ++t) draws_[d * n_sets_ + t] = static_cast<std::uint16_t>(roles[t]);
        }
    }
}

std::uint64_t PermutationGroup::reference_size() const {
    return enumerated_ ? static_cast<std::uint64_t>(size_) : n_draws_ + 1;
}

void PermutationGroup::decode_block(const Block& b, std::uint64_t local, std::span<int> out) const {
    const Option* opt = nullptr;
    for (const Option& o : b.options) {
        if (local < o.count) {
            opt = &o;
            break;
        }
        local -= o.count;
    }
    std::vector<char> covered(b.sets.size(), 0);
    for (std::size_t s : opt->chosen) {
        for (const auto& [ls, pos] : b.shared[s]) {
            covered[ls] = 1;
            out[b.sets[ls]] = pos;
        }
    }
    for (std::size_t ls = 0; ls < b.sets.size(); ++ls) {
        if (covered[ls]) continue;
        const auto& fp = b.free_positions[ls];
        out[b.sets[ls]] = fp[local % fp.size()];
        local /= fp.size();
    }
}

template <class Rng>
void PermutationGroup::sample_block(const Block& b, Rng& g, std::span<int> out) const {
    std::size_t pick = 0;
    if (b.options.size() > 1) {
        double u = rng::uniform01(g) * b.weight;
        for (pick = 0; pick + 1 < b.options.size(); ++pick) {
            if (u < b.options[pick].weight) break;
            u -= b.options[pick].weight;
        }
    }
    const Option& opt = b.options[pick];
    std::vector<char> covered(b.sets.size(), 0);
    for (std::size_t s : opt.chosen) {
        for (const auto& [ls, pos] : b.shared[s]) {
            covered[ls] = 1;
            out[b.sets[ls]] = pos;
        }
    }
    for (std::size_t ls = 0; ls < b.sets.size(); ++ls) {
        if (covered[ls]) continue;
        const auto& fp = b.free_positions[ls];
        out[b.sets[ls]] = fp[rng::bounded(g, fp.size())];
    }
}

void PermutationGroup::roles(std::uint64_t e, std::span<int> out) const {
    if (!enumerated_) {
        if (e == 0) {
            std::fill(out.begin(), out.end(), 0);
        } else {
            for (std::size_t t = 0; t < n_sets_; ++t) out[t] = draws_[(e - 1) * n_sets_ + t];
        }
        return;
    }
    for (const Block& b : blocks_) {
        decode_block(b, e % b.count, out);
        e /= b.count;
    }
}

PermutationGroup permutation_group(const MatchedSets& sets, const TestConfig& config) {
    return PermutationGroup(sets, config);
}

RandomizationResult permutation_test(const Sample& sample, const MatchedSets& sets, const MatchSpec& spec,
                                     const TestConfig& config, const OutcomeModel* model) {
    const std::size_t n1 = sets.n_treated();
    if (config.stat == PermStat::kStandardized && n1 < 2) {
        throw DataError("standardized permutation statistic needs at least two treated units");
    }
    const double c = spec.center;
    // effect[t][r]: set t's effect when member r plays the treated role. The
    // null value c attaches to the treated unit's outcome.
    std::vector<std::vector<double>> effect(n1);
    for (std::size_t t = 0; t < n1; ++t) {
        const std::vector<double> v = set_outcomes(sample, sets, t, model);
        const auto m = static_cast<double>(v.size() - 1);
        effect[t].resize(v.size());
        for (std::size_t r = 0; r < v.size(); ++r) {
            double others = 0.0;
            for (std::size_t j = 0; j < v.size(); ++j) {
                if (j != r) others += v[j];
            }
            effect[t][r] = r == 0 ? v[0] - others / m - c : (v[r] - others / m) + c / m;
        }
    }

    const PermutationGroup group(sets, config);
    const std::uint64_t k = group.reference_size();
    std::vector<double> stats(k);
    std::vector<int> roles(n1);
    for (std::uint64_t e = 0; e < k; ++e) {
        group.roles(e, roles);
        double sum = 0.0;
        double sumsq = 0.0;
        for (std::size_t t = 0; t < n1; ++t) {
            const double v = effect[t][static_cast<std::size_t>(roles[t])];
            sum += v;
            sumsq += v * v;
        }
        stats[e] = config.stat == PermStat::kStandardized ? studentized_from_moments(sum, sumsq, n1)
                                                          : std::fabs(sum / static_cast<double>(n1));
    }
    const double observed = stats[0];
    RandomizationResult r = decide(observed, std::move(stats), config.alpha);
    r.enumerated = group.enumerated();
    r.group_size = group.group_size();
    return r;
}

}  // namespace matchri

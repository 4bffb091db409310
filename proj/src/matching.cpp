#include "matchri/matching.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <tuple>

#include "matchri/error.h"

namespace matchri {

namespace {

struct Candidate {
    double d2;
    std::int64_t row_id;
    std::size_t row;

    bool operator<(const Candidate& o) const { return std::tie(d2, row_id) < std::tie(o.d2, o.row_id); }
};

double squared_distance(const Eigen::MatrixXd& z, std::size_t a, std::size_t b) {
    return (z.row(static_cast<Eigen::Index>(a)) - z.row(static_cast<Eigen::Index>(b))).squaredNorm();
}

std::vector<Neighbor> take_nearest(std::vector<Candidate>& pool, std::size_t count) {
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count), pool.end());
    std::vector<Neighbor> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back({pool[i].row, pool[i].row_id, std::sqrt(pool[i].d2)});
    }
    return out;
}

void check_spec(const Sample& sample, const MatchSpec& spec) {
    if (spec.m < 1) {
        throw ConfigError("number of matches m must be at least 1");
    }
    for (std::size_t c : spec.exact_columns) {
        if (c >= sample.n_covariates()) {
            throw ConfigError("exact-match column index " + std::to_string(c) + " is not a covariate column");
        }
    }
}

class DisjointSets {
  public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t i) {
        while (parent_[i] != i) {
            parent_[i] = parent_[parent_[i]];
            i = parent_[i];
        }
        return i;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

  private:
    std::vector<std::size_t> parent_;
};

}  // namespace

double OutcomeModel::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return coef[0] + x.dot(coef.tail(coef.size() - 1));
}

Eigen::MatrixXd control_covariance(const Sample& sample) {
    const std::size_t n0 = sample.n_controls();
    if (n0 < 2) {
        throw NumericError("control covariance needs at least two control rows");
    }
    const auto k = static_cast<Eigen::Index>(sample.n_covariates());
    Eigen::MatrixXd xc(static_cast<Eigen::Index>(n0), k);
    for (std::size_t i = 0; i < n0; ++i) {
        xc.row(static_cast<Eigen::Index>(i)) = sample.x.row(static_cast<Eigen::Index>(sample.controls[i]));
    }
    const Eigen::RowVectorXd mean = xc.colwise().mean();
    xc.rowwise() -= mean;
    Eigen::MatrixXd cov = (xc.transpose() * xc) / static_cast<double>(n0 - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
    const double top = eig.eigenvalues().maxCoeff();
    if (!(top > 0.0) || eig.eigenvalues().minCoeff() <= top * 1e-12) {
        throw NumericError("control covariance matrix is singular; Mahalanobis metric unavailable");
    }
    return cov;
}

Eigen::MatrixXd metric_coordinates(const Sample& sample, const MatchSpec& spec) {
    const auto k = static_cast<Eigen::Index>(sample.n_covariates());
    if (spec.metric == Metric::kMahalanobis) {
        // d^2 = (a-b)' S^{-1} (a-b) = |L^{-1}(a-b)|^2 with S = L L'.
        const Eigen::LLT<Eigen::MatrixXd> llt(control_covariance(sample));
        if (llt.info() != Eigen::Success) {
            throw NumericError("control covariance is not positive definite");
        }
        const Eigen::MatrixXd l = llt.matrixL();
        return l.triangularView<Eigen::Lower>().solve(sample.x.transpose()).transpose();
    }
    if (!spec.v) {
        return sample.x;
    }
    const Eigen::MatrixXd& v = *spec.v;
    if (v.rows() != k || v.cols() != k) {
        throw ConfigError("weight matrix V must be k x k");
    }
    if (!v.isApprox(v.transpose(), 1e-12)) {
        throw ConfigError("weight matrix V must be symmetric");
    }
    // d^2 = (a-b)' L L' (a-b) = |L'(a-b)|^2.
    const Eigen::LLT<Eigen::MatrixXd> llt(v);
    if (llt.info() != Eigen::Success) {
        throw ConfigError("weight matrix V must be positive definite");
    }
    return sample.x * llt.matrixL().toDenseMatrix();
}

std::vector<Neighbor> find_neighbors(const Sample& sample, const MatchSpec& spec, std::size_t treated_index) {
    check_spec(sample, spec);
    return find_neighbors(sample, spec, metric_coordinates(sample, spec), treated_index);
}

std::vector<Neighbor> find_neighbors(const Sample& sample, const MatchSpec& spec, const Eigen::MatrixXd& coords,
                                     std::size_t treated_index) {
    if (treated_index >= sample.n_treated()) {
        throw ConfigError("treated index out of range");
    }
    const std::size_t t = sample.treated[treated_index];
    std::vector<Candidate> pool;
    pool.reserve(sample.n_controls());
    for (std::size_t c : sample.controls) {
        bool eligible = true;
        for (std::size_t col : spec.exact_columns) {
            if (sample.x(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(col)) !=
                sample.x(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(col))) {
                eligible = false;
                break;
            }
        }
        if (eligible) {
            pool.push_back({squared_distance(coords, t, c), sample.row_id[c], c});
        }
    }
    const auto m = static_cast<std::size_t>(spec.m);
    if (pool.size() < m) {
        throw DataError("treated row_id " + std::to_string(sample.row_id[t]) + " has " + std::to_string(pool.size()) +
                        " eligible controls, fewer than m = " + std::to_string(m));
    }
    return take_nearest(pool, m);
}

std::vector<Neighbor> nearest_in_group(const Sample& sample, const Eigen::MatrixXd& coords, std::size_t row,
                                       int count) {
    const auto& group = sample.w[row] ? sample.treated : sample.controls;
    std::vector<Candidate> pool;
    pool.reserve(group.size());
    for (std::size_t j : group) {
        if (j != row) {
            pool.push_back({squared_distance(coords, row, j), sample.row_id[j], j});
        }
    }
    if (count < 1 || pool.size() < static_cast<std::size_t>(count)) {
        throw DataError("row_id " + std::to_string(sample.row_id[row]) + " has fewer than " + std::to_string(count) +
                        " same-group neighbors");
    }
    return take_nearest(pool, static_cast<std::size_t>(count));
}

MatchedSets match_all(const Sample& sample, const MatchSpec& spec) {
    check_spec(sample, spec);
    const Eigen::MatrixXd coords = metric_coordinates(sample, spec);
    MatchedSets sets;
    sets.m = spec.m;
    sets.neighbors.reserve(sample.n_treated());
    sets.k_count.assign(sample.size(), 0);
    for (std::size_t t : sample.treated) sets.treated_row_id.push_back(sample.row_id[t]);
    for (std::size_t t = 0; t < sample.n_treated(); ++t) {
        sets.neighbors.push_back(find_neighbors(sample, spec, coords, t));
        for (const Neighbor& nb : sets.neighbors.back()) {
            ++sets.k_count[nb.row];
        }
    }
    sets.components = shared_components(sets);
    return sets;
}

std::vector<std::vector<std::size_t>> shared_components(const MatchedSets& sets) {
    const std::size_t n1 = sets.neighbors.size();
    DisjointSets dsu(n1);
    std::vector<std::pair<std::size_t, std::size_t>> uses;  // (control row, treated)
    for (std::size_t t = 0; t < n1; ++t) {
        for (const Neighbor& nb : sets.neighbors[t]) {
            uses.emplace_back(nb.row, t);
        }
    }
    std::sort(uses.begin(), uses.end());
    for (std::size_t i = 1; i < uses.size(); ++i) {
        if (uses[i].first == uses[i - 1].first) {
            dsu.unite(uses[i].second, uses[i - 1].second);
        }
    }
    std::vector<std::vector<std::size_t>> comps;
    std::vector<std::size_t> slot(n1, n1);
    for (std::size_t t = 0; t < n1; ++t) {
        const std::size_t root = dsu.find(t);
        if (slot[root] == n1) {
            slot[root] = comps.size();
            comps.emplace_back();
        }
        comps[slot[root]].push_back(t);
    }
    if (sets.treated_row_id.size() == n1) {
        const auto& ids = sets.treated_row_id;
        for (auto& c : comps) {
            std::sort(c.begin(), c.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
        }
        std::sort(comps.begin(), comps.end(), [&](const auto& a, const auto& b) { return ids[a[0]] < ids[b[0]]; });
    }
    return comps;
}

std::vector<double> set_outcomes(const Sample& sample, const MatchedSets& sets, std::size_t treated_index,
                                 const OutcomeModel* model) {
    const std::size_t t = sample.treated[treated_index];
    const auto& nbs = sets.neighbors[treated_index];
    std::vector<double> out;
    out.reserve(nbs.size() + 1);
    out.push_back(sample.y[static_cast<Eigen::Index>(t)]);
    const double mu_t = model ? model->predict(sample.x.row(static_cast<Eigen::Index>(t))) : 0.0;
    for (const Neighbor& nb : nbs) {
        double v = sample.y[static_cast<Eigen::Index>(nb.row)];
        if (model) {
            v = v + (mu_t - model->predict(sample.x.row(static_cast<Eigen::Index>(nb.row))));
        }
        out.push_back(v);
    }
    return out;
}

namespace {

UnitEffects effects_from_sets(const Sample& sample, const MatchedSets& sets, double center,
                              const OutcomeModel* model) {
    UnitEffects fx;
    fx.center = center;
    fx.bias_adjusted = model != nullptr;
    fx.tau_i.reserve(sets.n_treated());
    double sum = 0.0;
    for (std::size_t t = 0; t < sets.n_treated(); ++t) {
        const std::vector<double> v = set_outcomes(sample, sets, t, model);
        double nb_sum = 0.0;
        for (std::size_t j = 1; j < v.size(); ++j) nb_sum += v[j];
        const double tau = v[0] - nb_sum / static_cast<double>(v.size() - 1) - center;
        fx.tau_i.push_back(tau);
        sum += tau;
    }
    fx.tau_hat = sum / static_cast<double>(fx.tau_i.size()) + center;
    return fx;
}

}  // namespace

UnitEffects unit_effects(const Sample& sample, const MatchedSets& sets, const MatchSpec& spec) {
    return effects_from_sets(sample, sets, spec.center, nullptr);
}

UnitEffects bias_adjusted_unit_effects(const Sample& sample, const MatchedSets& sets, const MatchSpec& spec,
                                       const OutcomeModel& model) {
    return effects_from_sets(sample, sets, spec.center, &model);
}

OutcomeModel fit_outcome_model(const Sample& sample, const MatchedSets& sets, FitScope scope) {
    std::vector<std::size_t> rows;
    if (scope == FitScope::kAllControls) {
        rows = sample.controls;
    } else {
        for (std::size_t r = 0; r < sets.k_count.size(); ++r) {
            if (sets.k_count[r] > 0) rows.push_back(r);
        }
    }
    const auto k = static_cast<Eigen::Index>(sample.n_covariates());
    const auto n = static_cast<Eigen::Index>(rows.size());
    if (n < k + 1) {
        throw NumericError("outcome model needs at least k + 1 fitting rows, got " + std::to_string(rows.size()));
    }
    Eigen::MatrixXd design(n, k + 1);
    Eigen::VectorXd target(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]);
        design(i, 0) = 1.0;
        design.row(i).tail(k) = sample.x.row(r);
        target[i] = sample.y[r];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < k + 1) {
        throw NumericError("outcome model design matrix is singular");
    }
    return OutcomeModel{qr.solve(target)};
}

Estimate estimate(const Sample& sample, const MatchSpec& spec) {
    Estimate est;
    est.sets = match_all(sample, spec);
    if (spec.bias_adjust == BiasAdjust::kOff) {
        est.effects = unit_effects(sample, est.sets, spec);
    } else {
        const FitScope scope =
            spec.bias_adjust == BiasAdjust::kAllControls ? FitScope::kAllControls : FitScope::kNeighborsOnly;
        est.model = fit_outcome_model(sample, est.sets, scope);
        est.effects = bias_adjusted_unit_effects(sample, est.sets, spec, *est.model);
    }
    return est;
}

UnitEffects recenter(const UnitEffects& effects, double center) {
    UnitEffects out = effects;
    out.center = center;
    double sum = 0.0;
    for (double& t : out.tau_i) {
        t = (t + effects.center) - center;
        sum += t;
    }
    out.tau_hat = sum / static_cast<double>(out.tau_i.size()) + center;
    return out;
}

}  // namespace matchri

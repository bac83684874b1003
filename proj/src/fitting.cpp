#include "aqs/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "aqs/linalg.hpp"
#include "aqs/rng.hpp"

namespace aqs {

namespace {

constexpr double k_seconds_per_day = 86400.0;

void tod_encoding(double time, double& s, double& c) {
    double frac = std::fmod(time, k_seconds_per_day) / k_seconds_per_day;
    s = std::sin(2.0 * std::numbers::pi * frac);
    c = std::cos(2.0 * std::numbers::pi * frac);
}

}  // namespace

void SeriesDataset::validate() const {
    if (times.empty()) throw ValidationError("dataset.times: must be non-empty");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (times[i] <= times[i - 1])
            throw ValidationError("dataset.times[" + std::to_string(i) +
                                  "]: must be strictly ascending");
    if (locations.empty()) throw ValidationError("dataset.locations: must be non-empty");
    std::set<int> ids;
    for (std::size_t i = 0; i < locations.size(); ++i) {
        const LocationSeries& loc = locations[i];
        if (!ids.insert(loc.id).second)
            throw ValidationError("dataset.locations[" + std::to_string(i) + "].id: duplicate id " +
                                  std::to_string(loc.id));
        if (loc.values.size() != times.size())
            throw ValidationError("dataset.locations[" + std::to_string(i) +
                                  "].values: length must match times");
    }
}

int SeriesDataset::time_index(double time) const {
    for (std::size_t i = 0; i < times.size(); ++i)
        if (std::abs(times[i] - time) < 1e-9) return static_cast<int>(i);
    return -1;
}

void ScreeningParams::validate() const {
    if (k_spatial < 1) throw ValidationError("screening.k_spatial: must be >= 1");
    if (k_temporal < 0) throw ValidationError("screening.k_temporal: must be >= 0");
    if (history_len < 1) throw ValidationError("screening.history_len: must be >= 1");
    if (pattern_window < 2) throw ValidationError("screening.pattern_window: must be >= 2");
}

int ScreeningParams::warmup() const { return std::max(history_len - 1, pattern_window); }

std::vector<int> spatial_knn(const std::vector<LocationSeries>& candidates, const Vec3& target,
                             int k) {
    struct Entry {
        double dist;
        int id;
        int index;
    };
    std::vector<Entry> order;
    order.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i)
        order.push_back({distance(candidates[i].position, target), candidates[i].id,
                         static_cast<int>(i)});
    std::sort(order.begin(), order.end(), [](const Entry& a, const Entry& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.id < b.id;
    });
    std::vector<int> result;
    for (int i = 0; i < static_cast<int>(order.size()) && i < k; ++i)
        result.push_back(order[i].index);
    return result;
}

std::vector<int> temporal_knn(const std::vector<LocationSeries>& candidates,
                              const std::vector<int>& spatial_set, int t_idx,
                              const ScreeningParams& params) {
    const int w = params.pattern_window;
    if (t_idx < w) throw RuntimeFailure("temporal screening: pattern window not yet filled");

    auto diffs = [&](const std::vector<double>& v) {
        std::vector<double> d(static_cast<std::size_t>(w));
        for (int i = 0; i < w; ++i) d[i] = v[t_idx - w + i + 1] - v[t_idx - w + i];
        return d;
    };

    std::vector<double> reference(static_cast<std::size_t>(w), 0.0);
    for (int idx : spatial_set) {
        std::vector<double> d = diffs(candidates[idx].values);
        for (int i = 0; i < w; ++i) reference[i] += d[i];
    }
    if (!spatial_set.empty())
        for (double& v : reference) v /= static_cast<double>(spatial_set.size());

    struct Entry {
        bool degenerate;
        double corr;
        int id;
        int index;
    };
    std::vector<Entry> order;
    order.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        double r = pearson(diffs(candidates[i].values), reference);
        bool bad = !std::isfinite(r);
        order.push_back({bad, bad ? 0.0 : r, candidates[i].id, static_cast<int>(i)});
    }
    std::sort(order.begin(), order.end(), [](const Entry& a, const Entry& b) {
        if (a.degenerate != b.degenerate) return !a.degenerate;
        if (a.corr != b.corr) return a.corr > b.corr;
        return a.id < b.id;
    });
    std::vector<int> result;
    result.reserve(order.size());
    for (const Entry& e : order) result.push_back(e.index);
    return result;
}

int screened_slots(const ScreeningParams& params, int n_candidates) {
    int ns = std::min(params.k_spatial, n_candidates);
    int nt = std::min(params.k_temporal, n_candidates - ns);
    return ns + nt;
}

std::vector<double> build_features(const std::vector<LocationSeries>& candidates,
                                   const std::vector<double>& times, const Vec3& target, int t_idx,
                                   const ScreeningParams& params, int n_slots) {
    if (screened_slots(params, static_cast<int>(candidates.size())) < n_slots)
        throw RuntimeFailure("screening: too few candidate locations");

    std::vector<int> spatial = spatial_knn(candidates, target, params.k_spatial);
    std::vector<int> chosen = spatial;
    if (static_cast<int>(chosen.size()) < n_slots) {
        // Temporal slots backfill with the best-correlated locations that the
        // spatial pass did not already take, so the feature width stays fixed.
        std::vector<int> ranked = temporal_knn(candidates, spatial, t_idx, params);
        std::set<int> taken(chosen.begin(), chosen.end());
        for (int idx : ranked) {
            if (static_cast<int>(chosen.size()) >= n_slots) break;
            if (taken.insert(idx).second) chosen.push_back(idx);
        }
    }
    chosen.resize(static_cast<std::size_t>(n_slots));

    std::vector<double> x;
    x.reserve(static_cast<std::size_t>(n_slots) * (3 + params.history_len) + 2);
    for (int idx : chosen) {
        const LocationSeries& loc = candidates[idx];
        Vec3 d = loc.position - target;
        x.push_back(d.x);
        x.push_back(d.y);
        x.push_back(d.z);
        for (int h = 0; h < params.history_len; ++h) x.push_back(loc.values[t_idx - h]);
    }
    double s, c;
    tod_encoding(times[t_idx], s, c);
    x.push_back(s);
    x.push_back(c);
    return x;
}

void build_training_set(const SeriesDataset& data, const ScreeningParams& params,
                        std::vector<std::vector<double>>& xs, std::vector<double>& ys) {
    data.validate();
    params.validate();
    const int n_loc = static_cast<int>(data.locations.size());
    if (n_loc < 2) throw ValidationError("fitting: need at least two measured locations");
    const int slots = screened_slots(params, n_loc - 1);
    const int warmup = params.warmup();
    if (warmup >= static_cast<int>(data.times.size()))
        throw ValidationError("fitting: series shorter than the screening warmup");

    xs.clear();
    ys.clear();
    std::vector<LocationSeries> others;
    for (int target = 0; target < n_loc; ++target) {
        others.clear();
        for (int i = 0; i < n_loc; ++i)
            if (i != target) others.push_back(data.locations[i]);
        for (int t = warmup; t < static_cast<int>(data.times.size()); ++t) {
            xs.push_back(build_features(others, data.times, data.locations[target].position, t,
                                        params, slots));
            ys.push_back(data.locations[target].values[t]);
        }
    }
}

Normalization Normalization::fit(const std::vector<std::vector<double>>& xs) {
    Normalization n;
    if (xs.empty()) throw RuntimeFailure("normalization: empty feature set");
    const std::size_t dim = xs[0].size();
    n.mean.assign(dim, 0.0);
    n.stddev.assign(dim, 0.0);
    for (const auto& x : xs)
        for (std::size_t i = 0; i < dim; ++i) n.mean[i] += x[i];
    for (double& m : n.mean) m /= static_cast<double>(xs.size());
    for (const auto& x : xs)
        for (std::size_t i = 0; i < dim; ++i) {
            double d = x[i] - n.mean[i];
            n.stddev[i] += d * d;
        }
    for (double& s : n.stddev) s = std::max(std::sqrt(s / static_cast<double>(xs.size())), 1e-12);
    return n;
}

void Normalization::apply(std::vector<double>& x) const {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (x[i] - mean[i]) / stddev[i];
}

FitModel train_model(const SeriesDataset& data, const ScreeningParams& screening,
                     const MlpSpec& mlp_spec) {
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    build_training_set(data, screening, xs, ys);

    FitModel model;
    model.screening = screening;
    model.n_screened = screened_slots(screening, static_cast<int>(data.locations.size()) - 1);
    model.input_dim = static_cast<int>(xs[0].size());
    model.norm = Normalization::fit(xs);
    for (auto& x : xs) model.norm.apply(x);

    double y_mean = 0.0;
    for (double y : ys) y_mean += y;
    y_mean /= static_cast<double>(ys.size());
    double y_var = 0.0;
    for (double y : ys) y_var += (y - y_mean) * (y - y_mean);
    double y_std = std::max(std::sqrt(y_var / static_cast<double>(ys.size())), 1e-12);
    for (double& y : ys) y = (y - y_mean) / y_std;

    model.net = Mlp::init(mlp_spec, model.input_dim);
    model.net.train(xs, ys, mlp_spec);
    model.net.rescale_output(y_std, y_mean);
    return model;
}

double fit_point(const FitModel& model, const SeriesDataset& data, const Vec3& position,
                 double time) {
    int t_idx = data.time_index(time);
    if (t_idx < 0) throw RuntimeFailure("fit: no observations at the requested time");
    if (t_idx < model.screening.warmup())
        throw RuntimeFailure("fit: requested time is inside the screening warmup");
    if (screened_slots(model.screening, static_cast<int>(data.locations.size())) <
        model.n_screened)
        throw RuntimeFailure("fit: too few neighbor locations for the trained model");
    std::vector<double> x = build_features(data.locations, data.times, position, t_idx,
                                           model.screening, model.n_screened);
    model.norm.apply(x);
    return std::max(model.net.forward(x), 0.0);
}

double baseline_idw(const std::vector<Vec3>& positions, const std::vector<double>& values,
                    const Vec3& target, double power) {
    if (positions.empty() || positions.size() != values.size())
        throw RuntimeFailure("idw: empty or mismatched inputs");
    double wsum = 0.0, vsum = 0.0;
    for (std::size_t i = 0; i < positions.size(); ++i) {
        double d = distance(positions[i], target);
        if (d < 1e-12) return values[i];
        double w = 1.0 / std::pow(d, power);
        wsum += w;
        vsum += w * values[i];
    }
    return vsum / wsum;
}

double MlrModel::predict(const Vec3& pos, double time) const {
    double s, c;
    tod_encoding(time, s, c);
    return coef[0] * pos.x + coef[1] * pos.y + coef[2] * pos.z + coef[3] * s + coef[4] * c +
           coef[5];
}

MlrModel fit_mlr(const SeriesDataset& data, int t_start) {
    data.validate();
    const std::size_t dim = 6;
    Matrix ata(dim, dim);
    std::vector<double> atb(dim, 0.0);
    for (const LocationSeries& loc : data.locations) {
        for (int t = t_start; t < static_cast<int>(data.times.size()); ++t) {
            double s, c;
            tod_encoding(data.times[t], s, c);
            double row[dim] = {loc.position.x, loc.position.y, loc.position.z, s, c, 1.0};
            for (std::size_t i = 0; i < dim; ++i) {
                for (std::size_t j = 0; j < dim; ++j) ata(i, j) += row[i] * row[j];
                atb[i] += row[i] * loc.values[t];
            }
        }
    }
    for (std::size_t i = 0; i < dim; ++i) ata(i, i) += 1e-6;  // ridge keeps the solve stable
    MlrModel m;
    m.coef = solve_linear(ata, atb);
    return m;
}

void FitEvalParams::validate() const {
    screening.validate();
    mlp.validate();
    if (!(holdout_fraction > 0.0) || !(holdout_fraction < 1.0))
        throw ValidationError("fit_eval.holdout_fraction: must be in (0, 1)");
}

FitEvalResult evaluate_fitting(const SeriesDataset& data, const FitEvalParams& params) {
    data.validate();
    params.validate();
    const int n_loc = static_cast<int>(data.locations.size());
    int n_holdout = std::max(1, static_cast<int>(std::llround(params.holdout_fraction * n_loc)));
    if (n_loc - n_holdout < 2)
        throw ValidationError("fit_eval: holdout leaves fewer than two training locations");

    std::vector<int> order(static_cast<std::size_t>(n_loc));
    for (int i = 0; i < n_loc; ++i) order[i] = i;
    Rng split_rng(params.split_seed);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(split_rng.below(i))]);

    std::vector<bool> held(static_cast<std::size_t>(n_loc), false);
    for (int i = 0; i < n_holdout; ++i) held[static_cast<std::size_t>(order[i])] = true;

    SeriesDataset train;
    train.times = data.times;
    FitEvalResult result;
    for (int i = 0; i < n_loc; ++i) {
        if (held[static_cast<std::size_t>(i)])
            result.holdout_ids.push_back(data.locations[i].id);
        else
            train.locations.push_back(data.locations[i]);
    }
    std::sort(result.holdout_ids.begin(), result.holdout_ids.end());

    const int warmup = params.screening.warmup();
    FitModel screened = train_model(train, params.screening, params.mlp);
    MlrModel mlr = fit_mlr(train, warmup);

    // Raw-coordinate network: same architecture, no neighbor screening.
    std::vector<std::vector<double>> raw_xs;
    std::vector<double> raw_ys;
    for (const LocationSeries& loc : train.locations) {
        for (int t = warmup; t < static_cast<int>(train.times.size()); ++t) {
            double s, c;
            tod_encoding(train.times[t], s, c);
            raw_xs.push_back({loc.position.x, loc.position.y, loc.position.z, s, c});
            raw_ys.push_back(loc.values[t]);
        }
    }
    Normalization raw_norm = Normalization::fit(raw_xs);
    for (auto& x : raw_xs) raw_norm.apply(x);
    double ry_mean = 0.0;
    for (double y : raw_ys) ry_mean += y;
    ry_mean /= static_cast<double>(raw_ys.size());
    double ry_var = 0.0;
    for (double y : raw_ys) ry_var += (y - ry_mean) * (y - ry_mean);
    double ry_std = std::max(std::sqrt(ry_var / static_cast<double>(raw_ys.size())), 1e-12);
    for (double& y : raw_ys) y = (y - ry_mean) / ry_std;
    Mlp raw_net = Mlp::init(params.mlp, 5);
    raw_net.train(raw_xs, raw_ys, params.mlp);
    raw_net.rescale_output(ry_std, ry_mean);

    std::vector<Vec3> train_pos;
    for (const LocationSeries& loc : train.locations) train_pos.push_back(loc.position);

    struct Acc {
        double sq = 0.0;
        double rel = 0.0;
    };
    Acc acc_mlp, acc_idw, acc_mlr, acc_dnn;
    int n_points = 0;
    std::vector<double> slice(train.locations.size());
    for (int i = 0; i < n_loc; ++i) {
        if (!held[static_cast<std::size_t>(i)]) continue;
        const LocationSeries& loc = data.locations[i];
        for (int t = warmup; t < static_cast<int>(data.times.size()); ++t) {
            double truth = loc.values[t];
            for (std::size_t j = 0; j < train.locations.size(); ++j)
                slice[j] = train.locations[j].values[t];
            double p_mlp = fit_point(screened, train, loc.position, data.times[t]);
            double p_idw = baseline_idw(train_pos, slice, loc.position);
            double p_mlr = std::max(mlr.predict(loc.position, data.times[t]), 0.0);
            double s, c;
            tod_encoding(data.times[t], s, c);
            std::vector<double> rx = {loc.position.x, loc.position.y, loc.position.z, s, c};
            raw_norm.apply(rx);
            double p_dnn = std::max(raw_net.forward(rx), 0.0);

            auto add = [&](Acc& a, double pred) {
                double d = pred - truth;
                a.sq += d * d;
                a.rel += std::abs(d) / std::max(truth, 1.0);
            };
            add(acc_mlp, p_mlp);
            add(acc_idw, p_idw);
            add(acc_mlr, p_mlr);
            add(acc_dnn, p_dnn);
            ++n_points;
        }
    }
    if (n_points == 0) throw RuntimeFailure("fit_eval: no evaluation points past the warmup");

    auto score = [&](const std::string& name, const Acc& a) {
        return MethodScore{name, std::sqrt(a.sq / n_points), a.rel / n_points};
    };
    result.scores = {score("screened_mlp", acc_mlp), score("idw", acc_idw),
                     score("mlr", acc_mlr), score("dnn_raw", acc_dnn)};
    std::sort(result.scores.begin(), result.scores.end(),
              [](const MethodScore& a, const MethodScore& b) {
                  if (a.rmse != b.rmse) return a.rmse < b.rmse;
                  return a.method < b.method;
              });
    result.n_eval_points = n_points;
    return result;
}

}  // namespace aqs

#include "aqs/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <ostream>
#include <utility>

namespace aqs {

void WeatherFeatureSpec::validate() const {
    if (lag_steps < 1) throw ValidationError("weather_spec.lag_steps: must be >= 1");
    if (!wind && !humidity && !temperature)
        throw ValidationError("weather_spec: at least one channel must be enabled");
}

int WeatherFeatureSpec::channels() const {
    return (wind ? 3 : 0) + (humidity ? 1 : 0) + (temperature ? 1 : 0);
}

int weather_floor_index(const std::vector<WeatherRecord>& trace, double t) {
    int idx = -1;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        if (trace[i].time <= t + 1e-9)
            idx = static_cast<int>(i);
        else
            break;
    }
    return idx;
}

bool weather_features(const std::vector<WeatherRecord>& trace, double t,
                      const WeatherFeatureSpec& spec, std::vector<double>& out) {
    int idx = weather_floor_index(trace, t);
    if (idx < 0 || idx - (spec.lag_steps - 1) < 0) return false;
    for (int lag = 0; lag < spec.lag_steps; ++lag) {
        const WeatherRecord& r = trace[static_cast<std::size_t>(idx - lag)];
        if (spec.wind) {
            out.push_back(r.wind.x);
            out.push_back(r.wind.y);
            out.push_back(r.wind.z);
        }
        if (spec.humidity) out.push_back(r.humidity);
        if (spec.temperature) out.push_back(r.temperature);
    }
    return true;
}

int build_prediction_set(const SeriesDataset& data, const std::vector<WeatherRecord>& weather,
                         const ScreeningParams& screening, const WeatherFeatureSpec& wspec,
                         const std::vector<int>& offset_steps,
                         std::vector<std::vector<double>>& xs, std::vector<double>& ys) {
    data.validate();
    screening.validate();
    wspec.validate();
    if (offset_steps.empty()) throw ValidationError("prediction: offset_steps must be non-empty");
    for (int o : offset_steps)
        if (o < 0) throw ValidationError("prediction: offset_steps must be >= 0");
    const int n_loc = static_cast<int>(data.locations.size());
    if (n_loc < 2) throw ValidationError("prediction: need at least two measured locations");

    const int slots = screened_slots(screening, n_loc - 1);
    const int warmup = screening.warmup();
    const int n_t = static_cast<int>(data.times.size());
    xs.clear();
    ys.clear();
    int skipped = 0;
    std::vector<LocationSeries> others;
    for (int target = 0; target < n_loc; ++target) {
        others.clear();
        for (int i = 0; i < n_loc; ++i)
            if (i != target) others.push_back(data.locations[i]);
        for (int tb = warmup; tb < n_t; ++tb) {
            for (int o : offset_steps) {
                int tl = tb + o;
                if (tl >= n_t) continue;
                std::vector<double> x = build_features(others, data.times,
                                                       data.locations[target].position, tb,
                                                       screening, slots);
                x.push_back(data.times[tl] - data.times[tb]);
                if (!weather_features(weather, data.times[tl], wspec, x)) {
                    ++skipped;
                    continue;
                }
                xs.push_back(std::move(x));
                ys.push_back(data.locations[target].values[tl]);
            }
        }
    }
    return skipped;
}

PredictModel train_predictor(const SeriesDataset& data, const std::vector<WeatherRecord>& weather,
                             const ScreeningParams& screening, const WeatherFeatureSpec& wspec,
                             const MlpSpec& mlp_spec, const std::vector<int>& offset_steps,
                             double max_horizon_s, int* skipped_out) {
    if (!(max_horizon_s > 0.0)) throw ValidationError("prediction.max_horizon_s: must be > 0");
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    int skipped = build_prediction_set(data, weather, screening, wspec, offset_steps, xs, ys);
    if (skipped_out) *skipped_out += skipped;
    if (xs.empty()) throw RuntimeFailure("prediction: every training pair fell in a weather gap");

    PredictModel model;
    model.screening = screening;
    model.weather_spec = wspec;
    model.n_screened = screened_slots(screening, static_cast<int>(data.locations.size()) - 1);
    model.input_dim = static_cast<int>(xs[0].size());
    model.max_horizon_s = max_horizon_s;
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

double predict(const PredictModel& model, const SeriesDataset& data,
               const std::vector<WeatherRecord>& weather, const PredictionQuery& query) {
    if (!(query.horizon_s > 0.0)) throw ValidationError("prediction: horizon must be > 0");
    if (query.horizon_s > model.max_horizon_s + 1e-9)
        throw ValidationError("prediction: horizon exceeds max_horizon");
    int tb = data.time_index(query.base_time);
    if (tb < 0) throw RuntimeFailure("prediction: base_time is not on the dataset time grid");
    if (tb < model.screening.warmup())
        throw RuntimeFailure("prediction: base_time is inside the screening warmup");
    if (screened_slots(model.screening, static_cast<int>(data.locations.size())) <
        model.n_screened)
        throw RuntimeFailure("prediction: too few neighbor locations for the trained model");

    std::vector<double> x = build_features(data.locations, data.times, query.position, tb,
                                           model.screening, model.n_screened);
    x.push_back(query.horizon_s);
    if (!weather_features(weather, query.base_time + query.horizon_s, model.weather_spec, x))
        throw RuntimeFailure("prediction: weather trace does not cover the requested horizon");
    model.norm.apply(x);
    return std::max(model.net.forward(x), 0.0);
}

void PredictionEvalParams::validate() const {
    screening.validate();
    mlp.validate();
    weather_spec.validate();
    if (horizons_s.empty()) throw ValidationError("prediction.horizons_s: must be non-empty");
    for (std::size_t i = 0; i < horizons_s.size(); ++i) {
        if (!(horizons_s[i] > 0.0))
            throw ValidationError("prediction.horizons_s[" + std::to_string(i) +
                                  "]: must be > 0");
        if (horizons_s[i] > max_horizon_s + 1e-9)
            throw ValidationError("prediction.horizons_s[" + std::to_string(i) +
                                  "]: exceeds max_horizon_s");
        if (i > 0 && horizons_s[i] <= horizons_s[i - 1])
            throw ValidationError("prediction.horizons_s: must be strictly ascending");
    }
    if (min_train_steps < 1) throw ValidationError("prediction.min_train_steps: must be >= 1");
    if (cut_stride < 1) throw ValidationError("prediction.cut_stride: must be >= 1");
}

PredictionEvalResult evaluate_prediction(const SeriesDataset& data,
                                         const std::vector<WeatherRecord>& weather,
                                         const PredictionEvalParams& params) {
    data.validate();
    params.validate();
    const int n_t = static_cast<int>(data.times.size());
    const int n_loc = static_cast<int>(data.locations.size());
    const int warmup = params.screening.warmup();

    // Horizons must land on the time grid from at least one cut.
    auto step_of = [&](int from, double horizon) {
        for (int j = from + 1; j < n_t; ++j)
            if (std::abs(data.times[j] - data.times[from] - horizon) < 1e-6) return j;
        return -1;
    };

    double z_min = data.locations[0].position.z;
    for (const LocationSeries& loc : data.locations) z_min = std::min(z_min, loc.position.z);

    struct Acc {
        double rel = 0.0;
        int n = 0;
    };
    std::map<std::pair<double, std::string>, std::pair<Acc, Acc>> table;  // key -> (3d, 2d)

    PredictionEvalResult result;
    int first_cut = warmup + params.min_train_steps;
    for (int cut = first_cut; cut < n_t - 1; cut += params.cut_stride) {
        // Offsets the cut model trains on: the horizons it will be asked for.
        std::vector<int> offsets = {0};
        for (double h : params.horizons_s) {
            int j = step_of(0, h);
            if (j > 0) offsets.push_back(j);
        }
        std::sort(offsets.begin(), offsets.end());
        offsets.erase(std::unique(offsets.begin(), offsets.end()), offsets.end());

        SeriesDataset upto;
        upto.times.assign(data.times.begin(), data.times.begin() + cut + 1);
        for (const LocationSeries& loc : data.locations) {
            LocationSeries trimmed;
            trimmed.id = loc.id;
            trimmed.position = loc.position;
            trimmed.values.assign(loc.values.begin(), loc.values.begin() + cut + 1);
            upto.locations.push_back(std::move(trimmed));
        }
        PredictModel model;
        try {
            model = train_predictor(upto, weather, params.screening, params.weather_spec,
                                    params.mlp, offsets, params.max_horizon_s,
                                    &result.skipped_pairs);
        } catch (const ValidationError&) {
            continue;  // cut too early for a training set
        }
        ++result.n_cuts;

        for (double h : params.horizons_s) {
            int tl = step_of(cut, h);
            if (tl < 0) continue;
            for (int i = 0; i < n_loc; ++i) {
                const LocationSeries& loc = data.locations[i];
                double truth = loc.values[tl];
                PredictionQuery q{loc.position, data.times[cut], h};
                double p_model = predict(model, upto, weather, q);
                double p_persist = loc.values[cut];
                bool ground = std::abs(loc.position.z - z_min) < 1e-9;
                auto add = [&](const std::string& method, double pred) {
                    double rel = std::abs(pred - truth) / std::max(truth, 1.0);
                    auto& cell = table[{h, method}];
                    cell.first.rel += rel;
                    cell.first.n += 1;
                    if (ground) {
                        cell.second.rel += rel;
                        cell.second.n += 1;
                    }
                };
                add("screened_mlp", p_model);
                add("persistence", p_persist);
            }
        }
    }

    for (double h : params.horizons_s) {
        bool present = false;
        for (const auto& [key, accs] : table)
            if (key.first == h && accs.first.n > 0) present = true;
        if (!present) result.dropped_horizons.push_back(h);
    }

    for (const auto& [key, accs] : table) {
        const auto& [h, method] = key;
        if (accs.first.n > 0)
            result.rows.push_back({method, h, accs.first.rel / accs.first.n, accs.first.n, "3d"});
        if (accs.second.n > 0)
            result.rows.push_back(
                {method, h, accs.second.rel / accs.second.n, accs.second.n, "2d"});
    }
    std::sort(result.rows.begin(), result.rows.end(),
              [](const PredictionRow& a, const PredictionRow& b) {
                  if (a.horizon_s != b.horizon_s) return a.horizon_s < b.horizon_s;
                  if (a.method != b.method) return a.method < b.method;
                  return a.dim_tag < b.dim_tag;
              });
    return result;
}

void write_prediction_csv(const PredictionEvalResult& result, std::ostream& out) {
    out << "method,horizon_s,mrd,n,dim_tag\n";
    for (const PredictionRow& r : result.rows)
        out << r.method << ',' << fmt_double(r.horizon_s) << ',' << fmt_double(r.mrd) << ','
            << r.n << ',' << r.dim_tag << '\n';
}

}  // namespace aqs

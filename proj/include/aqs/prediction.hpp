#pragma once

#include <string>
#include <vector>

#include "aqs/field_model.hpp"
#include "aqs/fitting.hpp"

namespace aqs {

struct WeatherFeatureSpec {
    bool wind = true;  // all three components
    bool humidity = true;
    bool temperature = true;
    int lag_steps = 1;  // weather records entering the feature vector, newest first

    void validate() const;
    int channels() const;  // per lag step
};

struct PredictionQuery {
    Vec3 position;
    double base_time = 0.0;  // last time with data
    double horizon_s = 0.0;  // seconds ahead, > 0
};

struct PredictModel {
    ScreeningParams screening;
    WeatherFeatureSpec weather_spec;
    Normalization norm;
    Mlp net;
    int n_screened = 0;
    int input_dim = 0;
    double max_horizon_s = 7200.0;
};

// Index of the last record with time <= t, or -1 when t precedes the trace.
int weather_floor_index(const std::vector<WeatherRecord>& trace, double t);

// Appends lag_steps x channels() values (newest record first) sampled at the
// records at or before t. Returns false when the trace cannot supply them.
bool weather_features(const std::vector<WeatherRecord>& trace, double t,
                      const WeatherFeatureSpec& spec, std::vector<double>& out);

// Supervised pairs: leave-target-out screened features at the base step, the
// signed offset dt to the label step, and lagged weather at label time.
// offset_steps are label offsets in time-grid steps (0 = degenerate horizon).
// Returns the number of pairs skipped because of weather gaps.
int build_prediction_set(const SeriesDataset& data, const std::vector<WeatherRecord>& weather,
                         const ScreeningParams& screening, const WeatherFeatureSpec& wspec,
                         const std::vector<int>& offset_steps,
                         std::vector<std::vector<double>>& xs, std::vector<double>& ys);

// `skipped_out`, when given, receives the number of pairs lost to weather gaps.
PredictModel train_predictor(const SeriesDataset& data, const std::vector<WeatherRecord>& weather,
                             const ScreeningParams& screening, const WeatherFeatureSpec& wspec,
                             const MlpSpec& mlp_spec, const std::vector<int>& offset_steps,
                             double max_horizon_s, int* skipped_out = nullptr);

// Evaluates the model at (position, base_time + horizon); clamped at 0.
// base_time must lie on the dataset time grid past the screening warmup.
double predict(const PredictModel& model, const SeriesDataset& data,
               const std::vector<WeatherRecord>& weather, const PredictionQuery& query);

struct PredictionEvalParams {
    ScreeningParams screening;
    MlpSpec mlp;
    WeatherFeatureSpec weather_spec;
    std::vector<double> horizons_s = {900.0, 1800.0, 3600.0, 7200.0};
    double max_horizon_s = 7200.0;
    int min_train_steps = 8;  // steps past warmup before the first cut
    int cut_stride = 8;       // distance between successive cuts

    void validate() const;
};

struct PredictionRow {
    std::string method;  // screened_mlp | persistence
    double horizon_s = 0.0;
    double mrd = 0.0;
    int n = 0;
    std::string dim_tag;  // 3d = all locations, 2d = lowest-altitude slice
};

struct PredictionEvalResult {
    std::vector<PredictionRow> rows;  // sorted by (horizon, method, dim_tag)
    std::vector<double> dropped_horizons;
    int skipped_pairs = 0;
    int n_cuts = 0;
};

// Walk-forward evaluation: at each cut, trains on data up to the cut only and
// predicts the measured locations at each horizon past it.
PredictionEvalResult evaluate_prediction(const SeriesDataset& data,
                                         const std::vector<WeatherRecord>& weather,
                                         const PredictionEvalParams& params);

void write_prediction_csv(const PredictionEvalResult& result, std::ostream& out);

}  // namespace aqs

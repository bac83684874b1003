#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aqs/common.hpp"
#include "aqs/mlp.hpp"

namespace aqs {

// Aligned per-location time series used by fitting and prediction.
struct LocationSeries {
    int id = 0;
    Vec3 position;
    std::vector<double> values;  // one entry per SeriesDataset::times entry
};

struct SeriesDataset {
    std::vector<double> times;  // seconds, strictly ascending
    std::vector<LocationSeries> locations;

    void validate() const;
    // Index of `time` in times (|dt| < 1e-9), or -1.
    int time_index(double time) const;
};

struct ScreeningParams {
    int k_spatial = 4;
    int k_temporal = 3;
    int history_len = 3;     // values per screened location, newest first
    int pattern_window = 6;  // first-difference window for temporal ranking

    void validate() const;
    // Earliest usable time index: history and a full pattern window must exist.
    int warmup() const;
};

// Indices into `candidates` of the k nearest locations to `target`,
// ordered by (distance, id) ascending. Returns min(k, candidates.size()) entries.
std::vector<int> spatial_knn(const std::vector<LocationSeries>& candidates, const Vec3& target,
                             int k);

// Ranks every candidate by Pearson correlation between its first-difference
// series over the pattern window ending at t_idx and the mean difference
// series of the spatial set (descending). Degenerate series (zero variance)
// rank last; ties break by ascending id. Returns indices into `candidates`.
std::vector<int> temporal_knn(const std::vector<LocationSeries>& candidates,
                              const std::vector<int>& spatial_set, int t_idx,
                              const ScreeningParams& params);

// Feature-wise affine normalization fitted on training features.
struct Normalization {
    std::vector<double> mean;
    std::vector<double> stddev;  // floored at 1e-12

    static Normalization fit(const std::vector<std::vector<double>>& xs);
    void apply(std::vector<double>& x) const;
};

struct FitModel {
    ScreeningParams screening;
    Normalization norm;
    Mlp net;          // outputs raw-scale values (label scaling folded in)
    int n_screened = 0;
    int input_dim = 0;
};

// Screened feature vector for `target` at time index t_idx, built from
// `candidates`: per screened location (dx,dy,dz, history newest-first),
// then time-of-day sin/cos. Requires candidates.size() >= n_slots.
std::vector<double> build_features(const std::vector<LocationSeries>& candidates,
                                   const std::vector<double>& times, const Vec3& target, int t_idx,
                                   const ScreeningParams& params, int n_slots);

// Number of screened slots available from `n_candidates` locations.
int screened_slots(const ScreeningParams& params, int n_candidates);

// Leave-target-out training pairs over all locations and t >= warmup.
void build_training_set(const SeriesDataset& data, const ScreeningParams& params,
                        std::vector<std::vector<double>>& xs, std::vector<double>& ys);

FitModel train_model(const SeriesDataset& data, const ScreeningParams& screening,
                     const MlpSpec& mlp_spec);

// Fitted value at an arbitrary position and an observed time, clamped >= 0.
// Throws RuntimeFailure with distinct messages when the time is absent from
// the dataset, history is insufficient, or too few neighbor locations exist.
double fit_point(const FitModel& model, const SeriesDataset& data, const Vec3& position,
                 double time);

// Inverse-distance weighting over all given points; exact at coincident points.
double baseline_idw(const std::vector<Vec3>& positions, const std::vector<double>& values,
                    const Vec3& target, double power = 2.0);

// Ridge-regularized linear model on (x, y, z, tod_sin, tod_cos).
struct MlrModel {
    std::vector<double> coef;  // 5 slopes + intercept
    double predict(const Vec3& pos, double time) const;
};

MlrModel fit_mlr(const SeriesDataset& data, int t_start);

struct FitEvalParams {
    ScreeningParams screening;
    MlpSpec mlp;
    double holdout_fraction = 0.2;
    std::uint64_t split_seed = 1;

    void validate() const;
};

struct MethodScore {
    std::string method;
    double rmse = 0.0;
    double mrd = 0.0;  // mean |pred - truth| / max(truth, 1)
};

struct FitEvalResult {
    std::vector<MethodScore> scores;  // ascending rmse
    std::vector<int> holdout_ids;     // ascending
    int n_eval_points = 0;
};

// Holds out a seeded fraction of locations, trains every method on the rest,
// and scores them on the held-out series. Methods: screened_mlp, idw, mlr,
// dnn_raw (same network on raw coordinates + time of day).
FitEvalResult evaluate_fitting(const SeriesDataset& data, const FitEvalParams& params);

}  // namespace aqs

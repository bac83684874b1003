#pragma once

#include <span>
#include <vector>

#include "aqs/device_net_sim.hpp"
#include "aqs/fitting.hpp"

namespace aqs {

struct OutlierParams {
    int k_neighbors = 3;        // peers feeding the reference median
    double rel_threshold = 0.5; // relative-error cutoff
    int min_peers = 3;          // below this a sample is never judged
    double epsilon = 1.0;       // ug/m^3 denominator floor
    double bucket_width_s = 300.0;

    void validate() const {
        if (k_neighbors < 1) throw ValidationError("outlier: k_neighbors must be >= 1");
        if (!(rel_threshold > 0)) throw ValidationError("outlier: rel_threshold must be > 0");
        if (min_peers < 1) throw ValidationError("outlier: min_peers must be >= 1");
        if (!(bucket_width_s > 0)) throw ValidationError("outlier: bucket_width_s must be > 0");
    }
};

/// value' = gain*value + offset, clamped at 0; flag set to calibrated.
Sample calibrate(const Sample& sample, const Calibration& calibration);

/// Flags each sample of one co-temporal batch whose PM2.5 value deviates from
/// the median of its k spatially nearest peers by more than rel_threshold in
/// relative terms. Flags are positional, aligned with the input span.
std::vector<bool> detect_outliers(std::span<const Sample> batch, const OutlierParams& params);

/// Groups sample indices into time buckets of params.bucket_width_s.
std::vector<std::vector<std::size_t>> bucket_by_time(std::span<const Sample> samples,
                                                     double bucket_width_s);

/// Convenience: buckets, flags per bucket, returns samples with outlier flags set.
std::vector<Sample> flag_outliers(std::span<const Sample> samples, const OutlierParams& params);

/// Rectangular per-location series from loose samples: locations keyed by
/// device id, times restricted to those every device reported (so loss or
/// death shrinks the common grid rather than leaving holes). Outlier-flagged
/// samples are dropped first unless keep_outliers is set.
SeriesDataset dataset_from_samples(std::span<const Sample> samples, bool keep_outliers = false);

}  // namespace aqs

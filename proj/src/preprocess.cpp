#include "aqs/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace aqs {

Sample calibrate(const Sample& sample, const Calibration& calibration) {
    if (!(calibration.gain > 0)) throw ValidationError("calibrate: gain must be > 0");
    Sample out = sample;
    out.pm25 = std::max(0.0, calibration.gain * sample.pm25 + calibration.offset);
    out.pm10 = std::max(0.0, calibration.gain * sample.pm10 + calibration.offset);
    out.flag = SampleFlag::calibrated;
    return out;
}

namespace {

double median_sorted(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<bool> detect_outliers(std::span<const Sample> batch, const OutlierParams& params) {
    params.validate();
    std::vector<bool> flags(batch.size(), false);
    if (batch.empty()) return flags;

    for (std::size_t i = 0; i < batch.size(); ++i) {
        // peers sorted by distance; id and time break ties so the verdict does
        // not depend on batch ordering
        struct Peer {
            double dist;
            int id;
            double time;
            double value;
        };
        std::vector<Peer> peers;
        peers.reserve(batch.size() - 1);
        for (std::size_t j = 0; j < batch.size(); ++j) {
            if (j == i) continue;
            peers.push_back({distance(batch[i].position, batch[j].position), batch[j].device_id,
                             batch[j].time, batch[j].pm25});
        }
        if (peers.size() < static_cast<std::size_t>(params.min_peers)) continue;

        std::sort(peers.begin(), peers.end(), [](const Peer& a, const Peer& b) {
            if (a.dist != b.dist) return a.dist < b.dist;
            if (a.id != b.id) return a.id < b.id;
            return a.time < b.time;
        });
        std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(params.k_neighbors),
                                              peers.size());
        std::vector<double> vals;
        vals.reserve(k);
        for (std::size_t j = 0; j < k; ++j) vals.push_back(peers[j].value);
        double ref = median_sorted(vals);
        double rel = std::fabs(batch[i].pm25 - ref) / std::max(ref, params.epsilon);
        if (rel > params.rel_threshold) flags[i] = true;
    }
    return flags;
}

std::vector<std::vector<std::size_t>> bucket_by_time(std::span<const Sample> samples,
                                                     double bucket_width_s) {
    if (!(bucket_width_s > 0)) throw ValidationError("bucket_by_time: width must be > 0");
    std::vector<std::pair<long long, std::size_t>> keyed;
    keyed.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        keyed.emplace_back(static_cast<long long>(std::floor(samples[i].time / bucket_width_s)), i);
    }
    std::stable_sort(keyed.begin(), keyed.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::vector<std::size_t>> buckets;
    for (std::size_t i = 0; i < keyed.size(); ++i) {
        if (i == 0 || keyed[i].first != keyed[i - 1].first) buckets.emplace_back();
        buckets.back().push_back(keyed[i].second);
    }
    return buckets;
}

std::vector<Sample> flag_outliers(std::span<const Sample> samples, const OutlierParams& params) {
    std::vector<Sample> out(samples.begin(), samples.end());
    for (const std::vector<std::size_t>& bucket : bucket_by_time(samples, params.bucket_width_s)) {
        std::vector<Sample> batch;
        batch.reserve(bucket.size());
        for (std::size_t idx : bucket) batch.push_back(samples[idx]);
        std::vector<bool> flags = detect_outliers(batch, params);
        for (std::size_t b = 0; b < bucket.size(); ++b) {
            if (flags[b]) out[bucket[b]].flag = SampleFlag::outlier;
        }
    }
    return out;
}

SeriesDataset dataset_from_samples(std::span<const Sample> samples, bool keep_outliers) {
    struct PerDevice {
        Vec3 position;
        std::map<double, double> by_time;
    };
    std::map<int, PerDevice> devices;
    for (const Sample& s : samples) {
        if (!keep_outliers && s.flag == SampleFlag::outlier) continue;
        auto [it, fresh] = devices.try_emplace(s.device_id);
        if (fresh) it->second.position = s.position;
        it->second.by_time[s.time] = s.pm25;  // re-upload after loss overwrites equal value
    }
    if (devices.empty()) throw RuntimeFailure("dataset: no usable samples");

    // Keep only times every device reported.
    std::map<double, int> time_counts;
    for (const auto& [id, dev] : devices)
        for (const auto& [t, v] : dev.by_time) time_counts[t] += 1;
    SeriesDataset data;
    for (const auto& [t, count] : time_counts)
        if (count == static_cast<int>(devices.size())) data.times.push_back(t);
    if (data.times.empty()) throw RuntimeFailure("dataset: no time shared by every device");

    for (const auto& [id, dev] : devices) {
        LocationSeries loc;
        loc.id = id;
        loc.position = dev.position;
        for (double t : data.times) loc.values.push_back(dev.by_time.at(t));
        data.locations.push_back(std::move(loc));
    }
    return data;
}

}  // namespace aqs

#include "aqs/power_tradeoff.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "aqs/preprocess.hpp"
#include "aqs/rng.hpp"

namespace aqs {

void IntervalPolicy::validate() const {
    if (base_sense_min < 1 || base_upload_min < 1)
        throw ValidationError("policy: base intervals must be >= 1");
    if (floor_min < 1) throw ValidationError("policy.floor_min: must be >= 1");
    if (aqi_thresholds.size() != scale_factors.size())
        throw ValidationError("policy: one scale factor per threshold");
    for (std::size_t i = 0; i < aqi_thresholds.size(); ++i) {
        if (i > 0 && aqi_thresholds[i] <= aqi_thresholds[i - 1])
            throw ValidationError("policy.aqi_thresholds: must be strictly ascending");
        if (!(scale_factors[i] > 0.0) || scale_factors[i] > 1.0)
            throw ValidationError("policy.scale_factors[" + std::to_string(i) +
                                  "]: must be in (0, 1]");
    }
}

double battery_duration_h(const PowerProfile& profile, int sense_min, int upload_min) {
    profile.validate();
    if (sense_min < 1 || upload_min < 1)
        throw ValidationError("battery: intervals must be >= 1");
    double daily = 1440.0 * (profile.e_wake + profile.e_sleep_per_min) +
                   (1440.0 / sense_min) * profile.e_sense +
                   (1440.0 / upload_min) * profile.e_upload;
    if (!(daily > 0.0)) throw ValidationError("battery: profile draws no energy");
    return profile.capacity_mAh / daily * 24.0;
}

std::pair<int, int> adapt_intervals(const IntervalPolicy& policy, double aqi_proxy) {
    policy.validate();
    double factor = 1.0;
    for (std::size_t i = 0; i < policy.aqi_thresholds.size(); ++i)
        if (aqi_proxy >= policy.aqi_thresholds[i]) factor *= policy.scale_factors[i];
    int sense = std::max(policy.floor_min,
                         static_cast<int>(std::floor(policy.base_sense_min * factor)));
    int upload = std::max(policy.floor_min,
                          static_cast<int>(std::floor(policy.base_upload_min * factor)));
    upload = std::max(upload, sense);
    return {sense, upload};
}

namespace {

std::vector<Vec3> probe_positions(const GridSpec& grid, int count, std::uint64_t seed) {
    Rng rng(seed);
    Vec3 ext = grid.extent();
    std::vector<Vec3> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        double x = rng.uniform01() * ext.x;
        double y = rng.uniform01() * ext.y;
        double z = rng.uniform01() * ext.z;
        out.push_back({x, y, z});
    }
    return out;
}

std::string csv_safe(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

double recover_idw(const std::vector<FlightSample>& samples, const Vec3& target) {
    struct Near {
        double dist;
        std::size_t index;
    };
    std::vector<Near> order;
    order.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
        order.push_back({distance(samples[i].position, target), i});
    std::sort(order.begin(), order.end(), [](const Near& a, const Near& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.index < b.index;
    });
    double wsum = 0.0, vsum = 0.0;
    for (std::size_t i = 0; i < order.size() && i < 6; ++i) {
        if (order[i].dist < 1e-12) return samples[order[i].index].value;
        double w = 1.0 / (order[i].dist * order[i].dist);
        wsum += w;
        vsum += w * samples[order[i].index].value;
    }
    return vsum / wsum;
}

}  // namespace

void IntervalSweepParams::validate() const {
    screening.validate();
    mlp.validate();
    if (upload_factor < 1) throw ValidationError("sweep.upload_factor: must be >= 1");
    if (n_probe_positions < 1) throw ValidationError("sweep.n_probe_positions: must be >= 1");
    if (!(probe_step_s > 0.0)) throw ValidationError("sweep.probe_step_s: must be > 0");
    if (max_probe_times < 1) throw ValidationError("sweep.max_probe_times: must be >= 1");
}

std::vector<IntervalSweepRow> interval_accuracy_sweep(const SimConfig& base, const Field& field,
                                                      const std::vector<int>& sense_intervals_min,
                                                      const std::vector<std::uint64_t>& seeds,
                                                      const IntervalSweepParams& params) {
    params.validate();
    if (sense_intervals_min.empty())
        throw ValidationError("sweep: interval grid must be non-empty");
    if (seeds.empty()) throw ValidationError("sweep: need at least one seed");
    for (int i : sense_intervals_min)
        if (i < 1) throw ValidationError("sweep: intervals must be >= 1");

    std::vector<int> intervals = sense_intervals_min;
    std::sort(intervals.begin(), intervals.end());
    intervals.erase(std::unique(intervals.begin(), intervals.end()), intervals.end());

    // One probe schedule serves every cell: times clear of the slowest
    // setting's warmup so each run has a usable fit beneath every probe.
    const int max_interval = intervals.back();
    const double duration_s = base.duration_min * 60.0;
    double first_probe = (params.screening.warmup() + 1) *
                         static_cast<double>(max_interval) * 60.0;
    std::vector<double> probe_times;
    for (double t = first_probe;
         t <= duration_s && static_cast<int>(probe_times.size()) < params.max_probe_times;
         t += params.probe_step_s)
        probe_times.push_back(t);
    if (probe_times.empty())
        throw ValidationError("sweep: scenario too short for any probe past the warmup");
    std::vector<Vec3> probes = probe_positions(base.grid, params.n_probe_positions,
                                               params.probe_seed);

    std::vector<IntervalSweepRow> rows;
    for (int interval : intervals) {
        IntervalSweepRow row;
        row.sense_min = interval;
        row.upload_min = interval * params.upload_factor;
        row.battery_hours = battery_duration_h(base.profile, row.sense_min, row.upload_min);
        double rel_sum = 0.0;
        for (std::uint64_t seed : seeds) {
            try {
                SimConfig cfg = base;
                cfg.master_seed = seed;
                for (DeviceConfig& dev : cfg.devices) {
                    dev.sensing_interval_min = row.sense_min;
                    dev.uploading_interval_min = row.upload_min;
                }
                SimulationTrace trace = run_simulation(cfg, field);
                std::vector<Sample> samples;
                samples.reserve(trace.received.size());
                for (const ReceivedSample& r : trace.received) samples.push_back(r.sample);
                SeriesDataset data = dataset_from_samples(samples);
                FitModel model = train_model(data, params.screening, params.mlp);

                const int warmup = params.screening.warmup();
                double acc = 0.0;
                int n = 0;
                for (double t : probe_times) {
                    int idx = -1;
                    for (std::size_t k = 0; k < data.times.size(); ++k)
                        if (data.times[k] <= t + 1e-9) idx = static_cast<int>(k);
                    if (idx < warmup) continue;
                    for (const Vec3& pos : probes) {
                        double est = fit_point(model, data, pos, data.times[idx]);
                        double truth = field.sample_truth(pos, t);
                        acc += std::abs(est - truth) / std::max(truth, 1.0);
                        ++n;
                    }
                }
                if (n == 0) throw RuntimeFailure("sweep: no probe had data past the warmup");
                rel_sum += acc / n;
                row.status.n_seeds_ok += 1;
            } catch (const std::exception& e) {
                row.status.ok = false;
                if (row.status.note.empty()) row.status.note = e.what();
            }
        }
        row.mrd = row.status.n_seeds_ok > 0 ? rel_sum / row.status.n_seeds_ok : 0.0;
        rows.push_back(std::move(row));
    }
    return rows;
}

void AerialSetup::validate() const {
    scan_grid.validate();
    uav.validate();
    pdt.validate();
    if (!(hover_s > 0.0)) throw ValidationError("aerial.hover_s: must be > 0");
    if (!(tau_s > 0.0)) throw ValidationError("aerial.tau_s: must be > 0");
    if (n_probe_positions < 1) throw ValidationError("aerial.n_probe_positions: must be >= 1");
    if (!(horizon_h > 0.0)) throw ValidationError("aerial.horizon_h: must be > 0");
    if (!(probe_step_h > 0.0)) throw ValidationError("aerial.probe_step_h: must be > 0");
    if (scan_time_s < 0.0) throw ValidationError("aerial.scan_time_s: must be >= 0");
}

namespace {

struct FlightTrace {
    double end_time;
    std::vector<FlightSample> samples;
};

}  // namespace

std::vector<AerialSweepRow> aerial_interval_sweep(const Field& field, const AerialSetup& setup,
                                                  const std::vector<double>& intervals_h,
                                                  const std::vector<std::uint64_t>& seeds) {
    setup.validate();
    if (intervals_h.empty()) throw ValidationError("sweep: interval grid must be non-empty");
    if (seeds.empty()) throw ValidationError("sweep: need at least one seed");
    for (double h : intervals_h) {
        if (!(h > 0.0) || h > 24.0)
            throw ValidationError("sweep: flight interval must be in (0, 24] hours");
        if (h > setup.horizon_h + 1e-9)
            throw ValidationError("sweep: flight interval exceeds the horizon");
    }
    if (field.grid().duration() < setup.scan_time_s + setup.horizon_h * 3600.0)
        throw ValidationError("sweep: field trace shorter than the sweep horizon");

    std::vector<double> intervals = intervals_h;
    std::sort(intervals.begin(), intervals.end());
    intervals.erase(std::unique(intervals.begin(), intervals.end()), intervals.end());
    std::vector<Vec3> probes = probe_positions(field.grid(), setup.n_probe_positions,
                                               setup.probe_seed);

    std::vector<AerialSweepRow> rows;
    for (double interval : intervals) {
        AerialSweepRow row;
        row.interval_h = interval;
        row.default_band = interval >= 6.0 && interval <= 12.0;
        double rel_sum = 0.0, energy_sum = 0.0;
        for (std::uint64_t seed : seeds) {
            try {
                std::vector<ScanSample> scan = coarse_scan(field, setup.scan_grid,
                                                           setup.scan_time_s, setup.noise,
                                                           derive_seed(seed, "scan"));
                CoarseField coarse = fit_coarse(scan, setup.scan_grid);
                PdtResult pdt = compute_pdt(coarse, setup.pdt);
                FlightPlan plan = plan_route(pdt.points, coarse, setup.start, setup.uav,
                                             setup.hover_s);
                if (plan.cells.empty())
                    throw RuntimeFailure("sweep: budget admits no waypoint");

                std::vector<FlightTrace> flights;
                for (int k = 0;; ++k) {
                    double t0 = setup.scan_time_s + k * interval * 3600.0;
                    if (t0 - setup.scan_time_s > setup.horizon_h * 3600.0) break;
                    FlightResult fr = simulate_flight(plan, field, setup.uav, setup.tau_s, t0,
                                                      setup.noise,
                                                      derive_seed(seed, "flight", k));
                    flights.push_back({fr.end_time, std::move(fr.samples)});
                }

                double acc = 0.0;
                int n = 0;
                for (double th = setup.probe_step_h; th <= setup.horizon_h + 1e-9;
                     th += setup.probe_step_h) {
                    double t = setup.scan_time_s + th * 3600.0;
                    const FlightTrace* latest = nullptr;
                    for (const FlightTrace& f : flights)
                        if (f.end_time <= t) latest = &f;
                    if (!latest) continue;
                    for (const Vec3& pos : probes) {
                        double est = recover_idw(latest->samples, pos);
                        double truth = field.sample_truth(pos, t);
                        acc += std::abs(est - truth) / std::max(truth, 1.0);
                        ++n;
                    }
                }
                if (n == 0) throw RuntimeFailure("sweep: no probe after the first flight");
                rel_sum += acc / n;
                energy_sum += plan.total_energy() * (24.0 / interval);
                row.status.n_seeds_ok += 1;
            } catch (const std::exception& e) {
                row.status.ok = false;
                if (row.status.note.empty()) row.status.note = e.what();
            }
        }
        if (row.status.n_seeds_ok > 0) {
            row.mrd = rel_sum / row.status.n_seeds_ok;
            row.energy_per_day_J = energy_sum / row.status.n_seeds_ok;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

HoverSweepResult hover_sweep(const Field& field, const AerialSetup& setup,
                             const std::vector<double>& hover_times_s,
                             const std::vector<std::uint64_t>& seeds) {
    setup.validate();
    if (hover_times_s.empty()) throw ValidationError("sweep: hover list must be non-empty");
    if (seeds.empty()) throw ValidationError("sweep: need at least one seed");
    for (double h : hover_times_s)
        if (!(h > 0.0)) throw ValidationError("sweep: hover times must be > 0");

    std::vector<double> hovers = hover_times_s;
    std::sort(hovers.begin(), hovers.end());
    hovers.erase(std::unique(hovers.begin(), hovers.end()), hovers.end());

    HoverSweepResult result;
    for (double hover : hovers) {
        HoverSweepRow row;
        row.hover_s = hover;
        double rel_sum = 0.0, pos_sum = 0.0;
        for (std::uint64_t seed : seeds) {
            try {
                std::vector<ScanSample> scan = coarse_scan(field, setup.scan_grid,
                                                           setup.scan_time_s, setup.noise,
                                                           derive_seed(seed, "scan"));
                CoarseField coarse = fit_coarse(scan, setup.scan_grid);
                PdtResult pdt = compute_pdt(coarse, setup.pdt);
                FlightPlan plan = plan_route(pdt.points, coarse, setup.start, setup.uav, hover);
                if (plan.cells.empty())
                    throw RuntimeFailure("sweep: budget admits no waypoint");
                FlightResult fr = simulate_flight(plan, field, setup.uav, setup.tau_s,
                                                  setup.scan_time_s, setup.noise,
                                                  derive_seed(seed, "flight"));

                double acc = 0.0;
                int n = 0;
                const GridSpec& g = coarse.grid;
                for (int z = 0; z < g.nz; ++z)
                    for (int y = 0; y < g.ny; ++y)
                        for (int x = 0; x < g.nx; ++x) {
                            Vec3 c = g.cell_center(x, y, z);
                            double est = recover_idw(fr.samples, c);
                            double truth = field.sample_truth(c, fr.end_time);
                            acc += std::abs(est - truth) / std::max(truth, 1.0);
                            ++n;
                        }
                rel_sum += acc / n;
                pos_sum += static_cast<double>(plan.cells.size());
                row.status.n_seeds_ok += 1;
            } catch (const std::exception& e) {
                row.status.ok = false;
                if (row.status.note.empty()) row.status.note = e.what();
            }
        }
        if (row.status.n_seeds_ok > 0) {
            row.mrd = rel_sum / row.status.n_seeds_ok;
            row.mean_positions = pos_sum / row.status.n_seeds_ok;
        }
        result.rows.push_back(std::move(row));
    }

    bool have = false;
    double best = 0.0;
    for (const HoverSweepRow& row : result.rows) {
        if (row.status.n_seeds_ok == 0) continue;
        if (!have || row.mrd < best) {
            have = true;
            best = row.mrd;
            result.argmin_hover_s = row.hover_s;
        }
    }
    return result;
}

void write_interval_sweep_csv(const std::vector<IntervalSweepRow>& rows, std::ostream& out) {
    out << "sense_min,upload_min,battery_hours,mrd,n_seeds_ok,ok,note\n";
    for (const IntervalSweepRow& r : rows)
        out << r.sense_min << ',' << r.upload_min << ',' << fmt_double(r.battery_hours) << ','
            << fmt_double(r.mrd) << ',' << r.status.n_seeds_ok << ','
            << (r.status.ok ? "true" : "false") << ',' << csv_safe(r.status.note) << '\n';
}

void write_aerial_sweep_csv(const std::vector<AerialSweepRow>& rows, std::ostream& out) {
    out << "interval_h,uav_energy_per_day_J,mrd,default_band,n_seeds_ok,ok,note\n";
    for (const AerialSweepRow& r : rows)
        out << fmt_double(r.interval_h) << ',' << fmt_double(r.energy_per_day_J) << ','
            << fmt_double(r.mrd) << ',' << (r.default_band ? "true" : "false") << ','
            << r.status.n_seeds_ok << ',' << (r.status.ok ? "true" : "false") << ','
            << csv_safe(r.status.note) << '\n';
}

void write_hover_sweep_csv(const HoverSweepResult& result, std::ostream& out) {
    out << "hover_s,n_positions_visited,mrd,is_argmin,n_seeds_ok,ok,note\n";
    for (const HoverSweepRow& r : result.rows)
        out << fmt_double(r.hover_s) << ',' << fmt_double(r.mean_positions) << ','
            << fmt_double(r.mrd) << ',' << (r.hover_s == result.argmin_hover_s ? "true" : "false")
            << ',' << r.status.n_seeds_ok << ',' << (r.status.ok ? "true" : "false") << ','
            << csv_safe(r.status.note) << '\n';
}

}  // namespace aqs

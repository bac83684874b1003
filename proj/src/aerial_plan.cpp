#include "aqs/aerial_plan.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include <nlohmann/json.hpp>

#include "aqs/rng.hpp"

namespace aqs {

namespace {

double noisy_value(double truth, const NoiseModel& noise, Rng& rng) {
    double v = truth * (1.0 + noise.sigma_rel * rng.gaussian());
    if (noise.p_fault > 0.0 && rng.uniform01() < noise.p_fault)
        v = rng.uniform(noise.fault_low, noise.fault_high);
    return std::max(v, 0.0);
}

void cell_coords(const GridSpec& grid, int cell, int& x, int& y, int& z) {
    x = cell % grid.nx;
    y = (cell / grid.nx) % grid.ny;
    z = cell / (grid.nx * grid.ny);
}

}  // namespace

std::vector<ScanSample> coarse_scan(const Field& field, const GridSpec& scan_grid, double time,
                                    const NoiseModel& noise, std::uint64_t seed) {
    scan_grid.validate();
    const GridSpec& truth = field.grid();
    Vec3 se = scan_grid.extent(), te = truth.extent();
    if (std::abs(se.x - te.x) > 1e-6 || std::abs(se.y - te.y) > 1e-6 ||
        std::abs(se.z - te.z) > 1e-6)
        throw ValidationError("scan grid: extent must match the truth grid");
    if (scan_grid.cell_size < truth.cell_size - 1e-12)
        throw ValidationError("scan grid: must be coarser than or equal to the truth grid");

    Rng rng(seed);
    std::vector<ScanSample> samples;
    samples.reserve(scan_grid.cells());
    for (int z = 0; z < scan_grid.nz; ++z) {
        for (int yy = 0; yy < scan_grid.ny; ++yy) {
            int y = z % 2 == 0 ? yy : scan_grid.ny - 1 - yy;
            for (int xx = 0; xx < scan_grid.nx; ++xx) {
                int x = (y + z) % 2 == 0 ? xx : scan_grid.nx - 1 - xx;
                ScanSample s;
                s.cell = static_cast<int>(scan_grid.cell_index(x, y, z));
                s.position = scan_grid.cell_center(x, y, z);
                s.time = time;
                s.value = noisy_value(field.sample_truth(s.position, time), noise, rng);
                samples.push_back(s);
            }
        }
    }
    return samples;
}

CoarseField fit_coarse(const std::vector<ScanSample>& samples, const GridSpec& scan_grid) {
    scan_grid.validate();
    if (samples.empty()) throw ValidationError("fit_coarse: need at least one sample");
    const int n_cells = static_cast<int>(scan_grid.cells());
    for (const ScanSample& s : samples)
        if (s.cell < 0 || s.cell >= n_cells)
            throw ValidationError("fit_coarse: sample cell outside the scan grid");

    CoarseField coarse;
    coarse.grid = scan_grid;
    coarse.provenance = samples;
    coarse.values.assign(static_cast<std::size_t>(n_cells), 0.0);

    std::map<int, std::pair<double, int>> sampled;  // cell -> (sum, count)
    for (const ScanSample& s : samples) {
        auto& acc = sampled[s.cell];
        acc.first += s.value;
        acc.second += 1;
    }

    for (int cell = 0; cell < n_cells; ++cell) {
        auto it = sampled.find(cell);
        if (it != sampled.end()) {
            coarse.values[static_cast<std::size_t>(cell)] =
                it->second.first / it->second.second;
            continue;
        }
        int x, y, z;
        cell_coords(scan_grid, cell, x, y, z);
        Vec3 center = scan_grid.cell_center(x, y, z);
        struct Near {
            double dist;
            std::size_t index;
        };
        std::vector<Near> order;
        order.reserve(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i)
            order.push_back({distance(samples[i].position, center), i});
        std::sort(order.begin(), order.end(), [](const Near& a, const Near& b) {
            if (a.dist != b.dist) return a.dist < b.dist;
            return a.index < b.index;
        });
        double wsum = 0.0, vsum = 0.0;
        bool exact = false;
        for (std::size_t i = 0; i < order.size() && i < 6; ++i) {
            const ScanSample& s = samples[order[i].index];
            if (order[i].dist < 1e-12) {
                coarse.values[static_cast<std::size_t>(cell)] = s.value;
                exact = true;
                break;
            }
            double w = 1.0 / (order[i].dist * order[i].dist);
            wsum += w;
            vsum += w * s.value;
        }
        if (!exact) coarse.values[static_cast<std::size_t>(cell)] = std::max(vsum / wsum, 0.0);
    }
    return coarse;
}

void PdtParams::validate() const {
    if (w_grad < 0.0 || w_ext < 0.0)
        throw ValidationError("pdt: importance weights must be >= 0");
    if (w_grad == 0.0 && w_ext == 0.0)
        throw ValidationError("pdt: at least one importance weight must be positive");
}

const char* to_string(PointKind kind) {
    switch (kind) {
        case PointKind::gradient: return "gradient";
        case PointKind::extremum: return "extremum";
        case PointKind::both: return "both";
    }
    return "?";
}

namespace {

// Axes taking derivatives: 3+ cells. Single-cell axes are skipped; a 2-cell
// axis cannot host a central difference and is rejected outright.
std::vector<int> derivative_axes(const GridSpec& grid, std::vector<int>& skipped) {
    const int n[3] = {grid.nx, grid.ny, grid.nz};
    std::vector<int> axes;
    for (int a = 0; a < 3; ++a) {
        if (n[a] == 1)
            skipped.push_back(a);
        else if (n[a] == 2)
            throw ValidationError("pdt: axis with 2 cells supports no central difference");
        else
            axes.push_back(a);
    }
    return axes;
}

double gradient_norm(const CoarseField& coarse, const std::vector<int>& axes, int x, int y,
                     int z) {
    const GridSpec& g = coarse.grid;
    const double h = g.cell_size;
    auto value = [&](int cx, int cy, int cz) {
        return coarse.values[g.cell_index(cx, cy, cz)];
    };
    int c[3] = {x, y, z};
    const int n[3] = {g.nx, g.ny, g.nz};
    double sq = 0.0;
    for (int a : axes) {
        int lo[3] = {x, y, z}, hi[3] = {x, y, z};
        double dv, dh;
        if (c[a] == 0) {
            hi[a] = 1;
            dv = value(hi[0], hi[1], hi[2]) - value(x, y, z);
            dh = h;
        } else if (c[a] == n[a] - 1) {
            lo[a] = c[a] - 1;
            dv = value(x, y, z) - value(lo[0], lo[1], lo[2]);
            dh = h;
        } else {
            lo[a] = c[a] - 1;
            hi[a] = c[a] + 1;
            dv = value(hi[0], hi[1], hi[2]) - value(lo[0], lo[1], lo[2]);
            dh = 2.0 * h;
        }
        sq += (dv / dh) * (dv / dh);
    }
    return std::sqrt(sq);
}

}  // namespace

double default_grad_threshold(const CoarseField& coarse) {
    coarse.grid.validate();
    std::vector<int> skipped;
    std::vector<int> axes = derivative_axes(coarse.grid, skipped);
    if (axes.empty()) return 0.0;
    std::vector<double> norms;
    norms.reserve(coarse.grid.cells());
    for (int z = 0; z < coarse.grid.nz; ++z)
        for (int y = 0; y < coarse.grid.ny; ++y)
            for (int x = 0; x < coarse.grid.nx; ++x)
                norms.push_back(gradient_norm(coarse, axes, x, y, z));
    std::sort(norms.begin(), norms.end());
    std::size_t rank = static_cast<std::size_t>(
        std::ceil(0.75 * static_cast<double>(norms.size())));
    return norms[rank == 0 ? 0 : rank - 1];
}

PdtResult compute_pdt(const CoarseField& coarse, const PdtParams& params) {
    coarse.grid.validate();
    params.validate();
    if (coarse.values.size() != coarse.grid.cells())
        throw ValidationError("pdt: value count does not match the grid");

    PdtResult result;
    std::vector<int> axes = derivative_axes(coarse.grid, result.skipped_axes);
    result.threshold =
        params.grad_threshold >= 0.0 ? params.grad_threshold : default_grad_threshold(coarse);

    const GridSpec& g = coarse.grid;
    const int n[3] = {g.nx, g.ny, g.nz};
    for (int z = 0; z < g.nz; ++z) {
        for (int y = 0; y < g.ny; ++y) {
            for (int x = 0; x < g.nx; ++x) {
                double score = 0.0;
                bool is_grad = false, is_ext = false;
                if (!axes.empty()) {
                    double gn = gradient_norm(coarse, axes, x, y, z);
                    if (gn > result.threshold) {
                        double s = params.w_grad * (gn - result.threshold);
                        if (s > 0.0) {
                            is_grad = true;
                            score += s;
                        }
                    }
                }
                if (params.include_extrema) {
                    double v = coarse.values[g.cell_index(x, y, z)];
                    int c[3] = {x, y, z};
                    double nb_sum = 0.0;
                    int nb_count = 0;
                    bool above_all = true, below_all = true;
                    for (int a = 0; a < 3; ++a) {
                        if (n[a] == 1) continue;
                        for (int dir = -1; dir <= 1; dir += 2) {
                            int q[3] = {x, y, z};
                            q[a] = c[a] + dir;
                            if (q[a] < 0 || q[a] >= n[a]) continue;
                            double nv = coarse.values[g.cell_index(q[0], q[1], q[2])];
                            nb_sum += nv;
                            ++nb_count;
                            if (v <= nv) above_all = false;
                            if (v >= nv) below_all = false;
                        }
                    }
                    if (nb_count > 0 && (above_all || below_all)) {
                        double s = params.w_ext * std::abs(v - nb_sum / nb_count);
                        if (s > 0.0) {
                            is_ext = true;
                            score += s;
                        }
                    }
                }
                if (score > 0.0) {
                    PointKind kind = is_grad && is_ext ? PointKind::both
                                     : is_grad        ? PointKind::gradient
                                                      : PointKind::extremum;
                    result.points.push_back(
                        {static_cast<int>(g.cell_index(x, y, z)), kind, score});
                }
            }
        }
    }
    std::sort(result.points.begin(), result.points.end(),
              [](const ImportancePoint& a, const ImportancePoint& b) {
                  if (a.importance != b.importance) return a.importance > b.importance;
                  return a.cell < b.cell;
              });
    return result;
}

void UavEnergyModel::validate() const {
    if (!(e_fly_J_per_m > 0.0)) throw ValidationError("uav.e_fly_J_per_m: must be > 0");
    if (!(e_hover_J_per_s > 0.0)) throw ValidationError("uav.e_hover_J_per_s: must be > 0");
    if (!(budget_J > 0.0)) throw ValidationError("uav.budget_J: must be > 0");
    if (!(speed_m_s > 0.0)) throw ValidationError("uav.speed_m_s: must be > 0");
}

FlightPlan plan_route(const std::vector<ImportancePoint>& points, const CoarseField& coarse,
                      const Vec3& start, const UavEnergyModel& energy, double hover_time_s) {
    energy.validate();
    coarse.grid.validate();
    if (!(hover_time_s > 0.0)) throw ValidationError("route.hover_time_s: must be > 0");
    const int n_cells = static_cast<int>(coarse.grid.cells());
    for (const ImportancePoint& p : points) {
        if (p.cell < 0 || p.cell >= n_cells)
            throw ValidationError("route: importance point outside the grid");
        if (!(p.importance > 0.0))
            throw ValidationError("route: importance must be > 0");
    }

    FlightPlan plan;
    plan.start = start;
    std::vector<bool> visited(points.size(), false);
    Vec3 cur = start;
    while (true) {
        int best = -1;
        double best_ratio = 0.0;
        double best_fly = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (visited[i]) continue;
            int x, y, z;
            cell_coords(coarse.grid, points[i].cell, x, y, z);
            Vec3 wp = coarse.grid.cell_center(x, y, z);
            double fly = energy.e_fly_J_per_m * distance(cur, wp);
            double hover = energy.e_hover_J_per_s * hover_time_s;
            // Admission must bound the exact total the ledger will report.
            double would_total = (plan.total_fly_J + fly) + (plan.total_hover_J + hover);
            if (would_total > energy.budget_J) continue;
            double ratio = points[i].importance / (fly + hover);
            if (best < 0 || ratio > best_ratio ||
                (ratio == best_ratio && points[i].cell < points[static_cast<std::size_t>(best)].cell)) {
                best = static_cast<int>(i);
                best_ratio = ratio;
                best_fly = fly;
            }
        }
        if (best < 0) break;
        const ImportancePoint& p = points[static_cast<std::size_t>(best)];
        int x, y, z;
        cell_coords(coarse.grid, p.cell, x, y, z);
        Vec3 wp = coarse.grid.cell_center(x, y, z);
        double hover = energy.e_hover_J_per_s * hover_time_s;
        plan.cells.push_back(p.cell);
        plan.waypoints.push_back(wp);
        plan.hover_s.push_back(hover_time_s);
        plan.ledger.push_back({p.cell, best_fly, hover});
        plan.total_fly_J += best_fly;
        plan.total_hover_J += hover;
        visited[static_cast<std::size_t>(best)] = true;
        cur = wp;
    }
    return plan;
}

FlightResult simulate_flight(const FlightPlan& plan, const Field& field,
                             const UavEnergyModel& energy, double tau_s, double start_time,
                             const NoiseModel& noise, std::uint64_t seed) {
    energy.validate();
    if (!(tau_s > 0.0)) throw ValidationError("flight.tau_s: must be > 0");
    if (plan.total_energy() > energy.budget_J)
        throw ValidationError("flight: plan energy exceeds the budget");
    if (plan.cells.size() != plan.waypoints.size() ||
        plan.cells.size() != plan.hover_s.size() || plan.cells.size() != plan.ledger.size())
        throw ValidationError("flight: malformed plan");

    const double duration = field.grid().duration();
    auto truth_at = [&](const Vec3& pos, double t) {
        if (t > duration) throw RuntimeFailure("flight: runs past the simulated time range");
        return field.sample_truth(pos, t);
    };

    Rng rng(seed);
    FlightResult result;
    double t = start_time;
    Vec3 cur = plan.start;
    double carry = truth_at(cur, t);
    for (std::size_t i = 0; i < plan.cells.size(); ++i) {
        const Vec3& wp = plan.waypoints[i];
        t += distance(cur, wp) / energy.speed_m_s;
        t += plan.hover_s[i];
        double truth = truth_at(wp, t);
        double alpha = 1.0 - std::exp(-plan.hover_s[i] / tau_s);
        double mixed = alpha * truth + (1.0 - alpha) * carry;
        FlightSample s;
        s.cell = plan.cells[i];
        s.position = wp;
        s.time = t;
        s.value = noisy_value(mixed, noise, rng);
        s.truth = truth;
        result.samples.push_back(s);
        carry = truth;
        cur = wp;
    }
    result.energy_used_J = plan.total_energy();
    result.end_time = t;
    return result;
}

std::string flight_plan_json(const FlightPlan& plan) {
    nlohmann::json j;
    j["start"] = {plan.start.x, plan.start.y, plan.start.z};
    nlohmann::json wps = nlohmann::json::array();
    for (std::size_t i = 0; i < plan.cells.size(); ++i) {
        wps.push_back({{"cell", plan.cells[i]},
                       {"x", plan.waypoints[i].x},
                       {"y", plan.waypoints[i].y},
                       {"z", plan.waypoints[i].z},
                       {"hover_s", plan.hover_s[i]},
                       {"fly_J", plan.ledger[i].fly_J},
                       {"hover_J", plan.ledger[i].hover_J}});
    }
    j["waypoints"] = std::move(wps);
    j["total_fly_J"] = plan.total_fly_J;
    j["total_hover_J"] = plan.total_hover_J;
    j["total_energy_J"] = plan.total_energy();
    return j.dump(2);
}

void write_importance_csv(const PdtResult& pdt, const GridSpec& grid, std::ostream& out) {
    out << "x,y,z,kind,score\n";
    for (const ImportancePoint& p : pdt.points) {
        int x, y, z;
        cell_coords(grid, p.cell, x, y, z);
        Vec3 c = grid.cell_center(x, y, z);
        out << fmt_double(c.x) << ',' << fmt_double(c.y) << ',' << fmt_double(c.z) << ','
            << to_string(p.kind) << ',' << fmt_double(p.importance) << '\n';
    }
}

}  // namespace aqs

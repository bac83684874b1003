#include "aqs/ground_deploy.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "aqs/rng.hpp"

namespace aqs {

void CandidateSet::validate() const {
    if (locations.size() < 2) throw ValidationError("candidates: need at least two locations");
    if (bin_edges.size() < 3) throw ValidationError("candidates.bin_edges: need at least two bins");
    for (std::size_t i = 1; i < bin_edges.size(); ++i)
        if (bin_edges[i] <= bin_edges[i - 1])
            throw ValidationError("candidates.bin_edges: must be strictly increasing");
    std::set<int> ids;
    const std::size_t series_len = locations[0].series.size();
    for (std::size_t i = 0; i < locations.size(); ++i) {
        const CandidateLocation& loc = locations[i];
        if (!ids.insert(loc.id).second)
            throw ValidationError("candidates[" + std::to_string(i) + "].id: duplicate id " +
                                  std::to_string(loc.id));
        if (loc.series.size() != series_len || series_len < 2)
            throw ValidationError("candidates[" + std::to_string(i) +
                                  "].series: all series need the same length >= 2");
        if (loc.histogram.size() + 1 != bin_edges.size())
            throw ValidationError("candidates[" + std::to_string(i) +
                                  "].histogram: bin count mismatch");
        double sum = 0.0;
        for (double v : loc.histogram) {
            if (v < 0.0)
                throw ValidationError("candidates[" + std::to_string(i) +
                                      "].histogram: negative mass");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw ValidationError("candidates[" + std::to_string(i) +
                                  "].histogram: must sum to 1");
    }
}

int CandidateSet::index_of(int id) const {
    for (std::size_t i = 0; i < locations.size(); ++i)
        if (locations[i].id == id) return static_cast<int>(i);
    return -1;
}

CandidateSet build_candidate_set(const std::vector<int>& ids, const std::vector<Vec3>& positions,
                                 const std::vector<std::vector<double>>& series, int bins) {
    if (bins < 2) throw ValidationError("candidates: bins must be >= 2");
    if (ids.size() != positions.size() || ids.size() != series.size())
        throw ValidationError("candidates: ids, positions and series must align");
    if (ids.empty()) throw ValidationError("candidates: empty survey");

    double lo = series[0].empty() ? 0.0 : series[0][0];
    double hi = lo;
    for (const auto& s : series)
        for (double v : s) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (hi - lo < 1e-12) {  // flat survey still needs a usable range
        lo -= 0.5;
        hi += 0.5;
    }

    CandidateSet set;
    set.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int b = 0; b <= bins; ++b)
        set.bin_edges[static_cast<std::size_t>(b)] = lo + (hi - lo) * b / bins;

    for (std::size_t i = 0; i < ids.size(); ++i) {
        CandidateLocation loc;
        loc.id = ids[i];
        loc.position = positions[i];
        loc.series = series[i];
        loc.histogram.assign(static_cast<std::size_t>(bins), 0.0);
        for (double v : loc.series) {
            int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
            b = std::clamp(b, 0, bins - 1);  // top edge lands in the last bin
            loc.histogram[static_cast<std::size_t>(b)] += 1.0;
        }
        for (double& h : loc.histogram) h /= static_cast<double>(loc.series.size());
        set.locations.push_back(std::move(loc));
    }
    set.validate();
    return set;
}

CandidateSet read_survey_csv(std::istream& in, int bins) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("location_id,x,y,z,value", 0) != 0)
        throw ValidationError("survey csv: expected header location_id,x,y,z,value");
    std::map<int, std::pair<Vec3, std::vector<double>>> rows;
    std::vector<int> order;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tok;
        double f[5];
        for (int i = 0; i < 5; ++i) {
            if (!std::getline(ss, tok, ','))
                throw ValidationError("survey csv line " + std::to_string(line_no) +
                                      ": expected 5 fields");
            try {
                f[i] = std::stod(tok);
            } catch (const std::exception&) {
                throw ValidationError("survey csv line " + std::to_string(line_no) +
                                      ": bad number '" + tok + "'");
            }
        }
        int id = static_cast<int>(f[0]);
        Vec3 pos{f[1], f[2], f[3]};
        auto it = rows.find(id);
        if (it == rows.end()) {
            rows[id] = {pos, {f[4]}};
            order.push_back(id);
        } else {
            if (distance(it->second.first, pos) > 1e-9)
                throw ValidationError("survey csv line " + std::to_string(line_no) +
                                      ": position changed for id " + std::to_string(id));
            it->second.second.push_back(f[4]);
        }
    }
    std::vector<int> ids;
    std::vector<Vec3> positions;
    std::vector<std::vector<double>> series;
    for (int id : order) {
        ids.push_back(id);
        positions.push_back(rows[id].first);
        series.push_back(std::move(rows[id].second));
    }
    return build_candidate_set(ids, positions, series, bins);
}

AffinityParams resolve_affinity(const CandidateSet& candidates, AffinityParams params) {
    if (params.sigma_d == 0.0) {
        std::vector<double> dists;
        const auto& locs = candidates.locations;
        for (std::size_t i = 0; i < locs.size(); ++i)
            for (std::size_t j = i + 1; j < locs.size(); ++j)
                dists.push_back(distance(locs[i].position, locs[j].position));
        std::sort(dists.begin(), dists.end());
        double median = dists.size() % 2 == 1
                            ? dists[dists.size() / 2]
                            : 0.5 * (dists[dists.size() / 2 - 1] + dists[dists.size() / 2]);
        params.sigma_d = median > 0.0 ? median : 1.0;
    }
    return params;
}

Matrix affinity_matrix(const CandidateSet& candidates, const AffinityParams& params) {
    candidates.validate();
    if (!(params.sigma_d > 0.0)) throw ValidationError("affinity.sigma_d: must be > 0");
    if (!(params.sigma_p > 0.0)) throw ValidationError("affinity.sigma_p: must be > 0");
    const auto& locs = candidates.locations;
    const std::size_t n = locs.size();
    Matrix w(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double d = distance(locs[i].position, locs[j].position);
            double r = pearson(locs[i].series, locs[j].series);
            double rho = std::isfinite(r) ? 1.0 - r : 1.0;  // flat series: no pattern signal
            double a = std::exp(-d * d / (2.0 * params.sigma_d * params.sigma_d)) *
                       std::exp(-rho * rho / (2.0 * params.sigma_p * params.sigma_p));
            w(i, j) = a;
            w(j, i) = a;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += w(i, j);
        if (sum <= 0.0) {  // fully isolated row: fall back to uniform neighbors
            for (std::size_t j = 0; j < n; ++j) w(i, j) = i == j ? 0.0 : 1.0 / (n - 1);
        } else {
            for (std::size_t j = 0; j < n; ++j) w(i, j) /= sum;
        }
    }
    return w;
}

PropagationResult propagate(const CandidateSet& candidates, const Matrix& w,
                            const std::vector<int>& selected_ids) {
    if (selected_ids.empty()) throw ValidationError("propagation: selected set must be non-empty");
    std::set<int> sel;
    for (int id : selected_ids) {
        if (candidates.index_of(id) < 0)
            throw ValidationError("propagation: unknown location id " + std::to_string(id));
        if (!sel.insert(id).second)
            throw ValidationError("propagation: duplicate selected id " + std::to_string(id));
    }

    PropagationResult result;
    std::vector<int> m_idx, u_idx;
    for (std::size_t i = 0; i < candidates.locations.size(); ++i) {
        int id = candidates.locations[i].id;
        (sel.count(id) ? m_idx : u_idx).push_back(static_cast<int>(i));
    }
    // Rows and columns are keyed by ascending id, not survey storage order.
    auto by_id = [&](int a, int b) {
        return candidates.locations[static_cast<std::size_t>(a)].id <
               candidates.locations[static_cast<std::size_t>(b)].id;
    };
    std::sort(m_idx.begin(), m_idx.end(), by_id);
    std::sort(u_idx.begin(), u_idx.end(), by_id);
    for (int i : m_idx)
        result.measured_ids.push_back(candidates.locations[static_cast<std::size_t>(i)].id);
    for (int i : u_idx)
        result.unmeasured_ids.push_back(candidates.locations[static_cast<std::size_t>(i)].id);
    const std::size_t nu = u_idx.size(), nm = m_idx.size();
    result.weights = Matrix(nu, nm);
    if (nu == 0) return result;

    Matrix wuu(nu, nu), wum(nu, nm);
    for (std::size_t i = 0; i < nu; ++i) {
        for (std::size_t j = 0; j < nu; ++j)
            wuu(i, j) = w(static_cast<std::size_t>(u_idx[i]), static_cast<std::size_t>(u_idx[j]));
        for (std::size_t j = 0; j < nm; ++j)
            wum(i, j) = w(static_cast<std::size_t>(u_idx[i]), static_cast<std::size_t>(m_idx[j]));
    }
    for (std::size_t i = 0; i < nu; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < nu; ++j) row += wuu(i, j);
        for (std::size_t j = 0; j < nm; ++j) row += wum(i, j);
        if (std::abs(row - 1.0) > 1e-9)
            throw RuntimeFailure("propagation: affinity row drifted from stochastic");
    }

    Matrix b = wum;
    Matrix next(nu, nm);
    double residual = 0.0;
    int iter = 0;
    for (; iter < 500; ++iter) {
        for (std::size_t i = 0; i < nu; ++i)
            for (std::size_t j = 0; j < nm; ++j) {
                double acc = wum(i, j);
                for (std::size_t k = 0; k < nu; ++k) acc += wuu(i, k) * b(k, j);
                next(i, j) = acc;
            }
        residual = 0.0;
        for (std::size_t i = 0; i < b.a.size(); ++i)
            residual = std::max(residual, std::abs(next.a[i] - b.a[i]));
        std::swap(b, next);
        if (residual < 1e-6) {
            ++iter;
            break;
        }
    }
    // The stopped iterate is a truncated series whose rows fall short of 1 by
    // the unabsorbed mass. The limit is row-stochastic (absorption
    // probabilities), so renormalizing restores the invariant the entropy
    // stage checks; the raw residual still reports iteration quality.
    for (std::size_t i = 0; i < nu; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < nm; ++j) sum += b(i, j);
        if (sum < 1e-6)
            throw RuntimeFailure(
                "propagation: an unmeasured location has no path to any measured one");
        for (std::size_t j = 0; j < nm; ++j) b(i, j) /= sum;
    }
    result.weights = std::move(b);
    result.iterations = iter;
    result.residual = residual;
    result.converged = residual < 1e-6;
    return result;
}

PropagationResult learn_weights(const CandidateSet& candidates, const AffinityParams& params,
                                const std::vector<int>& selected_ids) {
    return propagate(candidates, affinity_matrix(candidates, params), selected_ids);
}

double mean_entropy(const CandidateSet& candidates, const PropagationResult& weights,
                    const std::vector<int>& selected_ids) {
    std::vector<int> sorted = selected_ids;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != weights.measured_ids)
        throw RuntimeFailure("mean_entropy: weights were learned for a different selected set");
    if (weights.unmeasured_ids.empty()) return 0.0;

    const std::size_t bins = candidates.bin_edges.size() - 1;
    double total = 0.0;
    std::vector<double> q(bins);
    for (std::size_t i = 0; i < weights.unmeasured_ids.size(); ++i) {
        std::fill(q.begin(), q.end(), 0.0);
        for (std::size_t j = 0; j < weights.measured_ids.size(); ++j) {
            int idx = candidates.index_of(weights.measured_ids[j]);
            const std::vector<double>& hist = candidates.locations[static_cast<std::size_t>(idx)]
                                                  .histogram;
            for (std::size_t b = 0; b < bins; ++b) q[b] += weights.weights(i, j) * hist[b];
        }
        double sum = 0.0;
        for (double v : q) sum += v;
        if (std::abs(sum - 1.0) > 1e-6)
            throw RuntimeFailure("mean_entropy: mixture failed to normalize (corrupt weights)");
        double h = 0.0;
        for (double v : q)
            if (v > 0.0) h -= v * std::log(v);
        total += h;
    }
    return total / static_cast<double>(weights.unmeasured_ids.size());
}

namespace {

struct SwapScore {
    double entropy;
    int in_id;
    int out_id;
};

}  // namespace

DeploymentPlan greedy_swap(const CandidateSet& candidates, int n,
                           const std::vector<int>* initial, const AffinityParams& params,
                           std::uint64_t seed) {
    candidates.validate();
    const int total = static_cast<int>(candidates.locations.size());
    if (n < 1 || n >= total)
        throw ValidationError("deploy.n: must satisfy 1 <= n < candidate count");
    AffinityParams resolved = resolve_affinity(candidates, params);
    Matrix w = affinity_matrix(candidates, resolved);

    std::vector<int> all_ids;
    for (const CandidateLocation& loc : candidates.locations) all_ids.push_back(loc.id);
    std::sort(all_ids.begin(), all_ids.end());

    std::vector<int> selected;
    if (initial) {
        selected = *initial;
        std::set<int> uniq(selected.begin(), selected.end());
        if (static_cast<int>(selected.size()) != n || static_cast<int>(uniq.size()) != n)
            throw ValidationError("deploy.initial: must hold n distinct location ids");
        for (int id : selected)
            if (candidates.index_of(id) < 0)
                throw ValidationError("deploy.initial: unknown location id " + std::to_string(id));
    } else {
        std::vector<int> pool = all_ids;
        Rng rng(seed);
        for (int i = 0; i < n; ++i) {
            std::size_t j = static_cast<std::size_t>(i) +
                            static_cast<std::size_t>(rng.below(pool.size() - i));
            std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
        }
        selected.assign(pool.begin(), pool.begin() + n);
    }
    std::sort(selected.begin(), selected.end());

    auto score_of = [&](const std::vector<int>& sel, PropagationResult* out) {
        PropagationResult prop = propagate(candidates, w, sel);
        double e = mean_entropy(candidates, prop, sel);
        if (out) *out = std::move(prop);
        return e;
    };

    DeploymentPlan plan;
    PropagationResult current_weights;
    double current = score_of(selected, &current_weights);
    while (true) {
        bool found = false;
        SwapScore best{current, 0, 0};
        std::vector<int> unselected;
        for (int id : all_ids)
            if (std::find(selected.begin(), selected.end(), id) == selected.end())
                unselected.push_back(id);
        for (int out : selected) {
            for (int in : unselected) {
                std::vector<int> trial = selected;
                *std::find(trial.begin(), trial.end(), out) = in;
                std::sort(trial.begin(), trial.end());
                double e = score_of(trial, nullptr);
                if (e >= current) continue;  // strict descent only
                bool better = !found || e < best.entropy ||
                              (e == best.entropy &&
                               (in < best.in_id || (in == best.in_id && out < best.out_id)));
                if (better) {
                    best = {e, in, out};
                    found = true;
                }
            }
        }
        if (!found) break;
        plan.swaps.push_back({best.in_id, best.out_id, current, best.entropy});
        *std::find(selected.begin(), selected.end(), best.out_id) = best.in_id;
        std::sort(selected.begin(), selected.end());
        current = score_of(selected, &current_weights);
    }
    plan.selected = selected;
    plan.mean_entropy = current;
    plan.weights_converged = current_weights.converged || current_weights.unmeasured_ids.empty();
    plan.final_residual = current_weights.residual;
    return plan;
}

std::string plan_json(const DeploymentPlan& plan, const AffinityParams& params, int n) {
    nlohmann::json j;
    j["n"] = n;
    j["selected"] = plan.selected;
    j["mean_entropy"] = plan.mean_entropy;
    j["sigma_d"] = params.sigma_d;
    j["sigma_p"] = params.sigma_p;
    j["weights_converged"] = plan.weights_converged;
    j["final_residual"] = plan.final_residual;
    nlohmann::json swaps = nlohmann::json::array();
    for (const SwapEvent& s : plan.swaps)
        swaps.push_back({{"in", s.in_id},
                         {"out", s.out_id},
                         {"entropy_before", s.before},
                         {"entropy_after", s.after}});
    j["swaps"] = std::move(swaps);
    return j.dump(2);
}

}  // namespace aqs

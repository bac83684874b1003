#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "aqs/common.hpp"
#include "aqs/linalg.hpp"

namespace aqs {

struct CandidateLocation {
    int id = 0;
    Vec3 position;
    std::vector<double> series;     // survey samples, time order
    std::vector<double> histogram;  // shared bin edges, sums to 1
};

struct CandidateSet {
    std::vector<double> bin_edges;  // size bins+1, strictly increasing
    std::vector<CandidateLocation> locations;

    void validate() const;
    int index_of(int id) const;  // -1 when absent
};

// Equal-width histograms over the global survey value range.
CandidateSet build_candidate_set(const std::vector<int>& ids, const std::vector<Vec3>& positions,
                                 const std::vector<std::vector<double>>& series, int bins = 16);

// Long-format survey rows: location_id,x,y,z,value (one row per sample).
CandidateSet read_survey_csv(std::istream& in, int bins = 16);

struct AffinityParams {
    double sigma_d = 0.0;  // metres; 0 resolves to the median pairwise distance
    double sigma_p = 0.5;  // pattern scale on 1 - correlation
};

// Resolves sigma_d = 0 to the median pairwise distance of the set.
AffinityParams resolve_affinity(const CandidateSet& candidates, AffinityParams params);

// Row-stochastic affinity matrix: a_ij = exp(-d^2/2s_d^2) * exp(-rho^2/2s_p^2),
// rho = 1 - Pearson(series_i, series_j), zero diagonal.
Matrix affinity_matrix(const CandidateSet& candidates, const AffinityParams& params);

struct PropagationResult {
    std::vector<int> unmeasured_ids;  // row order, ascending
    std::vector<int> measured_ids;    // column order, ascending
    Matrix weights;                   // absorption weight of each unmeasured over measured
    bool converged = true;
    double residual = 0.0;
    int iterations = 0;
};

// Label propagation with measured rows clamped: B <- W_um + W_uu * B until the
// largest entry change drops below 1e-6 or 500 iterations pass (flagged, not
// thrown). Rows of W are re-checked for stochasticity every iteration.
PropagationResult propagate(const CandidateSet& candidates, const Matrix& w,
                            const std::vector<int>& selected_ids);

PropagationResult learn_weights(const CandidateSet& candidates, const AffinityParams& params,
                                const std::vector<int>& selected_ids);

// Mean Shannon entropy (nats) of the mixture distributions of unmeasured
// locations; an empty unmeasured set scores 0 by convention.
double mean_entropy(const CandidateSet& candidates, const PropagationResult& weights,
                    const std::vector<int>& selected_ids);

struct SwapEvent {
    int in_id = 0;
    int out_id = 0;
    double before = 0.0;
    double after = 0.0;
};

struct DeploymentPlan {
    std::vector<int> selected;  // ascending
    double mean_entropy = 0.0;
    std::vector<SwapEvent> swaps;
    bool weights_converged = true;
    double final_residual = 0.0;
};

// Steepest-descent single swaps from the initial set (or a seeded uniform
// draw); stops when no swap strictly lowers mean entropy. Ties on the score
// break toward the lowest swapped-in id, then the lowest swapped-out id.
DeploymentPlan greedy_swap(const CandidateSet& candidates, int n,
                           const std::vector<int>* initial, const AffinityParams& params,
                           std::uint64_t seed = 1);

std::string plan_json(const DeploymentPlan& plan, const AffinityParams& params, int n);

}  // namespace aqs

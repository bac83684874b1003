#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "aqs/ground_deploy.hpp"
#include "aqs/linalg.hpp"

using namespace aqs;

namespace {

// Two spatial clusters (x = 0..2 and 6..8) with contrasting temporal patterns:
// 0 and 1 rise together, 2 falls, 3 and 4 oscillate in antiphase, 5 is nearly
// flat. Median pairwise distance is 5, so sigma_d resolves to 5.
CandidateSet six_locations() {
    std::vector<int> ids{0, 1, 2, 3, 4, 5};
    std::vector<Vec3> pos{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {6, 0, 0}, {7, 0, 0}, {8, 0, 0}};
    std::vector<std::vector<double>> series{
        {10, 12, 14, 16, 18, 20, 22, 24},
        {11, 13, 15, 17, 19, 21, 23, 25},
        {24, 22, 20, 18, 16, 14, 12, 10},
        {10, 20, 10, 20, 10, 20, 10, 20},
        {20, 10, 20, 10, 20, 10, 20, 10},
        {15, 15, 16, 14, 15, 16, 14, 15},
    };
    return build_candidate_set(ids, pos, series, 4);
}

double entropy_of(const CandidateSet& set, const AffinityParams& p, std::vector<int> sel) {
    return mean_entropy(set, learn_weights(set, p, sel), sel);
}

}  // namespace

TEST_CASE("histograms bin each series over the global survey range") {
    std::vector<int> ids{10, 20};
    std::vector<Vec3> pos{{0, 0, 0}, {1, 0, 0}};
    std::vector<std::vector<double>> series{{0, 1, 3, 4}, {2, 2, 4, 0}};
    CandidateSet set = build_candidate_set(ids, pos, series, 4);

    REQUIRE(set.bin_edges.size() == 5);
    for (int b = 0; b <= 4; ++b) CHECK(set.bin_edges[static_cast<std::size_t>(b)] == double(b));
    // The top edge value 4 lands in the last bin, not one past it.
    CHECK(set.locations[0].histogram == std::vector<double>{0.25, 0.25, 0.0, 0.5});
    CHECK(set.locations[1].histogram == std::vector<double>{0.25, 0.0, 0.5, 0.25});
    CHECK(set.index_of(20) == 1);
    CHECK(set.index_of(99) == -1);
}

TEST_CASE("a flat survey widens its range by half a unit each way") {
    std::vector<int> ids{0, 1};
    std::vector<Vec3> pos{{0, 0, 0}, {3, 0, 0}};
    std::vector<std::vector<double>> series{{7, 7, 7}, {7, 7, 7}};
    CandidateSet set = build_candidate_set(ids, pos, series, 2);
    CHECK(set.bin_edges == std::vector<double>{6.5, 7.0, 7.5});
    CHECK(set.locations[0].histogram == std::vector<double>{0.0, 1.0});
}

TEST_CASE("candidate construction rejects malformed surveys") {
    std::vector<Vec3> two_pos{{0, 0, 0}, {1, 0, 0}};
    std::vector<std::vector<double>> two_series{{1, 2}, {3, 4}};
    CHECK_THROWS_WITH_AS(build_candidate_set({0, 1}, two_pos, two_series, 1),
                         "candidates: bins must be >= 2", ValidationError);
    CHECK_THROWS_WITH_AS(build_candidate_set({0}, two_pos, two_series, 4),
                         "candidates: ids, positions and series must align", ValidationError);
    CHECK_THROWS_WITH_AS(build_candidate_set({}, {}, {}, 4), "candidates: empty survey",
                         ValidationError);
    CHECK_THROWS_WITH_AS(build_candidate_set({7, 7}, two_pos, two_series, 4),
                         "candidates[1].id: duplicate id 7", ValidationError);
    CHECK_THROWS_WITH_AS(
        build_candidate_set({0, 1}, two_pos, {{1, 2}, {3, 4, 5}}, 4),
        "candidates[1].series: all series need the same length >= 2", ValidationError);
    CHECK_THROWS_WITH_AS(build_candidate_set({0}, {{0, 0, 0}}, {{1, 2}}, 4),
                         "candidates: need at least two locations", ValidationError);
}

TEST_CASE("survey csv reads long format and keeps first-seen order") {
    std::istringstream in(
        "location_id,x,y,z,value\n"
        "3,0,0,0,10\n"
        "1,5,0,0,20\n"
        "\n"
        "3,0,0,0,12\n"
        "1,5,0,0,22\n"
        "3,0,0,0,14\n"
        "1,5,0,0,24\n");
    CandidateSet set = read_survey_csv(in, 2);
    REQUIRE(set.locations.size() == 2);
    CHECK(set.locations[0].id == 3);
    CHECK(set.locations[1].id == 1);
    CHECK(set.locations[0].series == std::vector<double>{10, 12, 14});
    CHECK(set.locations[1].series == std::vector<double>{20, 22, 24});
    CHECK(set.locations[1].position.x == 5.0);
}

TEST_CASE("survey csv errors carry line numbers") {
    {
        std::istringstream in("id,x,y,z,value\n");
        CHECK_THROWS_WITH_AS(read_survey_csv(in),
                             "survey csv: expected header location_id,x,y,z,value",
                             ValidationError);
    }
    {
        std::istringstream in("location_id,x,y,z,value\n0,0,0,0,1\n1,1,0,0\n");
        CHECK_THROWS_WITH_AS(read_survey_csv(in), "survey csv line 3: expected 5 fields",
                             ValidationError);
    }
    {
        std::istringstream in("location_id,x,y,z,value\n0,0,0,oops,1\n");
        CHECK_THROWS_WITH_AS(read_survey_csv(in), "survey csv line 2: bad number 'oops'",
                             ValidationError);
    }
    {
        std::istringstream in(
            "location_id,x,y,z,value\n"
            "0,0,0,0,1\n"
            "1,4,0,0,2\n"
            "0,0.5,0,0,3\n");
        CHECK_THROWS_WITH_AS(read_survey_csv(in),
                             "survey csv line 4: position changed for id 0", ValidationError);
    }
}

TEST_CASE("sigma_d resolves to the median pairwise distance") {
    auto set_at = [](std::vector<double> xs) {
        std::vector<int> ids;
        std::vector<Vec3> pos;
        std::vector<std::vector<double>> series;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            ids.push_back(static_cast<int>(i));
            pos.push_back({xs[i], 0, 0});
            series.push_back({double(i), double(i) + 1});
        }
        return build_candidate_set(ids, pos, series, 2);
    };
    // Odd pair count: {0,1,3} gives distances {1,2,3}, median 2.
    CHECK(resolve_affinity(set_at({0, 1, 3}), {}).sigma_d == 2.0);
    // Even pair count: {0,1,3,7} gives {1,2,3,4,6,7}, median (3+4)/2.
    CHECK(resolve_affinity(set_at({0, 1, 3, 7}), {}).sigma_d == 3.5);
    // Coincident points degrade the median to 0; fall back to 1.
    CHECK(resolve_affinity(set_at({2, 2, 2}), {}).sigma_d == 1.0);
    // An explicit sigma_d passes through untouched.
    CHECK(resolve_affinity(set_at({0, 1, 3}), {9.0, 0.25}).sigma_d == 9.0);
    CHECK(resolve_affinity(set_at({0, 1, 3}), {9.0, 0.25}).sigma_p == 0.25);
}

TEST_CASE("affinity rows are stochastic and match the product kernel") {
    CandidateSet set = six_locations();
    AffinityParams p{5.0, 0.5};
    Matrix w = affinity_matrix(set, p);

    std::size_t n = set.locations.size();
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(w(i, i) == 0.0);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            CHECK(w(i, j) >= 0.0);
            sum += w(i, j);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }

    // Recompute row 0 by hand from the kernel definition.
    std::vector<double> kernel(n, 0.0);
    double total = 0.0;
    for (std::size_t j = 1; j < n; ++j) {
        double d = set.locations[j].position.x - set.locations[0].position.x;
        double rho = 1.0 - pearson(set.locations[0].series, set.locations[j].series);
        kernel[j] = std::exp(-d * d / (2.0 * 5.0 * 5.0)) * std::exp(-rho * rho / (2.0 * 0.5 * 0.5));
        total += kernel[j];
    }
    for (std::size_t j = 1; j < n; ++j)
        CHECK(w(0, j) == doctest::Approx(kernel[j] / total).epsilon(1e-12));

    // Locations 0 and 1 rise together (rho 0); 2 falls against 0 (rho 2). At
    // equal distance the pattern factor alone separates them by exp(-8).
    double r01 = 1.0 - pearson(set.locations[0].series, set.locations[1].series);
    double r02 = 1.0 - pearson(set.locations[0].series, set.locations[2].series);
    CHECK(r01 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r02 == doctest::Approx(2.0).epsilon(1e-12));

    CHECK_THROWS_WITH_AS(affinity_matrix(set, {0.0, 0.5}), "affinity.sigma_d: must be > 0",
                         ValidationError);
    CHECK_THROWS_WITH_AS(affinity_matrix(set, {5.0, -1.0}), "affinity.sigma_p: must be > 0",
                         ValidationError);
}

TEST_CASE("a flat series carries no pattern signal") {
    // Pearson is undefined against a constant series; the kernel treats that
    // as rho = 1 rather than propagating NaN.
    std::vector<int> ids{0, 1, 2};
    std::vector<Vec3> pos{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    std::vector<std::vector<double>> series{{5, 5, 5, 5}, {1, 2, 3, 4}, {2, 4, 6, 8}};
    CandidateSet set = build_candidate_set(ids, pos, series, 2);
    Matrix w = affinity_matrix(set, {1.0, 0.5});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(std::isfinite(w(i, j)));
    // Row 1: same distance to both neighbors, rho(1,0) = 1 vs rho(1,2) = 0,
    // so the correlated neighbor wins by exactly exp(-1/(2*0.25)).
    CHECK(w(1, 0) / w(1, 2) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
}

TEST_CASE("two symmetric neighbors split the weight evenly") {
    std::vector<int> ids{0, 1, 2};
    std::vector<Vec3> pos{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    std::vector<std::vector<double>> series{{1, 2, 3}, {1, 2, 3}, {1, 2, 3}};
    CandidateSet set = build_candidate_set(ids, pos, series, 2);
    PropagationResult r = learn_weights(set, {1.0, 0.5}, {0, 2});
    REQUIRE(r.unmeasured_ids == std::vector<int>{1});
    REQUIRE(r.measured_ids == std::vector<int>{0, 2});
    CHECK(r.weights(0, 0) == 0.5);
    CHECK(r.weights(0, 1) == 0.5);
    CHECK(r.converged);
    CHECK(r.iterations == 1);
    CHECK(r.residual == 0.0);
}

TEST_CASE("propagation agrees with the direct linear solve") {
    CandidateSet set = six_locations();
    AffinityParams p = resolve_affinity(set, {});
    REQUIRE(p.sigma_d == 5.0);
    Matrix w = affinity_matrix(set, p);

    std::vector<int> measured{0, 2, 4}, unmeasured{1, 3, 5};
    PropagationResult r = propagate(set, w, measured);
    REQUIRE(r.measured_ids == measured);
    REQUIRE(r.unmeasured_ids == unmeasured);
    CHECK(r.converged);
    CHECK(r.residual < 1e-6);
    CHECK(r.iterations > 1);

    // The fixed point solves (I - Wuu) B = Wum exactly.
    Matrix lhs(3, 3), wum(3, 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            lhs(i, j) = (i == j ? 1.0 : 0.0) -
                        w(static_cast<std::size_t>(unmeasured[i]),
                          static_cast<std::size_t>(unmeasured[j]));
            wum(i, j) = w(static_cast<std::size_t>(unmeasured[i]),
                          static_cast<std::size_t>(measured[j]));
        }
    Matrix exact = solve_linear_multi(lhs, wum);
    for (std::size_t i = 0; i < 3; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(std::abs(r.weights(i, j) - exact(i, j)) < 1e-6);
            row += r.weights(i, j);
        }
        // Truncation shortfall is renormalized away.
        CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("weights come back keyed by ascending id whatever the storage order") {
    std::istringstream in(
        "location_id,x,y,z,value\n"
        "3,0,0,0,10\n"
        "1,5,0,0,20\n"
        "2,9,0,0,31\n"
        "3,0,0,0,12\n"
        "1,5,0,0,22\n"
        "2,9,0,0,30\n");
    CandidateSet set = read_survey_csv(in, 4);
    REQUIRE(set.locations[0].id == 3);  // storage keeps survey order
    AffinityParams p = resolve_affinity(set, {});
    PropagationResult r = learn_weights(set, p, {3, 1});
    CHECK(r.measured_ids == std::vector<int>{1, 3});
    CHECK(r.unmeasured_ids == std::vector<int>{2});
    CHECK_NOTHROW(mean_entropy(set, r, {3, 1}));
}

TEST_CASE("mean entropy is the entropy of the mixed histograms") {
    CandidateSet set;
    set.bin_edges = {0.0, 1.0, 2.0};
    for (int id : {1, 5, 7}) {
        CandidateLocation loc;
        loc.id = id;
        loc.position = {double(id), 0, 0};
        loc.series = {0.5, 1.5};
        loc.histogram = id == 1 ? std::vector<double>{1.0, 0.0}
                                : std::vector<double>{0.2, 0.8};
        set.locations.push_back(loc);
    }
    set.validate();

    PropagationResult synth;
    synth.unmeasured_ids = {7};
    synth.measured_ids = {1, 5};
    synth.weights = Matrix(1, 2);
    synth.weights(0, 0) = 0.25;
    synth.weights(0, 1) = 0.75;

    // q = 0.25*{1,0} + 0.75*{0.2,0.8} = {0.4, 0.6}.
    double expected = -(0.4 * std::log(0.4) + 0.6 * std::log(0.6));
    CHECK(mean_entropy(set, synth, {5, 1}) == doctest::Approx(expected).epsilon(1e-12));

    // A zero mixture bin contributes nothing instead of NaN.
    set.locations[1].histogram = {1.0, 0.0};
    CHECK(mean_entropy(set, synth, {1, 5}) == 0.0);

    // Weights learned for a different selection are refused.
    CHECK_THROWS_WITH_AS(mean_entropy(set, synth, {1, 7}),
                         "mean_entropy: weights were learned for a different selected set",
                         RuntimeFailure);

    // Rows that fail to mix to unit mass flag corruption.
    set.locations[1].histogram = {0.2, 0.8};
    synth.weights(0, 1) = 0.6;
    CHECK_THROWS_WITH_AS(mean_entropy(set, synth, {1, 5}),
                         "mean_entropy: mixture failed to normalize (corrupt weights)",
                         RuntimeFailure);
}

TEST_CASE("measuring everything scores zero entropy") {
    CandidateSet set = six_locations();
    AffinityParams p = resolve_affinity(set, {});
    std::vector<int> all{0, 1, 2, 3, 4, 5};
    PropagationResult r = learn_weights(set, p, all);
    CHECK(r.unmeasured_ids.empty());
    CHECK(mean_entropy(set, r, all) == 0.0);
}

TEST_CASE("propagation validates its inputs") {
    CandidateSet set = six_locations();
    Matrix w = affinity_matrix(set, {5.0, 0.5});
    CHECK_THROWS_WITH_AS(propagate(set, w, {}), "propagation: selected set must be non-empty",
                         ValidationError);
    CHECK_THROWS_WITH_AS(propagate(set, w, {0, 9}), "propagation: unknown location id 9",
                         ValidationError);
    CHECK_THROWS_WITH_AS(propagate(set, w, {0, 0}), "propagation: duplicate selected id 0",
                         ValidationError);

    // A hand-built matrix whose unmeasured rows leak mass is caught up front.
    Matrix bad(6, 6);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) bad(i, j) = i == j ? 0.0 : 0.1;
    CHECK_THROWS_WITH_AS(propagate(set, bad, {0, 1, 2}),
                         "propagation: affinity row drifted from stochastic", RuntimeFailure);
}

TEST_CASE("weak coupling is flagged, full isolation is fatal") {
    auto clustered = [](double gap) {
        std::vector<int> ids{0, 1, 2, 3};
        std::vector<Vec3> pos{{0, 0, 0}, {0.5, 0, 0}, {gap, 0, 0}, {gap + 0.05, 0, 0}};
        std::vector<std::vector<double>> series{{1, 2, 3}, {1, 2, 3}, {1, 2, 3}, {1, 2, 3}};
        return build_candidate_set(ids, pos, series, 2);
    };

    // A tight unmeasured pair 10 units from the measured pair keeps almost all
    // transition mass internal: the series truncates slowly and hits the
    // iteration cap, but the absorbed mass is still renormalizable.
    CandidateSet weak = clustered(10.0);
    PropagationResult r = learn_weights(weak, {2.0, 0.5}, {0, 1});
    CHECK_FALSE(r.converged);
    CHECK(r.iterations == 500);
    CHECK(r.residual >= 1e-6);
    for (std::size_t i = 0; i < 2; ++i)
        CHECK(r.weights(i, 0) + r.weights(i, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::isfinite(mean_entropy(weak, r, {0, 1})));

    // At 200 units the kernel underflows to zero and no mass ever arrives.
    CandidateSet isolated = clustered(200.0);
    CHECK_THROWS_WITH_AS(
        learn_weights(isolated, {2.0, 0.5}, {0, 1}),
        "propagation: an unmeasured location has no path to any measured one", RuntimeFailure);
}

TEST_CASE("greedy swaps descend strictly to a single-swap optimum") {
    CandidateSet set = six_locations();
    AffinityParams p = resolve_affinity(set, {});

    // Exhaustive C(6,3) reference. Every mixture entropy respects the ln(bins)
    // ceiling; selecting the three correlated left-cluster locations hits it
    // exactly because the right cluster mixes to uniform.
    double best = 1e300;
    std::vector<int> best_sel, worst_sel;
    double worst = -1.0;
    for (int a = 0; a < 6; ++a)
        for (int b = a + 1; b < 6; ++b)
            for (int c = b + 1; c < 6; ++c) {
                double h = entropy_of(set, p, {a, b, c});
                CHECK(h <= std::log(4.0) + 1e-12);
                if (h < best) best = h, best_sel = {a, b, c};
                if (h > worst) worst = h, worst_sel = {a, b, c};
            }
    CHECK(best_sel == std::vector<int>{0, 1, 5});
    CHECK(worst_sel == std::vector<int>{0, 1, 2});
    CHECK(worst == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    DeploymentPlan plan = greedy_swap(set, 3, &worst_sel, p);
    CHECK(std::is_sorted(plan.selected.begin(), plan.selected.end()));
    CHECK(plan.weights_converged);

    // Strict descent, chained bookkeeping, and a final score that reproduces.
    REQUIRE_FALSE(plan.swaps.empty());
    CHECK(plan.swaps.front().before == entropy_of(set, p, worst_sel));
    for (std::size_t i = 0; i < plan.swaps.size(); ++i) {
        CHECK(plan.swaps[i].after < plan.swaps[i].before);
        if (i > 0) CHECK(plan.swaps[i].before == plan.swaps[i - 1].after);
    }
    CHECK(plan.mean_entropy == plan.swaps.back().after);
    CHECK(plan.mean_entropy == entropy_of(set, p, plan.selected));
    CHECK(plan.selected == best_sel);

    // No single swap from the final set improves it.
    for (int out : plan.selected)
        for (int in = 0; in < 6; ++in) {
            if (std::find(plan.selected.begin(), plan.selected.end(), in) != plan.selected.end())
                continue;
            std::vector<int> trial = plan.selected;
            *std::find(trial.begin(), trial.end(), out) = in;
            CHECK(entropy_of(set, p, trial) >= plan.mean_entropy);
        }

    // The global optimum is a greedy fixed point.
    DeploymentPlan fixed = greedy_swap(set, 3, &best_sel, p);
    CHECK(fixed.swaps.empty());
    CHECK(fixed.selected == best_sel);
    CHECK(fixed.mean_entropy == best);
}

TEST_CASE("the greedy landscape holds a second basin") {
    // Starting from {0,2,4} the steepest single swap lands on {2,3,4}, which
    // is locally optimal but above the global optimum {0,1,5}: the descent is
    // greedy, not exhaustive.
    CandidateSet set = six_locations();
    AffinityParams p = resolve_affinity(set, {});
    std::vector<int> init{0, 2, 4};
    DeploymentPlan plan = greedy_swap(set, 3, &init, p);
    CHECK(plan.selected == std::vector<int>{2, 3, 4});
    CHECK(plan.mean_entropy > entropy_of(set, p, {0, 1, 5}));
    for (int out : plan.selected)
        for (int in : {0, 1, 5}) {
            std::vector<int> trial = plan.selected;
            *std::find(trial.begin(), trial.end(), out) = in;
            CHECK(entropy_of(set, p, trial) >= plan.mean_entropy);
        }
}

TEST_CASE("seeded starts replay and initial sets are validated") {
    CandidateSet set = six_locations();
    AffinityParams p = resolve_affinity(set, {});

    DeploymentPlan a = greedy_swap(set, 3, nullptr, p, 42);
    DeploymentPlan b = greedy_swap(set, 3, nullptr, p, 42);
    CHECK(a.selected == b.selected);
    CHECK(a.mean_entropy == b.mean_entropy);
    CHECK(a.swaps.size() == b.swaps.size());

    CHECK_THROWS_WITH_AS(greedy_swap(set, 0, nullptr, p),
                         "deploy.n: must satisfy 1 <= n < candidate count", ValidationError);
    CHECK_THROWS_WITH_AS(greedy_swap(set, 6, nullptr, p),
                         "deploy.n: must satisfy 1 <= n < candidate count", ValidationError);
    std::vector<int> short_init{0, 1};
    CHECK_THROWS_WITH_AS(greedy_swap(set, 3, &short_init, p),
                         "deploy.initial: must hold n distinct location ids", ValidationError);
    std::vector<int> dup_init{0, 0, 1};
    CHECK_THROWS_WITH_AS(greedy_swap(set, 3, &dup_init, p),
                         "deploy.initial: must hold n distinct location ids", ValidationError);
    std::vector<int> unknown_init{0, 1, 9};
    CHECK_THROWS_WITH_AS(greedy_swap(set, 3, &unknown_init, p),
                         "deploy.initial: unknown location id 9", ValidationError);
}

TEST_CASE("plan json records the swap trajectory") {
    CandidateSet set = six_locations();
    AffinityParams p = resolve_affinity(set, {});
    std::vector<int> init{0, 1, 2};
    DeploymentPlan plan = greedy_swap(set, 3, &init, p);

    nlohmann::json j = nlohmann::json::parse(plan_json(plan, p, 3));
    CHECK(j["n"] == 3);
    CHECK(j["selected"] == nlohmann::json(plan.selected));
    CHECK(j["mean_entropy"] == plan.mean_entropy);
    CHECK(j["sigma_d"] == 5.0);
    CHECK(j["sigma_p"] == 0.5);
    CHECK(j["weights_converged"] == true);
    REQUIRE(j["swaps"].size() == plan.swaps.size());
    CHECK(j["swaps"][0]["in"] == plan.swaps[0].in_id);
    CHECK(j["swaps"][0]["out"] == plan.swaps[0].out_id);
    CHECK(j["swaps"][0]["entropy_before"] == plan.swaps[0].before);
    CHECK(j["swaps"][0]["entropy_after"] == plan.swaps[0].after);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "aqs/power_tradeoff.hpp"

using namespace aqs;

namespace {

std::vector<WeatherRecord> calm_weather(const GridSpec& g) {
    std::vector<WeatherRecord> w(static_cast<std::size_t>(g.n_steps));
    for (int t = 0; t < g.n_steps; ++t) w[static_cast<std::size_t>(t)].time = t * g.t_step;
    return w;
}

// Static off-center bump: a grid-symmetric shape would plateau after coarse
// sampling, leaving no strict extremum and every gradient tied exactly at the
// percentile threshold, so nothing would ever be detected.
Field bump_field(const GridSpec& g) {
    std::vector<double> conc(g.cells() * static_cast<std::size_t>(g.n_steps));
    for (int t = 0; t < g.n_steps; ++t)
        for (int z = 0; z < g.nz; ++z)
            for (int y = 0; y < g.ny; ++y)
                for (int x = 0; x < g.nx; ++x)
                    conc[static_cast<std::size_t>(t) * g.cells() + g.cell_index(x, y, z)] =
                        20.0 +
                        60.0 * std::exp(-((x - 2.3) * (x - 2.3) + (y - 3.1) * (y - 3.1)) / 6.0);
    return Field(g, std::move(conc), calm_weather(g));
}

AerialSetup bump_setup() {
    AerialSetup s;
    s.scan_grid.nx = 4;
    s.scan_grid.ny = 4;
    s.scan_grid.nz = 1;
    s.scan_grid.cell_size = 20.0;
    s.scan_grid.n_steps = 1;
    s.noise.sigma_rel = 0.0;
    s.noise.p_fault = 0.0;
    s.start = {0.0, 0.0, 10.0};
    s.n_probe_positions = 4;
    s.horizon_h = 24.0;
    s.probe_step_h = 6.0;
    return s;
}

GridSpec day_grid() {
    GridSpec g;
    g.nx = 8;
    g.ny = 8;
    g.nz = 2;
    g.cell_size = 10.0;
    g.t_step = 3600.0;
    g.n_steps = 26;  // one hour past the 24 h sweep horizon plus slack
    return g;
}

}  // namespace

TEST_CASE("battery duration follows the closed-form daily draw") {
    PowerProfile p;
    // Default profile at (30, 60): 1440*(0.03+0.017) + 48*4 + 24*8 = 451.68
    // mAh per day.
    CHECK(battery_duration_h(p, 30, 60) == 13600.0 / 451.68 * 24.0);
    CHECK(battery_duration_h(p, 30, 60) == doctest::Approx(722.6354941551541).epsilon(1e-15));
    // Sensing every minute costs the most; the ordering is strict.
    CHECK(battery_duration_h(p, 1, 1) < battery_duration_h(p, 15, 30));
    CHECK(battery_duration_h(p, 15, 30) < battery_duration_h(p, 30, 60));
    CHECK(battery_duration_h(p, 30, 60) < battery_duration_h(p, 60, 120));

    // Monotone in each interval separately.
    for (int s : {5, 10, 20, 40})
        CHECK(battery_duration_h(p, s, 60) < battery_duration_h(p, 2 * s, 60));
    for (int u : {5, 10, 20, 40})
        CHECK(battery_duration_h(p, 30, u) < battery_duration_h(p, 30, 2 * u));

    CHECK_THROWS_WITH_AS(battery_duration_h(p, 0, 60), "battery: intervals must be >= 1",
                         ValidationError);
    PowerProfile idle;
    idle.e_wake = idle.e_sense = idle.e_upload = idle.e_sleep_per_min = 0.0;
    CHECK_THROWS_WITH_AS(battery_duration_h(idle, 30, 60), "battery: profile draws no energy",
                         ValidationError);
    PowerProfile dead;
    dead.capacity_mAh = 0.0;
    CHECK_THROWS_AS(battery_duration_h(dead, 30, 60), ValidationError);
}

TEST_CASE("interval adaptation multiplies crossed thresholds and floors") {
    IntervalPolicy policy;
    policy.aqi_thresholds = {50.0, 100.0};
    policy.scale_factors = {0.5, 0.5};

    CHECK(adapt_intervals(policy, 30.0) == std::pair<int, int>{30, 60});
    CHECK(adapt_intervals(policy, 50.0) == std::pair<int, int>{15, 30});  // >= is crossing
    CHECK(adapt_intervals(policy, 99.0) == std::pair<int, int>{15, 30});
    CHECK(adapt_intervals(policy, 100.0) == std::pair<int, int>{7, 15});  // floor(30*0.25)
    CHECK(adapt_intervals(policy, 1e6) == std::pair<int, int>{7, 15});

    policy.floor_min = 10;
    CHECK(adapt_intervals(policy, 100.0) == std::pair<int, int>{10, 15});

    // Upload can never outrun sensing.
    IntervalPolicy swapped;
    swapped.base_sense_min = 30;
    swapped.base_upload_min = 10;
    CHECK(adapt_intervals(swapped, 0.0) == std::pair<int, int>{30, 30});

    IntervalPolicy bad;
    bad.aqi_thresholds = {50.0};
    CHECK_THROWS_WITH_AS(adapt_intervals(bad, 0.0), "policy: one scale factor per threshold",
                         ValidationError);
    bad.scale_factors = {1.5};
    CHECK_THROWS_WITH_AS(adapt_intervals(bad, 0.0), "policy.scale_factors[0]: must be in (0, 1]",
                         ValidationError);
    bad.aqi_thresholds = {50.0, 50.0};
    bad.scale_factors = {0.5, 0.5};
    CHECK_THROWS_WITH_AS(adapt_intervals(bad, 0.0),
                         "policy.aqi_thresholds: must be strictly ascending", ValidationError);
    IntervalPolicy zero;
    zero.base_sense_min = 0;
    CHECK_THROWS_WITH_AS(adapt_intervals(zero, 0.0), "policy: base intervals must be >= 1",
                         ValidationError);
    IntervalPolicy floored;
    floored.floor_min = 0;
    CHECK_THROWS_WITH_AS(adapt_intervals(floored, 0.0), "policy.floor_min: must be >= 1",
                         ValidationError);
}

TEST_CASE("the network interval sweep scores each setting per seed") {
    GridSpec g;
    g.nx = 3;
    g.ny = 3;
    g.nz = 1;
    g.cell_size = 20.0;
    g.t_step = 60.0;
    g.n_steps = 320;
    std::vector<double> conc(g.cells() * static_cast<std::size_t>(g.n_steps));
    for (int t = 0; t < g.n_steps; ++t)
        for (int z = 0; z < g.nz; ++z)
            for (int y = 0; y < g.ny; ++y)
                for (int x = 0; x < g.nx; ++x)
                    conc[static_cast<std::size_t>(t) * g.cells() + g.cell_index(x, y, z)] =
                        30.0 + g.cell_center(x, y, z).x + 2.0 * g.cell_center(x, y, z).y;
    Field field(g, std::move(conc), calm_weather(g));

    SimConfig base;
    base.grid = g;
    base.duration_min = 300;
    base.link.latency_jitter_s = 0.0;
    base.noise.sigma_rel = 0.02;
    int id = 0;
    for (double x : {10.0, 30.0, 50.0})
        for (double y : {10.0, 50.0}) {
            DeviceConfig d;
            d.id = id++;
            d.position = {x, y, 10.0};
            base.devices.push_back(d);
        }

    IntervalSweepParams params;
    params.screening.k_spatial = 2;
    params.screening.k_temporal = 0;
    params.screening.history_len = 2;
    params.screening.pattern_window = 3;
    params.mlp.layer_widths = {4};
    params.mlp.epochs = 40;
    params.mlp.batch_size = 16;
    params.max_probe_times = 3;

    auto rows = interval_accuracy_sweep(base, field, {30, 15, 30}, {1}, params);
    REQUIRE(rows.size() == 2);  // duplicates collapse, order ascending
    CHECK(rows[0].sense_min == 15);
    CHECK(rows[0].upload_min == 30);
    CHECK(rows[1].sense_min == 30);
    CHECK(rows[1].upload_min == 60);
    for (const auto& r : rows) {
        CHECK(r.status.ok);
        CHECK(r.status.n_seeds_ok == 1);
        CHECK(r.status.note.empty());
        CHECK(r.mrd > 0.0);
        CHECK(std::isfinite(r.mrd));
        CHECK(r.battery_hours ==
              battery_duration_h(base.profile, r.sense_min, r.upload_min));
    }

    // Bitwise replay.
    auto again = interval_accuracy_sweep(base, field, {15, 30}, {1}, params);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].mrd == again[i].mrd);
        CHECK(rows[i].battery_hours == again[i].battery_hours);
    }

    // A scenario shorter than the warmup of its slowest setting cannot place
    // a single probe.
    SimConfig brief = base;
    brief.duration_min = 30;
    CHECK_THROWS_WITH_AS(interval_accuracy_sweep(brief, field, {15, 30}, {1}, params),
                         "sweep: scenario too short for any probe past the warmup",
                         ValidationError);

    // A run that cannot produce data flags the row instead of throwing.
    SimConfig empty = base;
    empty.devices.clear();
    auto flagged = interval_accuracy_sweep(empty, field, {15}, {1, 2}, params);
    REQUIRE(flagged.size() == 1);
    CHECK_FALSE(flagged[0].status.ok);
    CHECK(flagged[0].status.n_seeds_ok == 0);
    CHECK_FALSE(flagged[0].status.note.empty());
    CHECK(flagged[0].mrd == 0.0);

    CHECK_THROWS_WITH_AS(interval_accuracy_sweep(base, field, {}, {1}, params),
                         "sweep: interval grid must be non-empty", ValidationError);
    CHECK_THROWS_WITH_AS(interval_accuracy_sweep(base, field, {15}, {}, params),
                         "sweep: need at least one seed", ValidationError);
    CHECK_THROWS_WITH_AS(interval_accuracy_sweep(base, field, {0}, {1}, params),
                         "sweep: intervals must be >= 1", ValidationError);
    IntervalSweepParams bad = params;
    bad.upload_factor = 0;
    CHECK_THROWS_WITH_AS(interval_accuracy_sweep(base, field, {15}, {1}, bad),
                         "sweep.upload_factor: must be >= 1", ValidationError);
}

TEST_CASE("the aerial interval sweep reuses one plan and scales its energy") {
    Field field = bump_field(day_grid());
    AerialSetup setup = bump_setup();

    auto rows = aerial_interval_sweep(field, setup, {24.0, 6.0, 12.0}, {1});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].interval_h == 6.0);
    CHECK(rows[1].interval_h == 12.0);
    CHECK(rows[2].interval_h == 24.0);
    CHECK(rows[0].default_band);
    CHECK(rows[1].default_band);
    CHECK_FALSE(rows[2].default_band);
    for (const auto& r : rows) {
        CHECK(r.status.ok);
        CHECK(r.status.n_seeds_ok == 1);
        CHECK(r.energy_per_day_J > 0.0);
        CHECK(std::isfinite(r.mrd));
    }

    // The plan is identical across intervals (same scan seed, no noise), so
    // daily energy is exactly inversely proportional to the interval.
    CHECK(rows[0].energy_per_day_J == 4.0 * rows[2].energy_per_day_J);
    CHECK(rows[1].energy_per_day_J == 2.0 * rows[2].energy_per_day_J);

    // The field is static and the flights noiseless, so every probe sees the
    // same recovered surface whatever the schedule.
    CHECK(rows[0].mrd == rows[1].mrd);
    CHECK(rows[1].mrd == rows[2].mrd);

    auto again = aerial_interval_sweep(field, setup, {6.0, 12.0, 24.0}, {1});
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].mrd == again[i].mrd);

    CHECK_THROWS_WITH_AS(aerial_interval_sweep(field, setup, {}, {1}),
                         "sweep: interval grid must be non-empty", ValidationError);
    CHECK_THROWS_WITH_AS(aerial_interval_sweep(field, setup, {6.0}, {}),
                         "sweep: need at least one seed", ValidationError);
    CHECK_THROWS_WITH_AS(aerial_interval_sweep(field, setup, {25.0}, {1}),
                         "sweep: flight interval must be in (0, 24] hours", ValidationError);
    AerialSetup low = setup;
    low.horizon_h = 4.0;
    CHECK_THROWS_WITH_AS(aerial_interval_sweep(field, low, {6.0}, {1}),
                         "sweep: flight interval exceeds the horizon", ValidationError);
    GridSpec brief = day_grid();
    brief.n_steps = 4;
    CHECK_THROWS_WITH_AS(aerial_interval_sweep(bump_field(brief), setup, {6.0}, {1}),
                         "sweep: field trace shorter than the sweep horizon", ValidationError);

    // An unflyable budget flags the row rather than failing the sweep.
    AerialSetup broke = setup;
    broke.uav.budget_J = 100.0;
    auto flagged = aerial_interval_sweep(field, broke, {6.0}, {1, 2});
    REQUIRE(flagged.size() == 1);
    CHECK_FALSE(flagged[0].status.ok);
    CHECK(flagged[0].status.n_seeds_ok == 0);
    CHECK(flagged[0].status.note == "sweep: budget admits no waypoint");
    CHECK(flagged[0].energy_per_day_J == 0.0);
}

TEST_CASE("the hover sweep trades waypoint count against purge quality") {
    Field field = bump_field(day_grid());
    AerialSetup setup = bump_setup();
    setup.uav.budget_J = 9000.0;  // tight enough that hover time costs stops

    HoverSweepResult result = hover_sweep(field, setup, {15.0, 1.0, 5.0}, {1, 2});
    REQUIRE(result.rows.size() == 3);
    CHECK(result.rows[0].hover_s == 1.0);
    CHECK(result.rows[1].hover_s == 5.0);
    CHECK(result.rows[2].hover_s == 15.0);
    for (const auto& r : result.rows) {
        CHECK(r.status.ok);
        CHECK(r.status.n_seeds_ok == 2);
        CHECK(r.mean_positions > 0.0);
        CHECK(std::isfinite(r.mrd));
    }
    // Under a fixed budget, longer hovers afford no extra waypoints.
    CHECK(result.rows[0].mean_positions >= result.rows[1].mean_positions);
    CHECK(result.rows[1].mean_positions >= result.rows[2].mean_positions);
    CHECK(result.rows[2].mean_positions < result.rows[0].mean_positions);

    // The reported argmin is the first row achieving the lowest deviation.
    double best = result.rows[0].mrd;
    double best_h = result.rows[0].hover_s;
    for (const auto& r : result.rows)
        if (r.mrd < best) {
            best = r.mrd;
            best_h = r.hover_s;
        }
    CHECK(result.argmin_hover_s == best_h);

    HoverSweepResult again = hover_sweep(field, setup, {1.0, 5.0, 15.0}, {1, 2});
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
        CHECK(result.rows[i].mrd == again.rows[i].mrd);
        CHECK(result.rows[i].mean_positions == again.rows[i].mean_positions);
    }

    CHECK_THROWS_WITH_AS(hover_sweep(field, setup, {}, {1}),
                         "sweep: hover list must be non-empty", ValidationError);
    CHECK_THROWS_WITH_AS(hover_sweep(field, setup, {0.0}, {1}),
                         "sweep: hover times must be > 0", ValidationError);

    AerialSetup broke = setup;
    broke.uav.budget_J = 100.0;
    HoverSweepResult flagged = hover_sweep(field, broke, {1.0, 5.0}, {1});
    CHECK(flagged.argmin_hover_s == 0.0);  // no ok row to nominate
    for (const auto& r : flagged.rows) {
        CHECK_FALSE(r.status.ok);
        CHECK(r.status.n_seeds_ok == 0);
    }
}

TEST_CASE("sweep csv writers escape notes and flag the argmin") {
    std::vector<IntervalSweepRow> net(1);
    net[0].sense_min = 15;
    net[0].upload_min = 30;
    net[0].battery_hours = 722.5;
    net[0].mrd = 0.25;
    net[0].status.n_seeds_ok = 3;
    net[0].status.ok = false;
    net[0].status.note = "bad, thing\nhappened";
    std::ostringstream a;
    write_interval_sweep_csv(net, a);
    CHECK(a.str() ==
          "sense_min,upload_min,battery_hours,mrd,n_seeds_ok,ok,note\n"
          "15,30,722.5,0.25,3,false,bad; thing happened\n");

    std::vector<AerialSweepRow> air(2);
    air[0].interval_h = 6.0;
    air[0].energy_per_day_J = 1200.0;
    air[0].mrd = 0.5;
    air[0].default_band = true;
    air[0].status.n_seeds_ok = 1;
    air[1].interval_h = 24.0;
    air[1].energy_per_day_J = 300.0;
    air[1].mrd = 0.75;
    air[1].status.n_seeds_ok = 1;
    std::ostringstream b;
    write_aerial_sweep_csv(air, b);
    CHECK(b.str() ==
          "interval_h,uav_energy_per_day_J,mrd,default_band,n_seeds_ok,ok,note\n"
          "6,1200,0.5,true,1,true,\n"
          "24,300,0.75,false,1,true,\n");

    HoverSweepResult hov;
    hov.rows.resize(2);
    hov.rows[0].hover_s = 1.0;
    hov.rows[0].mean_positions = 9.5;
    hov.rows[0].mrd = 0.5;
    hov.rows[0].status.n_seeds_ok = 2;
    hov.rows[1].hover_s = 5.0;
    hov.rows[1].mean_positions = 6.0;
    hov.rows[1].mrd = 0.25;
    hov.rows[1].status.n_seeds_ok = 2;
    hov.argmin_hover_s = 5.0;
    std::ostringstream c;
    write_hover_sweep_csv(hov, c);
    CHECK(c.str() ==
          "hover_s,n_positions_visited,mrd,is_argmin,n_seeds_ok,ok,note\n"
          "1,9.5,0.5,false,2,true,\n"
          "5,6,0.25,true,2,true,\n");
}

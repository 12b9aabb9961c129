#include <catch2/catch.hpp>

#include <cmath>

#include "hfel/cost_model.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace hfel;

TEST_CASE("local iteration count") {
  SystemConfig cfg = helpers::basic_config();

  cfg.local_iter_scale = 1.0;
  cfg.local_accuracy = std::exp(-1.0);
  CHECK(local_iteration_count(cfg) == Approx(1.0));

  cfg.local_iter_scale = 10.0;
  cfg.local_accuracy = 0.9;
  CHECK(local_iteration_count(cfg) == Approx(10.0 * std::log(1.0 / 0.9)));

  cfg.local_iter_scale = 5.0;
  cfg.local_accuracy = 1.0 - 1e-12;  // loose target needs almost no local work
  CHECK(local_iteration_count(cfg) < 1e-10);
}

TEST_CASE("edge iteration count") {
  SystemConfig cfg = helpers::basic_config();
  cfg.edge_iter_scale = 1.0;
  cfg.edge_accuracy = std::exp(-1.0);

  cfg.local_accuracy = 1e-12;  // denominator ~ 1
  CHECK(edge_iteration_count(cfg) == Approx(1.0).epsilon(1e-9));

  cfg.local_accuracy = 0.5;
  CHECK(edge_iteration_count(cfg) == Approx(2.0));

  cfg.edge_iter_scale = 2.0;
  cfg.edge_accuracy = 0.9;
  cfg.local_accuracy = 0.9;
  CHECK(edge_iteration_count(cfg) == Approx(2.0 * std::log(1.0 / 0.9) / 0.1));

  cfg.local_accuracy = 1.5;  // invalid accuracy rejected before dividing by zero
  CHECK_THROWS_AS(edge_iteration_count(cfg), ConstraintError);
}

TEST_CASE("computation delay and energy") {
  SystemConfig cfg = helpers::basic_config();
  // Pick accuracy so the iteration count is exactly 1 or 10.
  cfg.local_iter_scale = 1.0;
  cfg.local_accuracy = std::exp(-1.0);

  DeviceProfile dev = helpers::make_device(0, 1.0);
  dev.cycles_per_sample = 1.0;
  dev.num_samples = 1e9;  // 1e9 cycles per pass

  CHECK(comp_delay_s(dev, 1e9, cfg) == Approx(1.0));
  cfg.local_iter_scale = 10.0;
  CHECK(comp_delay_s(dev, 1e9, cfg) == Approx(10.0));
  CHECK(comp_delay_s(dev, 1e10, cfg) == Approx(1.0));

  cfg.local_iter_scale = 1.0;
  // alpha/2 * f^2 * cycles with alpha = 2e-28, f = 1e9: 1e-28 * 1e18 * 1e9 = 0.1 J
  CHECK(comp_energy_j(dev, 1e9, cfg) == Approx(0.1));

  // Doubling f halves delay, quadruples energy.
  const double f = 2.5e9;
  CHECK(comp_delay_s(dev, 2 * f, cfg) == Approx(comp_delay_s(dev, f, cfg) / 2));
  CHECK(comp_energy_j(dev, 2 * f, cfg) == Approx(4 * comp_energy_j(dev, f, cfg)));

  // Boundary: a zero chipset coefficient means zero compute energy.
  DeviceProfile free_chip = dev;
  free_chip.capacitance = 0.0;
  CHECK(comp_energy_j(free_chip, 2e9, cfg) == 0.0);

  CHECK_THROWS_AS(comp_delay_s(dev, 1e8, cfg), ConstraintError);
  CHECK_THROWS_AS(comp_energy_j(dev, 2e10, cfg), ConstraintError);
}

TEST_CASE("profile validation") {
  SystemConfig cfg = helpers::basic_config();
  cfg.energy_weight = 0.0;
  cfg.delay_weight = 0.0;
  CHECK_THROWS_AS(validate(cfg), ConstraintError);
  cfg = helpers::basic_config();
  cfg.local_accuracy = 1.0;
  CHECK_THROWS_AS(validate(cfg), ConstraintError);
  cfg = helpers::basic_config();
  cfg.local_iter_scale = 0.0;
  CHECK_THROWS_AS(validate(cfg), ConstraintError);

  DeviceProfile dev = helpers::make_device(0, 1e-7);
  dev.freq_max_hz = dev.freq_min_hz / 2;
  CHECK_THROWS_AS(validate(dev), ConstraintError);
  dev = helpers::make_device(0, 1e-7);
  dev.channel_gain[1] = 0.0;
  CHECK_THROWS_AS(validate(dev), ConstraintError);
  dev = helpers::make_device(0, 1e-7);
  dev.tx_power_w = -1.0;
  CHECK_THROWS_AS(validate(dev), ConstraintError);

  EdgeServerProfile srv = helpers::make_server(0, {});
  CHECK_THROWS_AS(validate(srv), ConstraintError);  // empty availability
  srv = helpers::make_server(0, {0});
  srv.bandwidth_hz = 0.0;
  CHECK_THROWS_AS(validate(srv), ConstraintError);
}

TEST_CASE("transmission rate") {
  SystemConfig cfg = helpers::basic_config();
  EdgeServerProfile server = helpers::make_server(0, {0});
  DeviceProfile dev = helpers::make_device(0, 1.0);

  // gain * power / noise = e - 1 makes the log term exactly 1.
  dev.tx_power_w = 0.2;
  cfg.noise_w = 1e-8;
  dev.channel_gain[0] = (std::exp(1.0) - 1.0) * cfg.noise_w / dev.tx_power_w;
  CHECK(tx_rate_nats(dev, 1.0, server, cfg) == Approx(1e7));
  CHECK(tx_rate_nats(dev, 0.5, server, cfg) == Approx(0.5e7));

  CHECK_THROWS_AS(tx_rate_nats(dev, 0.0, server, cfg), ConstraintError);
  CHECK_THROWS_AS(tx_rate_nats(dev, -0.1, server, cfg), ConstraintError);
  CHECK_THROWS_AS(tx_rate_nats(dev, 1.5, server, cfg), ConstraintError);

  // Boundary behavior: the rate vanishes with the gain (validation rejects a
  // zero gain as a profile, but the formula itself degrades gracefully).
  dev.channel_gain[0] = 0.0;
  CHECK(tx_rate_nats(dev, 1.0, server, cfg) == 0.0);
}

TEST_CASE("upload delay and energy") {
  SystemConfig cfg = helpers::basic_config();
  EdgeServerProfile server = helpers::make_server(0, {0});
  DeviceProfile dev = helpers::make_device(0, 1.0);
  dev.update_nats = 25000.0;
  dev.tx_power_w = 0.2;
  dev.channel_gain[0] = (std::exp(1.0) - 1.0) * cfg.noise_w / dev.tx_power_w;  // rate 1e7 at beta 1

  const CommCost full = comm_cost(dev, 1.0, server, cfg);
  CHECK(full.delay_s == Approx(2.5e-3));
  CHECK(full.energy_j == Approx(5e-4));

  const CommCost half = comm_cost(dev, 0.5, server, cfg);
  CHECK(half.delay_s == Approx(2 * full.delay_s));
  CHECK(half.energy_j == Approx(2 * full.energy_j));
}

TEST_CASE("group cost: single member and symmetry") {
  SystemConfig cfg = helpers::basic_config();
  World world = helpers::single_server_world({1e-7});
  const DeviceProfile& dev = world.devices[0];
  const EdgeServerProfile& server = world.servers[0];

  GroupAllocation alloc;
  alloc.server_id = 0;
  alloc.members = {0};
  alloc.freqs[0] = 2e9;
  alloc.betas[0] = 1.0;

  const double rounds = edge_iteration_count(cfg);
  const CommCost com = comm_cost(dev, 1.0, server, cfg);
  const CostBreakdown cost = group_cost(alloc, world, cfg);
  CHECK(cost.energy_j == Approx(rounds * (com.energy_j + comp_energy_j(dev, 2e9, cfg))));
  CHECK(cost.delay_s == Approx(rounds * (com.delay_s + comp_delay_s(dev, 2e9, cfg))));
  CHECK(cost.weighted ==
        Approx(cfg.energy_weight * cost.energy_j + cfg.delay_weight * cost.delay_s).epsilon(1e-12));

  // Two identical devices at beta 0.5 each: same delay as one device at
  // beta 0.5, twice the energy.
  World twin = helpers::single_server_world({1e-7, 1e-7});
  GroupAllocation pair;
  pair.server_id = 0;
  pair.members = {0, 1};
  pair.freqs[0] = pair.freqs[1] = 2e9;
  pair.betas[0] = pair.betas[1] = 0.5;
  GroupAllocation solo = alloc;
  solo.betas[0] = 0.5;
  const CostBreakdown twin_cost = group_cost(pair, twin, cfg);
  const CostBreakdown solo_cost = group_cost(solo, world, cfg);
  CHECK(twin_cost.delay_s == Approx(solo_cost.delay_s));
  CHECK(twin_cost.energy_j == Approx(2 * solo_cost.energy_j));
}

TEST_CASE("group cost matches an independent evaluation") {
  Prng rng(42);
  World world = helpers::random_group_world(3, rng);
  SystemConfig cfg = helpers::basic_config(0.3, 0.7);

  GroupAllocation alloc;
  alloc.server_id = 0;
  alloc.members = {0, 1, 2};
  double betas[3] = {0.5, 0.3, 0.2};
  for (int i = 0; i < 3; ++i) {
    alloc.freqs[i] = rng.uniform(1e9, 1e10);
    alloc.betas[i] = betas[i];
  }
  const CostBreakdown got = group_cost(alloc, world, cfg);
  const CostBreakdown want = oracle::naive_group_cost(alloc, world, cfg);
  CHECK(got.energy_j == Approx(want.energy_j).epsilon(1e-12));
  CHECK(got.delay_s == Approx(want.delay_s).epsilon(1e-12));
  CHECK(got.weighted == Approx(want.weighted).epsilon(1e-12));
}

TEST_CASE("group cost rejects invariant violations") {
  World world = helpers::single_server_world({1e-7, 1e-7});
  SystemConfig cfg = helpers::basic_config();
  GroupAllocation alloc;
  alloc.server_id = 0;
  alloc.members = {0, 1};
  alloc.freqs[0] = alloc.freqs[1] = 2e9;
  alloc.betas[0] = 0.7;
  alloc.betas[1] = 0.7;  // shares exceed the band
  CHECK_THROWS_AS(group_cost(alloc, world, cfg), ConstraintError);

  alloc.betas[1] = 0.2;
  alloc.freqs[1] = 5e8;  // below the frequency floor
  CHECK_THROWS_AS(group_cost(alloc, world, cfg), ConstraintError);
}

namespace {

// 2-server, 4-device world with independent gains per server.
World two_server_world(Prng& rng) {
  World world;
  for (int i = 0; i < 4; ++i) world.devices.push_back(helpers::random_device(i, rng, 2));
  world.servers.push_back(helpers::make_server(0, {0, 1, 2, 3}));
  world.servers.push_back(helpers::make_server(1, {0, 1, 2, 3}));
  return world;
}

}  // namespace

TEST_CASE("global cost: degenerate and cross-checked cases") {
  SystemConfig cfg = helpers::basic_config(0.4, 0.6);
  Prng rng(7);

  SECTION("single server equals group cost plus the cloud terms") {
    World world = helpers::random_group_world(2, rng);
    GroupAllocation alloc;
    alloc.server_id = 0;
    alloc.members = {0, 1};
    alloc.freqs[0] = 2e9;
    alloc.freqs[1] = 3e9;
    alloc.betas[0] = 0.6;
    alloc.betas[1] = 0.4;
    const CostBreakdown group = group_cost(alloc, world, cfg);
    const CostBreakdown total = global_cost({alloc}, world, cfg);
    const EdgeServerProfile& s = world.servers[0];
    const double t_cloud = s.cloud_update_nats / s.cloud_rate_nats;
    CHECK(total.energy_j == Approx(group.energy_j + s.cloud_power_w * t_cloud));
    CHECK(total.delay_s == Approx(group.delay_s + t_cloud));
  }

  SECTION("vanishing cloud terms reduce to the group cost") {
    World world = helpers::random_group_world(2, rng);
    world.servers[0].cloud_power_w = 0.0;
    world.servers[0].cloud_rate_nats = 1e30;  // negligible upload time
    GroupAllocation alloc;
    alloc.server_id = 0;
    alloc.members = {0, 1};
    alloc.freqs[0] = 2e9;
    alloc.freqs[1] = 3e9;
    alloc.betas[0] = 0.6;
    alloc.betas[1] = 0.4;
    const CostBreakdown group = group_cost(alloc, world, cfg);
    const CostBreakdown total = global_cost({alloc}, world, cfg);
    CHECK(total.energy_j == Approx(group.energy_j));
    CHECK(total.delay_s == Approx(group.delay_s).epsilon(1e-9));
    CHECK(total.weighted == Approx(group.weighted).epsilon(1e-9));
  }

  SECTION("two servers, four devices vs the independent evaluator") {
    World world = two_server_world(rng);
    GroupAllocation g0, g1;
    g0.server_id = 0;
    g0.members = {0, 2};
    g0.freqs[0] = 2e9;
    g0.freqs[2] = 4e9;
    g0.betas[0] = 0.5;
    g0.betas[2] = 0.5;
    g1.server_id = 1;
    g1.members = {1, 3};
    g1.freqs[1] = 3e9;
    g1.freqs[3] = 6e9;
    g1.betas[1] = 0.25;
    g1.betas[3] = 0.75;
    const CostBreakdown got = global_cost({g0, g1}, world, cfg);
    const CostBreakdown want = oracle::naive_global_cost({g0, g1}, world, cfg);
    CHECK(got.energy_j == Approx(want.energy_j).epsilon(1e-12));
    CHECK(got.delay_s == Approx(want.delay_s).epsilon(1e-12));
  }

  SECTION("non-partitions are rejected") {
    World world = two_server_world(rng);
    GroupAllocation g0;
    g0.server_id = 0;
    g0.members = {0, 1};
    g0.freqs[0] = g0.freqs[1] = 2e9;
    g0.betas[0] = g0.betas[1] = 0.5;
    CHECK_THROWS_AS(global_cost({g0}, world, cfg), ScenarioError);  // 2 and 3 unassigned

    GroupAllocation dup = g0;
    dup.server_id = 1;
    CHECK_THROWS_AS(global_cost({g0, dup}, world, cfg), ScenarioError);  // 0 and 1 twice
  }
}

TEST_CASE("cost monotonicity properties", "[property]") {
  Prng rng(2024);
  SystemConfig cfg = helpers::basic_config(0.5, 0.5);
  for (int trial = 0; trial < 50; ++trial) {
    World world = helpers::random_group_world(1, rng);
    const DeviceProfile& dev = world.devices[0];
    const EdgeServerProfile& server = world.servers[0];
    const double f1 = rng.uniform(dev.freq_min_hz, dev.freq_max_hz);
    const double f2 = rng.uniform(f1, dev.freq_max_hz);
    if (f2 > f1) {
      CHECK(comp_delay_s(dev, f2, cfg) < comp_delay_s(dev, f1, cfg));
      CHECK(comp_energy_j(dev, f2, cfg) > comp_energy_j(dev, f1, cfg));
    }
    const double b1 = rng.uniform(0.05, 0.9);
    const double b2 = rng.uniform(b1, 1.0);
    if (b2 > b1) {
      CHECK(comm_cost(dev, b2, server, cfg).delay_s < comm_cost(dev, b1, server, cfg).delay_s);
      CHECK(comm_cost(dev, b2, server, cfg).energy_j < comm_cost(dev, b1, server, cfg).energy_j);
    }
  }
}

TEST_CASE("scaling both weights scales the weighted cost", "[property]") {
  Prng rng(77);
  World world = helpers::random_group_world(3, rng);
  GroupAllocation alloc;
  alloc.server_id = 0;
  alloc.members = {0, 1, 2};
  for (int i = 0; i < 3; ++i) {
    alloc.freqs[i] = rng.uniform(1e9, 1e10);
    alloc.betas[i] = 1.0 / 3.0;
  }
  SystemConfig base = helpers::basic_config(0.3, 0.7);
  SystemConfig scaled = base;
  const double k = 2.5;
  scaled.energy_weight *= k;
  scaled.delay_weight *= k;
  // Note weights above 1 are fine for the formulas themselves.
  const CostBreakdown a = group_cost(alloc, world, base);
  const CostBreakdown b = group_cost(alloc, world, scaled);
  CHECK(b.weighted == Approx(k * a.weighted).epsilon(1e-12));
  CHECK(b.energy_j == Approx(a.energy_j));
  CHECK(b.delay_s == Approx(a.delay_s));
}

#include <catch2/catch.hpp>

#include <cmath>
#include <sstream>

#include "hfel/scenario.hpp"
#include "test_helpers.hpp"

using namespace hfel;

TEST_CASE("generate_scenario") {
  SECTION("rejects impossible geometry") {
    ScenarioParams params;
    params.num_devices = 0;
    params.num_servers = 1;
    CHECK_THROWS_AS(generate_scenario(params, helpers::basic_config()), ScenarioError);
    params.num_devices = 1;
    params.num_servers = 0;
    CHECK_THROWS_AS(generate_scenario(params, helpers::basic_config()), ScenarioError);
  }

  SECTION("one device, one server: availability is trivially nonempty") {
    ScenarioParams params;
    params.num_devices = 1;
    params.num_servers = 1;
    params.seed = 3;
    const Scenario sc = generate_scenario(params, helpers::basic_config());
    CHECK(sc.world.servers[0].available_devices.count(0) == 1);
    CHECK(sc.world.devices[0].channel_gain.count(0) == 1);
  }

  SECTION("draw ranges are respected across many samples") {
    ScenarioParams params;
    params.num_devices = 1000;
    params.num_servers = 10;
    params.seed = 12;
    const Scenario sc = generate_scenario(params, helpers::basic_config());
    for (const DeviceProfile& d : sc.world.devices) {
      CHECK(d.cycles_per_sample >= 30.0);
      CHECK(d.cycles_per_sample <= 100.0);
      CHECK(d.num_samples >= 5.0 * 8e6);
      CHECK(d.num_samples <= 10.0 * 8e6);
      CHECK(d.freq_min_hz == 1e9);
      CHECK(d.freq_max_hz == 1e10);
      CHECK(d.tx_power_w == 0.2);
      CHECK(d.update_nats == 25000.0);
      CHECK_FALSE(d.channel_gain.empty());  // nearest-server fallback prevents orphans
    }
    for (size_t i = 0; i < sc.device_pos.size(); ++i) {
      CHECK(sc.device_pos[i].x >= 0.0);
      CHECK(sc.device_pos[i].x <= params.area_m);
      CHECK(sc.device_pos[i].y >= 0.0);
      CHECK(sc.device_pos[i].y <= params.area_m);
    }
    // Availability honors the radius except for the fallback case.
    for (const DeviceProfile& d : sc.world.devices) {
      if (d.channel_gain.size() > 1)
        for (const auto& [sid, g] : d.channel_gain)
          CHECK(sc.distance(d.id, sid) <= params.avail_radius_m);
    }
  }

  SECTION("gains follow the distance power law") {
    ScenarioParams params;
    params.num_devices = 20;
    params.num_servers = 3;
    params.seed = 9;
    const Scenario sc = generate_scenario(params, helpers::basic_config());
    for (const DeviceProfile& d : sc.world.devices)
      for (const auto& [sid, g] : d.channel_gain) {
        const double l = std::max(sc.distance(d.id, sid), params.pathloss_ref_m);
        CHECK(g == Approx(std::pow(1.0 / l, 3.0)).epsilon(1e-12));
      }
  }
}

TEST_CASE("scenario files") {
  ScenarioParams params;
  params.num_devices = 8;
  params.num_servers = 3;
  params.seed = 77;
  const SystemConfig cfg = helpers::basic_config(0.3, 0.7);
  const Scenario sc = generate_scenario(params, cfg);

  SECTION("same seed, byte-identical file") {
    std::ostringstream a, b;
    save_scenario(sc, a);
    save_scenario(generate_scenario(params, cfg), b);
    CHECK(a.str() == b.str());
  }

  SECTION("round trip preserves everything the model reads") {
    std::ostringstream out;
    save_scenario(sc, out);
    std::istringstream in(out.str());
    const Scenario back = load_scenario(in);
    REQUIRE(back.world.devices.size() == sc.world.devices.size());
    REQUIRE(back.world.servers.size() == sc.world.servers.size());
    CHECK(back.cfg.energy_weight == sc.cfg.energy_weight);
    CHECK(back.cfg.noise_w == sc.cfg.noise_w);
    for (size_t i = 0; i < sc.world.devices.size(); ++i) {
      const DeviceProfile& d0 = sc.world.devices[i];
      const DeviceProfile& d1 = back.world.devices[i];
      CHECK(d0.cycles_per_sample == d1.cycles_per_sample);
      CHECK(d0.num_samples == d1.num_samples);
      CHECK(d0.channel_gain == d1.channel_gain);
    }
    for (size_t k = 0; k < sc.world.servers.size(); ++k)
      CHECK(sc.world.servers[k].available_devices == back.world.servers[k].available_devices);
    // And the save of the loaded scenario is byte-identical.
    std::ostringstream out2;
    save_scenario(back, out2);
    CHECK(out2.str() == out.str());
  }

  SECTION("parse errors name the offending field") {
    std::istringstream in("format_version 1\nseed notanumber\n");
    try {
      load_scenario(in);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("seed") != std::string::npos);
    }

    std::istringstream missing("format_version 1\nseed 1\n");
    try {
      load_scenario(missing);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("missing header field") != std::string::npos);
    }

    std::ostringstream out;
    save_scenario(sc, out);
    std::string corrupted = out.str();
    corrupted.replace(corrupted.find("[gains]"), 7, "[wrong]");
    std::istringstream bad(corrupted);
    CHECK_THROWS_AS(load_scenario(bad), FormatError);
  }
}

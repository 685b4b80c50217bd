#include <cmath>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "edgeml/common/error.hpp"
#include "edgeml/plantsim/plant.hpp"

using namespace edgeml;
using namespace edgeml::plantsim;

namespace {

ChillerSpec spec_with(double nominal, double a, double b, double aging) {
  ChillerSpec s;
  s.id = "c1";
  s.rated_capacity_kw = 100.0;
  s.nominal_cop = nominal;
  s.curve_a = a;
  s.curve_b = b;
  s.aging_rate = aging;
  return s;
}

PlantConfig one_chiller(double sigma = 0.0) {
  PlantConfig c;
  ChillerSpec s = spec_with(5.0, 0.8, 0.01, 0.0);
  s.mass_flow_kg_s = 10.0;
  c.chillers = {s};
  c.ambient_profile = {{0.0, 20.0}, {12.0, 30.0}};
  c.sensor_noise_sigma = sigma;
  c.seed = 7;
  return c;
}

double value_of(const std::vector<TimePoint>& pts, const std::string& series) {
  for (const auto& p : pts)
    if (p.series == series) return p.value;
  ADD_FAILURE() << "missing series " << series;
  return NAN;
}

}  // namespace

TEST(CopTrue, PeaksAtThreeQuarterLoad) {
  EXPECT_DOUBLE_EQ(cop_true(spec_with(5, 0.8, 0, 0), 0.75, 7.0, 0.0), 5.0);
}

TEST(CopTrue, HalfLoadFollowsQuadratic) {
  // 5 * (1 - 0.8 * 0.0625)
  EXPECT_NEAR(cop_true(spec_with(5, 0.8, 0, 0), 0.5, 7.0, 0.0), 4.75, 1e-12);
}

TEST(CopTrue, AgingScalesLinearly) {
  EXPECT_NEAR(cop_true(spec_with(5, 0, 0, 0.05), 1.0, 7.0, 4.0), 4.0, 1e-12);
}

TEST(CopTrue, RejectsPlrBelowMinimum) {
  EXPECT_THROW(cop_true(spec_with(5, 0, 0, 0), 0.1, 7.0, 0.0), Error);
  EXPECT_THROW(cop_true(spec_with(5, 0, 0, 0), 1.2, 7.0, 0.0), Error);
}

TEST(CopTrue, StrictlyDecreasingInAge) {
  const ChillerSpec s = spec_with(5.5, 0.6, 0.01, 0.04);
  double prev = cop_true(s, 0.6, 25.0, 0.0);
  for (double age = 0.5; age < 20.0; age += 0.5) {
    double now = cop_true(s, 0.6, 25.0, age);
    EXPECT_LT(now, prev) << "age " << age;
    prev = now;
  }
}

TEST(DemandAt, StepSemantics) {
  DemandTrace one{{{0, 100.0}}};
  EXPECT_EQ(demand_at(one, 50), 100.0);
  DemandTrace two{{{0, 100.0}, {60, 200.0}}};
  EXPECT_EQ(demand_at(two, 59), 100.0);
  EXPECT_EQ(demand_at(two, 60), 200.0);
  EXPECT_EQ(demand_at(two, -5), 100.0);
}

TEST(Ambient, InterpolatesAndWraps) {
  std::vector<AmbientPoint> p{{0.0, 20.0}, {12.0, 30.0}};
  EXPECT_DOUBLE_EQ(ambient_at(p, 0.0), 20.0);
  EXPECT_DOUBLE_EQ(ambient_at(p, 6 * 3600.0), 25.0);
  EXPECT_DOUBLE_EQ(ambient_at(p, 18 * 3600.0), 25.0);
  EXPECT_DOUBLE_EQ(ambient_at(p, 24 * 3600.0), 20.0);
}

TEST(Plant, SetpointsApplied) {
  PlantConfig c = one_chiller();
  ChillerSpec s2 = c.chillers[0];
  s2.id = "c2";
  c.chillers.push_back(s2);
  Plant plant(c);
  const std::vector<double> plan{0.5, 0.7};
  plant.apply_setpoints(plan);
  plant.step(1);
  EXPECT_DOUBLE_EQ(plant.state(0).cooling_kw, 50.0);
  EXPECT_DOUBLE_EQ(plant.state(1).cooling_kw, 70.0);
  const std::vector<double> off{0.0, 0.0};
  plant.apply_setpoints(off);
  plant.step(1);
  EXPECT_FALSE(plant.state(0).online);
  EXPECT_FALSE(plant.state(1).online);
}

TEST(Plant, RejectsBadSetpointsWithoutChangingState) {
  Plant plant(one_chiller());
  const std::vector<double> ok{0.5};
  plant.apply_setpoints(ok);
  const std::vector<double> below{0.1};
  EXPECT_THROW(plant.apply_setpoints(below), Error);
  const std::vector<double> wrong_len{0.5, 0.5};
  EXPECT_THROW(plant.apply_setpoints(wrong_len), Error);
  EXPECT_EQ(plant.state(0).plr, 0.5);
}

TEST(Plant, AllOffEmitsZeroPower) {
  Plant plant(one_chiller(0.3));
  auto pts = plant.step(1);
  EXPECT_EQ(value_of(pts, "device.c1.power_kw"), 0.0);
  EXPECT_EQ(value_of(pts, "device.c1.mass_flow_kg_s"), 0.0);
  EXPECT_TRUE(std::isfinite(value_of(pts, "device.weather.t_ambient_c")));
}

TEST(Plant, TemperatureRiseMatchesHeatBalance) {
  Plant plant(one_chiller());
  const std::vector<double> plan{0.5};
  plant.apply_setpoints(plan);
  auto pts = plant.step(1);
  const double dt = value_of(pts, "device.c1.t_in_c") - value_of(pts, "device.c1.t_out_c");
  EXPECT_NEAR(dt, 50.0 / (10.0 * 4.186), 1e-12);
  EXPECT_NEAR(dt, 1.1945, 1e-4);
}

TEST(Plant, EnergyConsistencyWithoutNoise) {
  Plant plant(one_chiller());
  for (double plr : {0.3, 0.45, 0.75, 0.9, 1.0}) {
    const std::vector<double> plan{plr};
    plant.apply_setpoints(plan);
    for (int k = 0; k < 50; ++k) {
      plant.step(37);
      const auto& st = plant.state(0);
      const double cop = cop_true(plant.config().chillers[0], plr, plant.ambient_c(), 0.0);
      EXPECT_NEAR(st.power_kw * cop, st.cooling_kw, 1e-12 * st.cooling_kw);
    }
  }
}

TEST(Plant, DeterministicForSameSeed) {
  auto run = [] {
    Plant plant(one_chiller(0.5));
    std::vector<TimePoint> all;
    const std::vector<double> plan{0.6};
    plant.apply_setpoints(plan);
    for (int k = 0; k < 20; ++k) {
      auto pts = plant.step(k % 3 + 1);
      all.insert(all.end(), pts.begin(), pts.end());
    }
    return all;
  };
  EXPECT_EQ(run(), run());
}

TEST(Plant, AccumulatesTrueEnergy) {
  Plant plant(one_chiller());
  const std::vector<double> plan{0.75};
  plant.apply_setpoints(plan);
  plant.step(3600);
  EXPECT_NEAR(plant.true_energy_kwh(), plant.state(0).power_kw, 1e-9);
  EXPECT_NEAR(plant.true_cooling_kwh(), 75.0, 1e-9);
}

TEST(PlantConfigJson, RoundTripsAndValidates) {
  PlantConfig c = one_chiller(0.1);
  nlohmann::json j = c;
  PlantConfig back = j.get<PlantConfig>();
  EXPECT_EQ(back.chillers.size(), 1u);
  EXPECT_EQ(back.chillers[0].mass_flow_kg_s, 10.0);
  EXPECT_EQ(back.ambient_profile.size(), 2u);
  EXPECT_EQ(back.seed, 7u);

  c.chillers[0].nominal_cop = 12.0;
  EXPECT_THROW(validate(c), Error);
  c = one_chiller();
  c.ambient_profile.clear();
  EXPECT_THROW(validate(c), Error);
}

TEST(DemandTraceJson, PairsArray) {
  auto j = nlohmann::json::parse("[[0, 100.5], [60, 200]]");
  DemandTrace t = j.get<DemandTrace>();
  ASSERT_EQ(t.points.size(), 2u);
  EXPECT_EQ(t.points[1].first, 60);
  EXPECT_EQ(t.points[1].second, 200.0);
  DemandTrace bad{{{10, 1.0}, {10, 2.0}}};
  EXPECT_THROW(validate(bad), Error);
}

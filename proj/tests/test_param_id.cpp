#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "doctest.h"
#include "tankmpc/param_id.hpp"

using namespace tankmpc;

namespace {

IdSample make_sample(double t, double temp, double pl, double pu, double ta) {
  return {t, std::vector<double>(8, temp), pl, pu, 0.0, ta};
}

// Alternating heat/rest segments generated by the one-node Euler step.
IdDataset one_node_data(const OneNodeParams& par, double dt, int cycles, int pairs, double sigma,
                        std::mt19937_64& rng) {
  const AmbientConditions amb;
  std::normal_distribution<double> noise(0.0, sigma);
  IdDataset d;
  double t = 0.0;
  for (int c = 0; c < cycles; ++c) {
    double temp = 300.0 + 5.0 * (c % 5);
    for (int reg = 0; reg < 2; ++reg) {
      IdSegment seg{reg == 0 ? Regime::heating_cycle : Regime::at_rest, {}};
      const double p = reg == 0 ? 1130.0 : 0.0;
      for (int k = 0; k <= pairs; ++k) {
        const double pk = k < pairs ? p : 0.0;
        seg.samples.push_back(make_sample(t + k * dt, temp + (sigma > 0.0 ? noise(rng) : 0.0), pk, 0.0, amb.t_ambient));
        if (k < pairs) temp = one_node_step({temp}, p, 0.0, amb, par, dt).temp;
      }
      t += (pairs + 1) * dt;
      d.segments.push_back(std::move(seg));
    }
  }
  return d;
}

IdSample three_node_sample(double t, const ThreeNodeState& s, double pm, double pu, double ta) {
  IdSample out{t, std::vector<double>(8, 0.5 * (s.lower + s.upper)), pm, pu, 0.0, ta};
  out.sensors[sensor_index(1)] = s.lower;
  out.sensors[sensor_index(7)] = s.middle;
  out.sensors[sensor_index(8)] = s.upper;
  return out;
}

IdDataset three_node_data(const ThreeNodeParams& par, double dt) {
  const AmbientConditions amb;
  IdDataset d;
  double t = 0.0;
  const ThreeNodeState starts[] = {{295.0, 300.0, 310.0}, {300.0, 320.0, 322.0}, {293.0, 293.5, 330.0}};
  for (const auto& s0 : starts) {
    ThreeNodeState s = s0;
    for (int reg = 0; reg < 2; ++reg) {
      IdSegment seg{reg == 0 ? Regime::heating_cycle : Regime::at_rest, {}};
      for (int k = 0; k <= 24; ++k) {
        // Both elements during heating, with the upper one switched at times.
        const double pm = (reg == 0 && k < 24) ? 1130.0 : 0.0;
        const double pu = (reg == 0 && k < 24 && k % 3 != 0) ? 1130.0 : 0.0;
        seg.samples.push_back(three_node_sample(t + k * dt, s, pm, pu, amb.t_ambient));
        if (k < 24) s = three_node_step(s, pm, pu, 0.0, amb, par, dt);
      }
      t += 25.0 * dt;
      d.segments.push_back(std::move(seg));
    }
  }
  return d;
}

double rel(double est, double truth) { return std::abs(est / truth - 1.0); }

}  // namespace

TEST_CASE("one-node recovery from model data") {
  std::mt19937_64 rng(1);
  const OneNodeParams truth{0.156, 1.27};
  const IdDataset d = one_node_data(truth, 300.0, 3, 12, 0.0, rng);
  const RegressionSystem sys = build_regression_one_node(d, 300.0);
  CHECK(sys.pairs == 3 * 2 * 12);
  CHECK(sys.labels == std::vector<std::string>{"V", "U"});
  const OlsResult r = ols_solve(sys);
  CHECK(rel(r.theta[0], truth.volume) <= 1e-9);
  CHECK(rel(r.theta[1], truth.ua) <= 1e-9);
  CHECK(r.rms_residual.size() == 1);
  CHECK(r.rms_residual[0] <= 1e-6);
  CHECK(r.condition_number >= 1.0);
  const OneNodeParams p = to_one_node_params(r);
  CHECK(p.volume == r.theta[0]);
  CHECK_THROWS_AS(to_three_node_params(r, 0.19), InputError);
}

TEST_CASE("exactly determined system") {
  // Two pairs: a heating step and a resting step, solved by hand.
  const double rc = PhysicalConstants::volumetric_heat_capacity;
  IdDataset d;
  d.segments.push_back({Regime::heating_cycle, {make_sample(0, 320.0, 1000.0, 0, 300.0), make_sample(100, 320.5, 0, 0, 300.0)}});
  d.segments.push_back({Regime::at_rest, {make_sample(500, 330.0, 0, 0, 300.0), make_sample(600, 329.99, 0, 0, 300.0)}});
  const OlsResult r = ols_solve(build_regression_one_node(d, 100.0));
  // Rest: rc V (-0.01) + 100 U 30 = 0;  heat: rc V 0.5 + 100 U 20 = 1e5.
  const double v = 1e5 / (rc * (0.5 + 0.01 * 20.0 / 30.0));
  const double u = rc * v * 0.01 / 3000.0;
  CHECK(r.theta[0] == doctest::Approx(v).epsilon(1e-12));
  CHECK(r.theta[1] == doctest::Approx(u).epsilon(1e-10));
}

TEST_CASE("three-node recovery from model data") {
  const ThreeNodeParams truth;
  const double v_total = truth.v_total;
  const IdDataset d = three_node_data(truth, 300.0);
  const RegressionSystem sys = build_regression_three_node(d, 300.0, v_total);
  CHECK(sys.rows_per_pair() == 3);
  CHECK(sys.w.rows() == static_cast<Eigen::Index>(3 * sys.pairs));
  const OlsResult r = ols_solve(sys);
  const double expect[] = {truth.u_lower, truth.u_middle, truth.u_upper, truth.k_ml, truth.k_um, truth.v_middle,
                           truth.v_upper};
  for (int i = 0; i < 7; ++i) {
    INFO(r.labels[static_cast<std::size_t>(i)]);
    CHECK(rel(r.theta[static_cast<std::size_t>(i)], expect[i]) <= 1e-9);
  }
  const ThreeNodeParams p = to_three_node_params(r, v_total);
  CHECK(p.v_lower() + p.v_middle + p.v_upper == doctest::Approx(v_total).epsilon(1e-15));
  CHECK(p.v_lower() == doctest::Approx(truth.v_lower()).epsilon(1e-8));
}

TEST_CASE("three-node blocks have the fixed sparsity") {
  const IdDataset d = three_node_data({}, 300.0);
  const RegressionSystem sys = build_regression_three_node(d, 300.0, 0.1893);
  const bool pattern[3][7] = {{0, 0, 1, 0, 1, 0, 1}, {0, 1, 0, 1, 1, 1, 0}, {1, 0, 0, 1, 0, 1, 1}};
  for (std::size_t j = 0; j < sys.pairs; ++j) {
    int nonzero = 0;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 7; ++c) {
        const double v = sys.w(static_cast<Eigen::Index>(3 * j + r), c);
        if (!pattern[r][c]) CHECK(v == 0.0);
        nonzero += v != 0.0;
      }
    }
    CHECK(nonzero <= 11);
  }
  // Target of the lower equation is V rc (T_l(j) - T_l(j+1)).
  const auto& a = d.segments[0].samples[0];
  const auto& b = d.segments[0].samples[1];
  CHECK(sys.z(2) == doctest::Approx(0.1893 * PhysicalConstants::volumetric_heat_capacity *
                                    (a.sensors[0] - b.sensors[0])));
  CHECK(sys.z(0) == 300.0 * a.p_upper);
  CHECK(sys.z(1) == 300.0 * a.p_lower);
}

TEST_CASE("isothermal data at ambient is rank deficient") {
  const double ta = AmbientConditions{}.t_ambient;
  IdDataset rest;
  IdSegment seg{Regime::at_rest, {}};
  for (int k = 0; k < 10; ++k) seg.samples.push_back(make_sample(300.0 * k, ta, 0, 0, ta));
  rest.segments.push_back(seg);
  try {
    ols_solve(build_regression_one_node(rest, 300.0));
    FAIL("expected rank deficiency");
  } catch (const RankDeficientError& e) {
    CHECK(e.directions().size() == 2);
    CHECK(std::string(e.what()).find("U=") != std::string::npos);
  }

  // Heating pairs that all start at ambient leave only the U column empty.
  IdDataset heat;
  for (int k = 0; k < 4; ++k) {
    heat.segments.push_back({Regime::heating_cycle,
                             {make_sample(1000.0 * k, ta, 500.0 + 100 * k, 0, ta),
                              make_sample(1000.0 * k + 300.0, ta + 0.3 + 0.05 * k, 0, 0, ta)}});
  }
  try {
    ols_solve(build_regression_one_node(heat, 300.0));
    FAIL("expected rank deficiency");
  } catch (const RankDeficientError& e) {
    REQUIRE(e.directions().size() == 1);
    CHECK(std::abs(e.directions()[0][0]) <= 1e-12);
    CHECK(std::abs(e.directions()[0][1]) == doctest::Approx(1.0));
  }

  IdSegment iso{Regime::at_rest, {}};
  for (int k = 0; k < 10; ++k) {
    ThreeNodeState s{ta, ta, ta};
    iso.samples.push_back(three_node_sample(300.0 * k, s, 0, 0, ta));
  }
  CHECK_THROWS_AS(ols_solve(build_regression_three_node({{iso}}, 300.0, 0.19)), RankDeficientError);
}

TEST_CASE("too little data") {
  IdDataset d;
  d.segments.push_back({Regime::heating_cycle, {make_sample(0, 320, 1000, 0, 300), make_sample(300, 321, 0, 0, 300)}});
  CHECK_THROWS_AS(build_regression_one_node(d, 300.0), InputError);
  CHECK_THROWS_AS(build_regression_three_node(d, 300.0, 0.19), InputError);
  // Pairs at the wrong spacing are skipped, not used.
  CHECK_THROWS_AS(build_regression_one_node(d, 600.0), InputError);
}

TEST_CASE("scale covariance") {
  std::mt19937_64 rng(3);
  const IdDataset d = one_node_data({0.156, 1.27}, 300.0, 2, 12, 0.05, rng);
  const OlsResult base = ols_solve(build_regression_one_node(d, 300.0));
  for (double c : {0.01, 3.0, 1e4}) {
    // Temperatures relative to ambient and powers scaled together.
    IdDataset s = d;
    for (auto& seg : s.segments) {
      for (auto& smp : seg.samples) {
        for (double& v : smp.sensors) v = smp.t_ambient + c * (v - smp.t_ambient);
        smp.p_lower *= c;
      }
    }
    const OlsResult r = ols_solve(build_regression_one_node(s, 300.0));
    CHECK(rel(r.theta[0], base.theta[0]) <= 1e-9);
    CHECK(rel(r.theta[1], base.theta[1]) <= 1e-9);
  }
}

TEST_CASE("noisy estimates converge with more data") {
  // sigma = 0.1 K on every reading, pairs one hour apart. Error is the RMS
  // over seeds of the larger relative parameter error.
  const OneNodeParams truth{0.156, 1.27};
  auto error = [&](int cycles) {
    double ss = 0.0;
    const int seeds = 40;
    for (int seed = 0; seed < seeds; ++seed) {
      std::mt19937_64 rng(static_cast<unsigned long>(1000 + seed));
      const OlsResult r = ols_solve(build_regression_one_node(one_node_data(truth, 3600.0, cycles, 3, 0.1, rng), 3600.0));
      const double e = std::max(rel(r.theta[0], truth.volume), rel(r.theta[1], truth.ua));
      ss += e * e;
    }
    return std::sqrt(ss / seeds);
  };
  const double small = error(2);
  const double large = error(20);
  MESSAGE("relative error at 1x " << small << ", at 10x " << large);
  CHECK(large * 2.0 <= small);
}

TEST_CASE("plausibility gate warns without altering estimates") {
  OlsResult r;
  r.labels = {"V", "U"};
  r.theta = {0.3, -1.0};
  check_plausibility(r, 0.19);
  CHECK(r.theta == std::vector<double>{0.3, -1.0});
  REQUIRE(r.warnings.size() == 2);
  CHECK(r.warnings[0].find("U estimate") != std::string::npos);
  CHECK(r.warnings[1].find("exceeds") != std::string::npos);

  OlsResult t;
  t.labels = {"U_l", "U_m", "U_u", "K_ml", "K_um", "V_m", "V_u"};
  t.theta = {1, 1, 1, 1, 1, 0.1, 0.1};
  check_plausibility(t, 0.19);
  CHECK(t.warnings.size() == 1);
  OlsResult fine = t;
  fine.warnings.clear();
  fine.theta[6] = 0.05;
  check_plausibility(fine, 0.19);
  CHECK(fine.warnings.empty());
}

TEST_CASE("resampling keeps endpoints and energy") {
  IdDataset d;
  IdSegment seg{Regime::heating_cycle, {}};
  for (int k = 0; k <= 900; ++k) {
    IdSample s = make_sample(k, 300.0 + 0.001 * k, (k % 7 < 3) ? 1130.0 : 0.0, (k % 11 == 0) ? 500.0 : 0.0, 294.0);
    seg.samples.push_back(s);
  }
  d.segments.push_back(seg);
  const IdDataset r = resample(d, 300.0);
  REQUIRE(r.segments.size() == 1);
  const auto& rs = r.segments[0].samples;
  REQUIRE(rs.size() == 4);
  for (int j = 0; j < 3; ++j) {
    CHECK(rs[j].t == 300.0 * j);
    CHECK(rs[j].sensors[0] == doctest::Approx(300.0 + 0.3 * j));
    double el = 0.0, eu = 0.0;
    for (int k = 300 * j; k < 300 * (j + 1); ++k) {
      el += seg.samples[k].p_lower;
      eu += seg.samples[k].p_upper;
    }
    CHECK(rs[j].p_lower * 300.0 == doctest::Approx(el).epsilon(1e-12));
    CHECK(rs[j].p_upper * 300.0 == doctest::Approx(eu).epsilon(1e-12));
  }
  CHECK(rs[3].t == 900.0);
  CHECK_THROWS_AS(resample(d, 0.0), InputError);

  IdDataset uneven;
  uneven.segments.push_back({Regime::at_rest, {make_sample(0, 300, 0, 0, 294), make_sample(7, 300, 0, 0, 294),
                                               make_sample(14, 300, 0, 0, 294)}});
  CHECK_THROWS_AS(resample(uneven, 10.0), InputError);
}

TEST_CASE("dataset validation") {
  IdDataset d;
  d.segments.push_back({Regime::at_rest, {make_sample(0, 300, 100, 0, 294), make_sample(1, 300, 0, 0, 294)}});
  CHECK_THROWS_AS(d.validate(), InputError);
  d.segments[0] = {Regime::heating_cycle, {make_sample(0, 300, 0, 0, 294), make_sample(1, 300, 0, 0, 294)}};
  CHECK_THROWS_AS(d.validate(), InputError);
  d.segments[0] = {Regime::heating_cycle, {make_sample(1, 300, 10, 0, 294), make_sample(1, 300, 0, 0, 294)}};
  CHECK_THROWS_AS(d.validate(), InputError);
  IdSample flowing = make_sample(0, 300, 0, 0, 294);
  flowing.flow = 1e-5;
  d.segments[0] = {Regime::at_rest, {flowing, make_sample(1, 300, 0, 0, 294)}};
  CHECK_THROWS_AS(d.validate(), InputError);
}

TEST_CASE("trajectory log parsing and segmentation") {
  std::ostringstream csv;
  csv << "time_s";
  for (int s = 1; s <= 8; ++s) csv << ",sensor" << s << "_k";
  csv << ",p_lower_w,p_upper_w,flow_m3_per_s\n";
  // Each row: state after the step, inputs during it.
  const double pl[] = {0, 1000, 1000, 0, 0, 0, 0, 0};
  const double fl[] = {0, 0, 0, 0, 2e-5, 0, 0, 0};
  for (int k = 0; k < 8; ++k) {
    csv << k * 10.0;
    for (int s = 0; s < 8; ++s) csv << ',' << 300.0 + k;
    csv << ',' << pl[k] << ",0," << fl[k] << '\n';
  }
  std::istringstream is(csv.str());
  const auto samples = read_trajectory_csv(is, 294.0);
  REQUIRE(samples.size() == 8);
  CHECK(samples[0].p_lower == 1000.0);
  CHECK(samples[1].p_lower == 1000.0);
  CHECK(samples[2].p_lower == 0.0);
  CHECK(samples[3].flow == 2e-5);
  CHECK(samples[7].t_ambient == 294.0);

  const IdDataset d = segment_log(samples);
  REQUIRE(d.segments.size() == 3);
  CHECK(d.segments[0].regime == Regime::heating_cycle);
  CHECK(d.segments[0].samples.size() == 3);
  CHECK(d.segments[0].samples.back().p_lower == 0.0);
  CHECK(d.segments[1].regime == Regime::at_rest);
  CHECK(d.segments[1].samples.size() == 2);
  CHECK(d.segments[2].regime == Regime::at_rest);
  CHECK(d.segments[2].samples.front().t == 40.0);
  CHECK(d.segments[2].samples.back().t == 70.0);
  CHECK_NOTHROW(d.validate());

  std::istringstream missing("time_s,p_lower_w\n0,0\n");
  CHECK_THROWS_AS(read_trajectory_csv(missing, 294.0), InputError);
  std::istringstream bad(csv.str().substr(0, csv.str().find('\n') + 1) + "0,x,1,2,3,4,5,6,7,8,9,10\n");
  CHECK_THROWS_AS(read_trajectory_csv(bad, 294.0), InputError);
}

TEST_CASE("report and parameter output") {
  std::mt19937_64 rng(4);
  OlsResult r = ols_solve(build_regression_one_node(one_node_data({0.156, 1.27}, 300.0, 1, 12, 0.0, rng), 300.0));
  r.warnings.push_back("note");
  std::ostringstream js;
  write_id_report_json(r, "one-node", js);
  const auto j = nlohmann::json::parse(js.str());
  CHECK(j["model"] == "one-node");
  CHECK(j["theta"]["V"].get<double>() == doctest::Approx(0.156));
  CHECK(j["sample_pairs"] == 24);
  CHECK(j["warnings"].size() == 1);
  CHECK(j.contains("condition_number"));
  CHECK(j["rms_residual_j"].contains("tank"));

  std::ostringstream ini;
  write_params_section(OneNodeParams{0.156, 1.27}, ini);
  CHECK(ini.str() == "[one_node]\nvolume_m3 = 0.156\nua_w_per_k = 1.27\n");
}

TEST_CASE("simulator data: well-mixed versus stratified training") {
  const TankSpec tank;
  const AmbientConditions amb;
  const SimParams sim = SimParams::for_tank(tank);
  IdProtocol mixed;
  const IdDataset dm = resample(collect_id_data(tank, amb, sim, mixed), 300.0);
  OlsResult rm = ols_solve(build_regression_one_node(dm, 300.0));
  check_plausibility(rm, tank.total_volume);
  const double above = tank.total_volume * (1.0 - tank.lower_element_height_frac);
  MESSAGE("well-mixed V " << rm.theta[0] << " U " << rm.theta[1] << " volume above the lower element " << above);
  CHECK(std::abs(rm.theta[0] / above - 1.0) <= 0.30);
  CHECK(rm.warnings.empty());

  IdProtocol strat;
  strat.initial = IdInitialCondition::stratified;
  strat.cold_temp = amb.t_inlet;
  const IdDataset ds = resample(collect_id_data(tank, amb, sim, strat), 300.0);
  const OlsResult rs = ols_solve(build_regression_one_node(ds, 300.0));
  MESSAGE("stratified V " << rs.theta[0] << " U " << rs.theta[1]);
  CHECK(rs.theta[0] < rm.theta[0]);
  CHECK(rs.theta[1] > rm.theta[1]);
}

TEST_CASE("simulator data: three-node volumes") {
  const TankSpec tank;
  const AmbientConditions amb;
  const SimParams sim = SimParams::for_tank(tank);
  IdProtocol proto;
  proto.initial = IdInitialCondition::stratified;
  proto.cold_temp = amb.t_inlet;
  proto.both_elements = true;
  const IdDataset d = resample(collect_id_data(tank, amb, sim, proto), 300.0);
  REQUIRE(d.segments.size() == 2);
  CHECK(d.segments[0].regime == Regime::heating_cycle);
  CHECK(d.segments[1].regime == Regime::at_rest);
  OlsResult r = ols_solve(build_regression_three_node(d, 300.0, tank.total_volume));
  check_plausibility(r, tank.total_volume);
  for (const auto& w : r.warnings) MESSAGE(w);
  const ThreeNodeParams p = to_three_node_params(r, tank.total_volume);
  CHECK(p.v_lower() + p.v_middle + p.v_upper == doctest::Approx(tank.total_volume).epsilon(1e-15));
  CHECK(p.v_middle > 0.0);
  CHECK(p.v_upper > 0.0);
  CHECK(p.v_lower() > 0.0);
}

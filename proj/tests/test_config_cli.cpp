#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "qfield/cli.hpp"

using namespace qfield;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "qfield");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> v;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

std::string temp_config(const std::string& body) {
  static int counter = 0;
  const std::string path = ::testing::TempDir() + "qfield_cfg_" + std::to_string(counter++) + ".json";
  std::ofstream(path) << body;
  return path;
}

}  // namespace

TEST(Config, DefaultsRoundTripThroughJson) {
  const Config c = config_from_json(nlohmann::json::object());
  const Config back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_DOUBLE_EQ(c.magnet.inner_radius, 29e-3);
  EXPECT_DOUBLE_EQ(c.atom.system().nuclear_g, HyperfineSystem::magnesium25().nuclear_g);
}

TEST(Config, ParsesUnitStrings) {
  const auto c = config_from_json(nlohmann::json::parse(
      R"({"magnet": {"face_distance": "225 mm", "remanence": "1170 mT"},
          "stabilization": {"interval": "20 min"}, "operating": {"coupling": {"MW0": "0.161 MHz"}}})"));
  EXPECT_DOUBLE_EQ(c.magnet.face_distance, 0.225);
  EXPECT_DOUBLE_EQ(c.magnet.remanence, 1.17);
  EXPECT_DOUBLE_EQ(c.stabilization.interval, 1200.0);
  EXPECT_DOUBLE_EQ(c.operating.coupling_for(TransitionTag::MW0), 161e3);
}

TEST(Config, ShippedConfigMatchesDefaults) {
  const nlohmann::json loaded = config_to_json(load_config(QFIELD_SOURCE_DIR "/configs/default.json"));
  const nlohmann::json reference = config_to_json(Config{});
  for (const auto& [section, body] : reference.items())
    for (const auto& [key, value] : body.items()) {
      const auto& got = loaded[section][key];
      if (value.is_string() && got != value && section != "operating") {
        const double a = std::stod(got.get<std::string>()), b = std::stod(value.get<std::string>());
        EXPECT_NEAR(a, b, 1e-12 * std::abs(b)) << section << "." << key;
      } else if (value.is_number()) {
        EXPECT_NEAR(got.get<double>(), value.get<double>(), 1e-12 * std::abs(value.get<double>())) << section << "." << key;
      }
    }
  const Config c = load_config(QFIELD_SOURCE_DIR "/configs/default.json");
  EXPECT_NEAR(c.operating.field, 10.9584e-3, 1e-15);
  EXPECT_NEAR(c.operating.b0_angle, constants::pi / 6, 1e-12);
  EXPECT_EQ(c.operating.rf_polarisation, "in_plane");
}

TEST(Config, Errors) {
  using nlohmann::json;
  EXPECT_THROW(config_from_json(json::parse(R"({"magnet": {"face_distanse": "223mm"}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"magnet": {"face_distance": 0.223}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"magnet": {"face_distance": "223 mT"}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"magnet": {"face_distance": "-1 mm"}})")), InvalidGeometry);
  EXPECT_THROW(config_from_json(json::parse(R"({"bogus": {}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"atom": {"nuclear_g_convention": "other"}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"operating": {"coupling": {"MW5": "1 kHz"}}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"simulation": {"shots": 0}})")), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/qfield.json"), ConfigError);
}

TEST(Config, NuclearGConventions) {
  using nlohmann::json;
  const auto a = config_from_json(json::parse(R"({"atom": {"nuclear_g_convention": "nuclear_magneton", "nuclear_g": -0.34218}})"));
  const auto b = config_from_json(
      json::parse(R"({"atom": {"nuclear_g_convention": "bohr_magneton", "nuclear_g": 1.8636e-4}})"));
  EXPECT_NEAR(a.atom.system().nuclear_g, b.atom.system().nuclear_g, 1e-8);
}

TEST(Cli, HelpListsEverySubcommand) {
  const auto r = run_cli({"--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* name : {"field-map", "dsv", "transitions", "clock-field", "sense-acz", "ramsey-sim", "echo-sim",
                           "stabilize-sim"})
    EXPECT_NE(r.out.find(name), std::string::npos) << name;
}

TEST(Cli, TransitionsTable) {
  const auto r = run_cli({"transitions", "--B", "10.9584mT"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto l = lines(r.out);
  ASSERT_EQ(l.size(), 5u);
  EXPECT_EQ(l[0], "tag,freq_Hz,sens_Hz_per_T,curv_Hz_per_T2");
  EXPECT_EQ(l[3].substr(0, 4), "MW2,");
  const double f = std::stod(l[3].substr(4));
  EXPECT_NEAR(f, 1762.97381160e6, 5e3);
  EXPECT_NE(r.err.find("config: {"), std::string::npos);
}

TEST(Cli, ClockField) {
  const auto r = run_cli({"clock-field", "--transition", "MW2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(j["field_T"].get<double>(), 10.958e-3, 0.02e-3);
}

TEST(Cli, FieldMapAxis) {
  const auto r = run_cli({"field-map", "--axis", "z", "--range", "5mm"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto l = lines(r.out);
  EXPECT_EQ(l[0], "z_m,Bz_T");
  bool found = false;
  for (const auto& row : l) {
    if (row.rfind("0,", 0) == 0) {
      found = true;
      EXPECT_NEAR(std::stod(row.substr(2)), 10.9e-3, 0.05 * 10.9e-3);
    }
  }
  EXPECT_TRUE(found);
  const auto r2 = run_cli({"field-map", "--axis", "z", "--range", "5mm", "--step", "0.2mm"});
  EXPECT_NEAR(static_cast<double>(lines(r2.out).size() - 1), (l.size() - 1) / 2.0, 1.0);
}

TEST(Cli, FieldMap3dHeader) {
  const auto r = run_cli({"field-map", "--axis", "3d", "--range", "1mm", "--step", "1mm"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto l = lines(r.out);
  EXPECT_EQ(l[0], "x_m,y_m,z_m,Bx_T,By_T,Bz_T");
  EXPECT_EQ(l.size(), 28u);
}

TEST(Cli, EmptyRangeNamesTheFlag) {
  const auto r = run_cli({"field-map", "--range", "0mm"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--range"), std::string::npos);
  const auto r2 = run_cli({"field-map", "--range", "5 parsecs"});
  EXPECT_EQ(r2.code, 2);
  EXPECT_NE(r2.err.find("--range"), std::string::npos);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"no-such-command"}).code, 2);
  EXPECT_EQ(run_cli({"--config", "/nonexistent.json", "transitions"}).code, 2);
  EXPECT_EQ(run_cli({"--config", temp_config(R"({"magnet": {"colour": "red"}})"), "transitions"}).code, 2);
  // No zero crossing of the MW0 sensitivity: numerical failure.
  EXPECT_EQ(run_cli({"clock-field", "--transition", "MW0"}).code, 3);
  EXPECT_EQ(run_cli({"clock-field", "--transition", "MW7"}).code, 2);
}

TEST(Cli, ConfigFileIsApplied) {
  const auto path = temp_config(R"({"operating": {"field": "10 mT"}})");
  const auto r = run_cli({"--config", path, "transitions"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ref = run_cli({"transitions", "--B", "10mT"});
  EXPECT_EQ(r.out, ref.out);
}

TEST(Cli, SenseAczCurves) {
  const auto a = run_cli({"sense-acz"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(lines(a.out)[0], "dU_V,dshift_Hz");
  EXPECT_EQ(lines(a.out)[1], "0,0");
  const auto b = run_cli({"sense-acz", "--curve", "spatial"});
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(lines(b.out)[0], "dy_m,Bosc_T");
}

TEST(Cli, StabilizeSimIsDeterministic) {
  const auto a = run_cli({"stabilize-sim", "--interval", "10min", "--duration", "2h", "--seed", "4"});
  const auto b = run_cli({"stabilize-sim", "--interval", "10min", "--duration", "2h", "--seed", "4"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(lines(a.out)[0], "t_s,relB_dev,shim_A");
  EXPECT_EQ(lines(a.out).size(), 2u + 720u);
}

TEST(Cli, RamseySimSmallRunIsDeterministic) {
  const auto cfg = temp_config(R"({"simulation": {"shots": 20, "phase_points": 12, "t_points": 4}})");
  const auto a = run_cli({"--config", cfg, "ramsey-sim", "--transition", "MW1", "--seed", "3"});
  const auto b = run_cli({"--config", cfg, "ramsey-sim", "--transition", "MW1", "--seed", "3"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(lines(a.out)[0], "T_s,contrast,contrast_err");
  EXPECT_EQ(lines(a.out).size(), 5u);
}

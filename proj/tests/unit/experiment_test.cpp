#include "test_support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mscat;
using namespace mscat::testing;

namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.sensor_count = 40;
  c.distance = 30.0;
  c.nx = c.ny = 9;
  c.scatterers = {11, 60};
  c.amplitudes = {2.0, 1.5};
  c.illumination = {IlluminationMode::Point, 21};
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mscat_experiment_test_" + name);
  fs::remove_all(dir);
  return dir;
}

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

}  // namespace

TEST(Config, WriteThenParseIsIdentity) {
  ExperimentConfig c = small_config();
  c.noise_pct = 0.1 + 0.2;
  c.tolerance = 3.3e-11;
  c.illumination = {IlluminationMode::Random, 7};
  c.method = Method::Mmv;
  c.seed = 18446744073709551615ull;
  c.output_dir = "some/dir";
  EXPECT_EQ(parse(to_string(c)), c);
  EXPECT_EQ(parse(to_string(ExperimentConfig{})), ExperimentConfig{});
}

TEST(Config, ShippedDefaultMatchesBuiltInDefaults) {
  EXPECT_EQ(load_config(MSCAT_SOURCE_DIR "/configs/default.ini"), ExperimentConfig{});
}

TEST(Config, MissingKeysKeepDefaultsAndIndicesAreOneBased) {
  const ExperimentConfig c = parse("[scene]\nindices = 1, 1681\namplitudes = 1,2\n");
  EXPECT_EQ(c.scatterers, (IndexSet{0, 1680}));
  EXPECT_EQ(c.sensor_count, 100);
}

TEST(Config, ErrorsNameTheOffendingField) {
  auto field_of = [](const std::string& text) {
    try {
      parse(text);
    } catch (const ConfigError& e) {
      return e.field() + " | " + e.what();
    }
    return std::string("no error");
  };
  EXPECT_EQ(field_of("[array]\ncolour = red\n"), "array.colour | array.colour: unknown key");
  EXPECT_EQ(field_of("[scene]\nindices =\namplitudes =\n"),
            "scene.indices | scene.indices: scene must contain at least one scatterer");
  EXPECT_NE(field_of("[window]\nnx = 4x\n").find("window.nx | "), std::string::npos);
  EXPECT_NE(field_of("[scene]\nindices = 1682\namplitudes = 1\n").find("outside 1..1681"), std::string::npos);
  EXPECT_NE(field_of("[scene]\nindices = 3,3\namplitudes = 1,1\n").find("duplicate"), std::string::npos);
  EXPECT_NE(field_of("[data]\nnoise = -1\n").find("data.noise"), std::string::npos);
  EXPECT_NE(field_of("[data]\nillumination = laser:3\n").find("unknown illumination mode"), std::string::npos);
  EXPECT_NE(field_of("[data]\nillumination = random:12\n").find("exactly one illumination"), std::string::npos);
  EXPECT_NE(field_of("seed = 3\n").find("[section]"), std::string::npos);
  EXPECT_THROW(load_config("/nonexistent/mscat.ini"), ConfigError);
}

TEST(Config, IlluminationSpecs) {
  EXPECT_EQ(parse_illumination("point:51").mode, IlluminationMode::Point);
  EXPECT_EQ(parse_illumination("random:12").value, 12);
  EXPECT_EQ(to_string(parse_illumination("optimal:3")), "optimal:3");
  EXPECT_THROW(parse_illumination("optimal"), ConfigError);
  EXPECT_THROW(parse_illumination("optimal:0"), ConfigError);
  EXPECT_THROW(parse_illumination("optimal:2.5"), ConfigError);
}

TEST(Pipeline, NoiseFreeSmallSceneIsExact) {
  const ExperimentResult r = run_pipeline(small_config());
  EXPECT_EQ(r.support, (IndexSet{11, 60}));
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_LT(r.rho_max_error, 1e-6);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.image.size(), 81);
  EXPECT_GT(r.ms_amount, 0.0);
}

TEST(Pipeline, IterationCallbackSeesEveryStep) {
  Index calls = 0;
  const ExperimentResult r = run_pipeline(small_config(), [&](const IterationRecord& rec) {
    EXPECT_EQ(rec.iteration, calls);
    ++calls;
  });
  EXPECT_GE(calls, r.iterations);
}

TEST(Pipeline, MusicNeedsTheFullSignalSubspace) {
  ExperimentConfig c = small_config();
  c.method = Method::Music;
  c.music_vectors = 2;
  EXPECT_EQ(run_pipeline(c).recall, 1.0);
  c.music_vectors = 1;
  EXPECT_LT(run_pipeline(c).recall, 1.0);
}

TEST(Pipeline, NoiseSeedChangesDataButNotScene) {
  ExperimentConfig c = small_config();
  c.noise_pct = 5.0;
  const ExperimentResult a = run_pipeline(c);
  c.seed = 2;
  const ExperimentResult b = run_pipeline(c);
  EXPECT_EQ(a.scene.rho0(), b.scene.rho0());
  EXPECT_NE(a.noise_energy, b.noise_energy);
  EXPECT_GT(a.noise_energy, 0.0);
}

TEST(Pipeline, SeedSweepSetsBothSeeds) {
  const auto runs = run_seed_sweep(small_config(), 5, 2, 1);
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_EQ(runs[1].config.seed, 6u);
  EXPECT_EQ(runs[1].config.phase_seed, 6u);
  EXPECT_NE(runs[0].scene.rho0(), runs[1].scene.rho0());
}

TEST(Report, FixedSeedGivesByteIdenticalOutputs) {
  ExperimentConfig c = small_config();
  c.noise_pct = 10.0;
  c.method = Method::Mmv;
  c.illumination = {IlluminationMode::Random, 3};
  c.output_dir = scratch("a").string();
  run_experiment(c);
  const fs::path a(c.output_dir);
  c.output_dir = scratch("b").string();
  run_experiment(c);
  const fs::path b(c.output_dir);
  for (const char* f : {"summary.txt", "image.csv", "image.pgm", "scene.csv", "singular_values.csv", "recovered.csv"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_FALSE(fs::exists(a / "summary.txt.tmp"));
  // The written config reproduces the run apart from the output directory.
  ExperimentConfig back = load_config((a / "config.ini").string());
  EXPECT_EQ(back.output_dir, a.string());
  back.output_dir = c.output_dir;
  EXPECT_EQ(back, c);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Report, GridCsvAndPgmLayout) {
  const ImageWindow iw(Point3(0, 10, 0), 3, 2, 1.0);
  RealVector v(6);
  v << 0, 1, 2, 3, 4, 8;
  std::ostringstream csv, pgm;
  write_grid_csv(csv, v, iw);
  EXPECT_EQ(csv.str(), "0,1,2\n3,4,8\n");
  write_pgm(pgm, v, iw);
  const std::string bytes = pgm.str();
  EXPECT_EQ(bytes.substr(0, 11), "P5\n3 2\n255\n");
  ASSERT_EQ(bytes.size(), 17u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[11]), 0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 255);
  EXPECT_EQ(static_cast<unsigned char>(bytes[15]), 128);
}

TEST(Compare, RowsFollowRequestedMethods) {
  const ExperimentConfig c = small_config();
  const auto rows = compare_methods(c, {"smv", "mmv-random", "mmv-optimal", "music"});
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].method, "smv");
  EXPECT_EQ(rows[3].method, "music");
  for (const auto& r : rows) EXPECT_EQ(r.recall, 1.0) << r.method;
  EXPECT_TRUE(std::isnan(rows[3].rho_error));
  EXPECT_THROW(compare_methods(c, {"tomography"}), ConfigError);
  std::ostringstream out;
  write_comparison_csv(out, rows);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "method,precision,recall,rho_rel_error,runtime_s");
}

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "gpsysid/gp.hpp"
#include "gpsysid/io.hpp"

using namespace gpsysid;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gpsysid_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name), std::ios::binary) << text;
  }

  std::string slurp(const std::string& name) const { return read_file(path(name)); }

  // Runs the CLI with stderr discarded; returns exit code and stdout.
  RunResult run(const std::string& args) const {
    const std::string cmd = "cd '" + dir_.string() + "' && '" GPSYSID_CLI_PATH "' " + args + " 2>/dev/null";
    RunResult r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    const int status = ::pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
  }

  fs::path dir_;
};

std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

double num(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw std::runtime_error("missing key " + key);
  return std::stod(it->second);
}

const char* kGpConfig =
    "[model]\n"
    "kind = gp\n"
    "kernel = se\n"
    "[optimizer]\n"
    "seed = 1\n";

}  // namespace

// ---------------------------------------------------------------- gen

TEST_F(CliTest, GenSinusoidIsReproducible) {
  ASSERT_EQ(run("gen --generator sinusoid --n 10 --seed 7 --out a.csv").code, 0);
  ASSERT_EQ(run("gen --generator sinusoid --n 10 --seed 7 --out b.csv").code, 0);
  EXPECT_EQ(slurp("a.csv"), slurp("b.csv"));
  const CsvTable t = read_csv(path("a.csv"));
  EXPECT_EQ(t.rows(), 10u);
  EXPECT_EQ(t.header, (std::vector<std::string>{"t", "y"}));
  ASSERT_EQ(run("gen --generator sinusoid --n 10 --seed 8 --out c.csv").code, 0);
  EXPECT_NE(slurp("a.csv"), slurp("c.csv"));
}

TEST_F(CliTest, GenZeroRowsIsHeaderOnly) {
  for (const char* g : {"sinusoid", "linear-arx", "logistic-narx", "gp-draw", "pendulum"}) {
    const auto r = run(std::string("gen --generator ") + g + " --n 0 --seed 1");
    ASSERT_EQ(r.code, 0) << g;
    EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1) << g;
  }
}

TEST_F(CliTest, GenFromConfigAndErrors) {
  write("gen.ini", "[generator]\nname = linear-arx\nn = 5\nseed = 3\n");
  const auto r = run("gen --config gen.ini");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.substr(0, 6), "t,u,y\n");
  EXPECT_EQ(run("gen --generator nope --n 3 --seed 1").code, 2);
  EXPECT_EQ(run("gen --generator sinusoid --n 3").code, 2);  // no seed
  write("typo.ini", "[generator]\nname = sinusoid\nnn = 5\n");
  EXPECT_EQ(run("gen --config typo.ini --seed 1").code, 2);
}

// Monte Carlo moment oracle: Var f(t) = s² for the noise-free draw.
TEST_F(CliTest, GpDrawVarianceMatchesMagnitude) {
  const double s = 1.3;
  write("draw.ini", "[generator]\nname = gp-draw\nkernel = matern32\nmagnitude = 1.3\n"
                    "lengthscale = 0.5\ndt = 0.1\nnoise_std = 0\n");
  std::vector<double> at;
  for (int seed = 0; seed < 200; ++seed) {
    const auto r = run("gen --config draw.ini --n 30 --seed " + std::to_string(seed));
    ASSERT_EQ(r.code, 0);
    const CsvTable t = parse_csv(r.out);
    at.push_back(t.column("y")[20]);
  }
  double mean = 0.0;
  for (double v : at) mean += v;
  mean /= static_cast<double>(at.size());
  double var = 0.0;
  for (double v : at) var += (v - mean) * (v - mean);
  var /= static_cast<double>(at.size() - 1);
  EXPECT_NEAR(var, s * s, 0.15 * s * s);
}

// ---------------------------------------------------------------- fit

TEST_F(CliTest, FitIsDeterministicAndReportMatchesLibraryNll) {
  ASSERT_EQ(run("gen --generator sinusoid --n 10 --seed 4 --out d.csv").code, 0);
  write("gp.ini", kGpConfig);
  const auto r1 = run("fit --config gp.ini --data d.csv --out m1.json --report r1.txt");
  ASSERT_EQ(r1.code, 0);
  ASSERT_EQ(run("fit --config gp.ini --data d.csv --out m2.json").code, 0);
  EXPECT_EQ(slurp("m1.json"), slurp("m2.json"));
  EXPECT_EQ(slurp("r1.txt"), r1.out);

  const auto kv = parse_kv(r1.out);
  EXPECT_EQ(kv.at("config_hash").size(), 16u);
  const double reported = num(kv, "nll");
  ASSERT_TRUE(std::isfinite(reported));

  const CsvTable d = read_csv(path("d.csv"));
  const auto& t = d.column("t");
  const auto& y = d.column("y");
  const Dataset ds{Eigen::Map<const Vector>(t.data(), 10), Eigen::Map<const Vector>(y.data(), 10),
                   num(kv, "noise_variance")};
  const Kernel k{KernelFamily::SquaredExponential, num(kv, "magnitude"), num(kv, "lengthscale")};
  EXPECT_NEAR(nll(ds, k).value, reported, 1e-9);
}

TEST_F(CliTest, ConfigHashTracksConfigAndSeed) {
  ASSERT_EQ(run("gen --generator sinusoid --n 10 --seed 4 --out d.csv").code, 0);
  write("gp.ini", kGpConfig);
  const auto a = parse_kv(run("fit --config gp.ini --data d.csv --out m.json").out);
  const auto b = parse_kv(run("fit --config gp.ini --data d.csv --out m.json --seed 9").out);
  EXPECT_NE(a.at("config_hash"), b.at("config_hash"));
}

TEST_F(CliTest, FitInputErrorsExitTwo) {
  write("gp.ini", kGpConfig);
  const std::map<std::string, std::string> bad{
      {"empty.csv", ""},
      {"noheader.csv", "\n1,2\n"},
      {"ragged.csv", "t,y\n1,2\n3\n"},
      {"text.csv", "t,y\n1,two\n"},
      {"nan.csv", "t,y\n1,nan\n"},
      {"nocol.csv", "x,y\n1,2\n"},
      {"junk.csv", std::string("\x01\x02\xff,\x00zz", 8)},
  };
  for (const auto& [name, text] : bad) {
    write(name, text);
    EXPECT_EQ(run("fit --config gp.ini --data " + name + " --out m.json").code, 2) << name;
  }
  EXPECT_EQ(run("fit --config gp.ini --data missing.csv --out m.json").code, 2);
  write("bad.ini", "[model]\nkind = gp\nlenghtscale = 1\n");
  write("d.csv", "t,y\n0,1\n1,2\n");
  EXPECT_EQ(run("fit --config bad.ini --data d.csv --out m.json").code, 2);
  write("kind.ini", "[model]\nkind = wavelet\n");
  EXPECT_EQ(run("fit --config kind.ini --data d.csv --out m.json").code, 2);
  write("t.ini", "[model]\nkind = temporal\nkernel = se\n[optimizer]\nseed = 1\n");
  EXPECT_EQ(run("fit --config t.ini --data d.csv --out m.json").code, 2);
  EXPECT_EQ(run("fit --data d.csv --out m.json").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
}

// ---------------------------------------------------------------- predict

TEST_F(CliTest, PredictInterpolatesNearNoiselessModel) {
  write("d.csv", "t,y\n0,0.3\n0.7,1.1\n1.5,-0.4\n2.2,0.2\n3,0.9\n");
  write("gp.ini", "[model]\nkind = gp\nkernel = se\nmagnitude = 1\nlengthscale = 0.8\n"
                  "noise_std = 1e-6\noptimize = false\n");
  ASSERT_EQ(run("fit --config gp.ini --data d.csv --out m.json").code, 0);
  const auto r = run("predict --model m.json --data d.csv");
  ASSERT_EQ(r.code, 0);
  const CsvTable p = parse_csv(r.out);
  const CsvTable d = read_csv(path("d.csv"));
  for (std::size_t i = 0; i < d.rows(); ++i) {
    EXPECT_NEAR(p.column("mean")[i], d.column("y")[i], 1e-5);
  }
}

TEST_F(CliTest, QuantileWidthIsDefinition) {
  ASSERT_EQ(run("gen --generator sinusoid --n 10 --seed 4 --out d.csv").code, 0);
  write("gp.ini", kGpConfig);
  ASSERT_EQ(run("fit --config gp.ini --data d.csv --out m.json").code, 0);
  write("q.csv", "t\n-1\n0.5\n2\n3.3\n7\n");
  for (const char* extra : {"", " --observation-noise"}) {
    const auto r = run(std::string("predict --model m.json --data q.csv --quantiles") + extra);
    ASSERT_EQ(r.code, 0);
    const CsvTable p = parse_csv(r.out);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      const double width = p.column("q97.5")[i] - p.column("q2.5")[i];
      EXPECT_NEAR(width, 2.0 * 1.96 * std::sqrt(p.column("variance")[i]), 1e-12);
    }
  }
  // --observation-noise adds σ_n² to the variance column
  const CsvTable a = parse_csv(run("predict --model m.json --data q.csv").out);
  const CsvTable b = parse_csv(run("predict --model m.json --data q.csv --observation-noise").out);
  const double noise = num(parse_kv(run("fit --config gp.ini --data d.csv --out m.json").out), "noise_variance");
  for (std::size_t i = 0; i < a.rows(); ++i) {
    EXPECT_NEAR(b.column("variance")[i] - a.column("variance")[i], noise, 1e-15);
  }
}

TEST_F(CliTest, PredictRoundTripMatchesInMemoryExactly) {
  ASSERT_EQ(run("gen --generator sinusoid --n 12 --seed 5 --out d.csv").code, 0);
  write("gp.ini", kGpConfig);
  ASSERT_EQ(run("fit --config gp.ini --data d.csv --out m.json").code, 0);
  const auto r = run("predict --model m.json --data d.csv");
  ASSERT_EQ(r.code, 0);
  const CsvTable p = parse_csv(r.out);

  const CsvTable d = read_csv(path("d.csv"));
  const auto n = static_cast<Eigen::Index>(d.rows());
  Dataset ds{Eigen::Map<const Vector>(d.column("t").data(), n), Eigen::Map<const Vector>(d.column("y").data(), n),
             0.0};
  OptimizerConfig oc;
  oc.seed = 1;
  const auto opt = optimize_hyper(ds, KernelFamily::SquaredExponential, default_init(ds), oc);
  ds.noise_variance = opt.noise_variance;
  const Posterior post = TrainedGP::fit(ds, opt.kernel).predict(ds.inputs);
  for (Eigen::Index i = 0; i < n; ++i) {
    EXPECT_EQ(p.column("mean")[static_cast<std::size_t>(i)], post.mean(i));
    EXPECT_EQ(p.column("variance")[static_cast<std::size_t>(i)], post.variance()(i));
  }
}

TEST_F(CliTest, TemporalAndGpPredictionsAgree) {
  write("draw.ini", "[generator]\nname = gp-draw\nkernel = matern52\nmagnitude = 1\nlengthscale = 0.6\n"
                    "dt = 0.05\nnoise_std = 0.1\n");
  ASSERT_EQ(run("gen --config draw.ini --n 120 --seed 3 --out d.csv").code, 0);
  write("t.ini", "[model]\nkind = temporal\nkernel = matern52\n[optimizer]\nseed = 2\n");
  write("g.ini", "[model]\nkind = gp\nkernel = matern52\n[optimizer]\nseed = 2\n");
  ASSERT_EQ(run("fit --config t.ini --data d.csv --out t.json").code, 0);
  ASSERT_EQ(run("fit --config g.ini --data d.csv --out g.json").code, 0);
  write("q.csv", "t\n-0.3\n0.025\n1.5\n3.0\n5.95\n6.4\n");
  for (const char* q : {"d.csv", "q.csv"}) {
    const CsvTable a = parse_csv(run(std::string("predict --quantiles --model t.json --data ") + q).out);
    const CsvTable b = parse_csv(run(std::string("predict --quantiles --model g.json --data ") + q).out);
    ASSERT_EQ(a.header, b.header);
    ASSERT_EQ(a.rows(), b.rows());
    for (std::size_t c = 0; c < a.header.size(); ++c) {
      for (std::size_t i = 0; i < a.rows(); ++i) {
        EXPECT_NEAR(a.columns[c][i], b.columns[c][i], 1e-6) << a.header[c] << " row " << i;
      }
    }
  }
}

// ---------------------------------------------------------------- simulate

namespace {
const char* kNarxConfig =
    "[model]\nkind = narx\n[lags]\nn = 1\nm = 1\n[optimizer]\nseed = 3\n";
}

TEST_F(CliTest, SimulateHorizonOneEqualsOneStepPredict) {
  ASSERT_EQ(run("gen --generator linear-arx --n 200 --seed 6 --out d.csv").code, 0);
  write("narx.ini", kNarxConfig);
  ASSERT_EQ(run("fit --config narx.ini --data d.csv --out m.json").code, 0);
  write("h.csv", "t,u,y\n0,0.4,0.1\n1,0.2,0.3\n2,-0.5,0.35\n");
  const CsvTable sim = parse_csv(run("simulate --model m.json --data h.csv --horizon 1").out);
  const CsvTable pred = parse_csv(run("predict --model m.json --data h.csv").out);
  ASSERT_EQ(sim.rows(), 1u);
  EXPECT_EQ(sim.column("mean")[0], pred.column("mean")[0]);
  EXPECT_EQ(sim.column("variance")[0], pred.column("variance")[0]);
}

TEST_F(CliTest, SimulateStepResponseMatchesLinearSystem) {
  ASSERT_EQ(run("gen --generator linear-arx --n 300 --seed 11 --out d.csv").code, 0);
  write("narx.ini", kNarxConfig);
  ASSERT_EQ(run("fit --config narx.ini --data d.csv --out m.json").code, 0);
  std::string step = "t,u,y\n0,0.5,0\n";
  for (int k = 1; k < 60; ++k) step += std::to_string(k) + ",0.5,0\n";
  write("step.csv", step);
  const auto r = run("simulate --model m.json --data step.csv --horizon 60");
  ASSERT_EQ(r.code, 0);
  const CsvTable sim = parse_csv(r.out);
  ASSERT_EQ(sim.rows(), 60u);
  const double steady = 0.5 * 0.5 / (1.0 - 0.9);
  const double analytic = steady * (1.0 - std::pow(0.9, 60));
  EXPECT_LE(std::abs(sim.column("mean").back() - analytic), 0.05 * steady);
}

TEST_F(CliTest, SimulateSampleModeIsSeeded) {
  ASSERT_EQ(run("gen --generator pendulum --n 60 --seed 2 --out d.csv").code, 0);
  write("ss.ini", "[model]\nkind = gpss\n[optimizer]\nseed = 1\n[filter]\nmeasurement = first_state\n"
                  "measurement_noise_var = 0.0025\n");
  ASSERT_EQ(run("fit --config ss.ini --data d.csv --out m.json").code, 0);
  ASSERT_EQ(run("simulate --model m.json --data d.csv --horizon 20 --mode sample --seed 5 --out a.csv").code, 0);
  ASSERT_EQ(run("simulate --model m.json --data d.csv --horizon 20 --mode sample --seed 5 --out b.csv").code, 0);
  ASSERT_EQ(run("simulate --model m.json --data d.csv --horizon 20 --mode sample --seed 6 --out c.csv").code, 0);
  EXPECT_EQ(slurp("a.csv"), slurp("b.csv"));
  EXPECT_NE(slurp("a.csv"), slurp("c.csv"));
  EXPECT_EQ(read_csv(path("a.csv")).rows(), 21u);
  EXPECT_EQ(run("simulate --model m.json --data d.csv --horizon 20 --mode sample").code, 2);  // no seed
}

// ---------------------------------------------------------------- eval

TEST_F(CliTest, EvalPerfectPredictionsGiveZeroRmse) {
  write("d.csv", "t,y\n0,2.5\n1,2.5\n2,2.5\n3,2.5\n");
  write("c.ini", "[model]\nkind = gp\nmean = constant\nmean_value = 2.5\n[optimizer]\nrestarts = 1\n");
  ASSERT_EQ(run("fit --config c.ini --data d.csv --out m.json").code, 0);
  const auto kv = parse_kv(run("eval --model m.json --data d.csv").out);
  EXPECT_EQ(num(kv, "rmse"), 0.0);
  EXPECT_EQ(num(kv, "mae"), 0.0);
}

TEST_F(CliTest, EvalIsRepeatableAcrossModes) {
  ASSERT_EQ(run("gen --generator linear-arx --n 120 --seed 8 --out d.csv").code, 0);
  write("narx.ini", kNarxConfig);
  ASSERT_EQ(run("fit --config narx.ini --data d.csv --out m.json").code, 0);
  for (const char* mode : {"one_step", "free_run"}) {
    const auto a = run(std::string("eval --model m.json --data d.csv --mode ") + mode);
    const auto b = run(std::string("eval --model m.json --data d.csv --mode ") + mode);
    ASSERT_EQ(a.code, 0);
    EXPECT_EQ(a.out, b.out);
    const auto kv = parse_kv(a.out);
    for (const char* key : {"rmse", "mae", "coverage95", "mean_nll", "count"}) EXPECT_TRUE(kv.contains(key)) << key;
  }
  write("bad.csv", "t,y\n0,1\n1,2\n");  // no u column
  EXPECT_EQ(run("eval --model m.json --data bad.csv").code, 2);
}

// Calibration oracle: held-out points of a draw from the fitted family.
TEST_F(CliTest, EvalCoverageCalibratedOnGpData) {
  write("draw.ini", "[generator]\nname = gp-draw\nkernel = matern32\nmagnitude = 1\nlengthscale = 0.5\n"
                    "dt = 0.05\nnoise_std = 0.1\n");
  write("g.ini", "[model]\nkind = gp\nkernel = matern32\n[optimizer]\nseed = 1\n");
  double total = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    ASSERT_EQ(run("gen --config draw.ini --n 160 --seed " + std::to_string(100 + s) + " --out all.csv").code, 0);
    const CsvTable all = read_csv(path("all.csv"));
    std::vector<double> tt, ty, ht, hy;
    for (std::size_t i = 0; i < all.rows(); ++i) {
      auto& t = (i % 2 == 0) ? tt : ht;
      auto& y = (i % 2 == 0) ? ty : hy;
      t.push_back(all.column("t")[i]);
      y.push_back(all.column("y")[i]);
    }
    write("train.csv", to_csv({"t", "y"}, {tt, ty}));
    write("test.csv", to_csv({"t", "y"}, {ht, hy}));
    ASSERT_EQ(run("fit --config g.ini --data train.csv --out m.json").code, 0);
    total += num(parse_kv(run("eval --model m.json --data test.csv").out), "coverage95");
  }
  const double avg = total / seeds;
  EXPECT_GE(avg, 0.85);
  EXPECT_LE(avg, 0.99);
}

TEST_F(CliTest, GpssFilterEvalAndNumericalFailureExitThree) {
  ASSERT_EQ(run("gen --generator pendulum --n 80 --seed 2 --out d.csv").code, 0);
  write("ss.ini", "[model]\nkind = gpss\n[optimizer]\nseed = 1\n[filter]\nmeasurement = first_state\n"
                  "measurement_noise_var = 0.0025\nparticles = 400\ninitial_var = 0.01\nseed = 4\n");
  ASSERT_EQ(run("fit --config ss.ini --data d.csv --out m.json").code, 0);
  const auto a = run("eval --model m.json --data d.csv --mode filter");
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, run("eval --model m.json --data d.csv --mode filter").out);
  const auto kv = parse_kv(a.out);
  EXPECT_TRUE(std::isfinite(num(kv, "log_likelihood")));
  EXPECT_LE(num(kv, "rmse"), 0.1);

  // observations far from anything the model can produce
  const CsvTable d = read_csv(path("d.csv"));
  std::vector<double> y(d.rows(), 1e3);
  write("far.csv", to_csv({"k", "x1", "u", "y"}, {d.column("k"), d.column("x1"), d.column("u"), y}));
  EXPECT_EQ(run("eval --model m.json --data far.csv --mode filter").code, 3);
}

TEST_F(CliTest, CorruptModelFileExitsTwo) {
  write("m.json", "{\"format\": \"something-else\"}");
  write("q.csv", "t\n0\n");
  EXPECT_EQ(run("predict --model m.json --data q.csv").code, 2);
  write("m2.json", "not json at all");
  EXPECT_EQ(run("predict --model m2.json --data q.csv").code, 2);
}

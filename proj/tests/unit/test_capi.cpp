#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>
#include <sys/wait.h>

#include "pmcphd/pmcphd.h"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

const char* kToyModel =
    R"({"F": [[0.95]], "Q": [[1.0]], "H": [[1.0]], "R": [[0.5]], "m0": [0.0], "P0": [[2.0]],
        "F2": [[0.3]], "H2": [[0.2]]})";

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path(::testing::TempDir()) / ("pmcphd_capi_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string default_config_text() {
  size_t needed = 0;
  EXPECT_EQ(pmcphd_default_config_json(nullptr, 0, &needed), PMCPHD_OK);
  std::string buf(needed + 1, '\0');
  EXPECT_EQ(pmcphd_default_config_json(buf.data(), buf.size(), &needed), PMCPHD_OK);
  buf.resize(needed);
  return buf;
}

// Default configuration cut down to a short horizon and small particle counts.
fs::path write_small_config(const fs::path& dir, int steps, int runs) {
  json cfg = json::parse(default_config_text());
  cfg["scenario"]["steps"] = steps;
  json kept = json::array();
  for (auto t : cfg["scenario"]["targets"]) {
    if (t["birth"].get<int>() > steps) continue;
    t["death"] = std::min(t["death"].get<int>(), steps);
    kept.push_back(t);
  }
  cfg["scenario"]["targets"] = kept;
  cfg["filter"]["particles_per_target"] = 200;
  cfg["filter"]["birth_particles"] = 100;
  cfg["runs"] = runs;
  cfg["threads"] = 1;
  cfg["output_dir"] = (dir / "out").string();
  const fs::path path = dir / "config.json";
  std::ofstream(path) << cfg.dump(2);
  return path;
}

struct ModelHandle {
  pmcphd_model* p = nullptr;
  ~ModelHandle() { pmcphd_model_destroy(p); }
};

struct FilterHandle {
  pmcphd_filter* p = nullptr;
  ~FilterHandle() { pmcphd_filter_destroy(p); }
};

TEST(CApi, StatusNamesAndVersion) {
  EXPECT_STREQ(pmcphd_status_name(PMCPHD_OK), "ok");
  EXPECT_STRNE(pmcphd_status_name(PMCPHD_ERR_INVALID_EMBEDDING), pmcphd_status_name(PMCPHD_ERR_CONFIG));
  EXPECT_GT(std::string(pmcphd_version()).size(), 0u);
  EXPECT_NE(pmcphd_last_error(), nullptr);
}

TEST(CApi, NullArgumentsRejected) {
  pmcphd_model* m = nullptr;
  EXPECT_EQ(pmcphd_model_from_hmc_json(nullptr, &m), PMCPHD_ERR_ARGUMENT);
  EXPECT_GT(std::string(pmcphd_last_error()).size(), 0u);
  double d = 0.0;
  EXPECT_EQ(pmcphd_ospa(nullptr, 1, nullptr, 0, 2, 10.0, 1.0, &d), PMCPHD_ERR_ARGUMENT);
  EXPECT_EQ(pmcphd_filter_step(nullptr, nullptr, 0), PMCPHD_ERR_ARGUMENT);
}

TEST(CApi, StringProtocolReportsLengthAndTruncates) {
  size_t needed = 0;
  ASSERT_EQ(pmcphd_default_config_json(nullptr, 0, &needed), PMCPHD_OK);
  ASSERT_GT(needed, 10u);
  char small[8];
  std::fill(std::begin(small), std::end(small), 'x');
  size_t again = 0;
  ASSERT_EQ(pmcphd_default_config_json(small, sizeof small, &again), PMCPHD_OK);
  EXPECT_EQ(again, needed);
  EXPECT_EQ(small[7], '\0');
  const std::string full = default_config_text();
  EXPECT_EQ(full.size(), needed);
  EXPECT_EQ(std::string(small), full.substr(0, 7));
  EXPECT_NO_THROW(json::parse(full));
}

TEST(CApi, ModelMatricesFromHmcDescription) {
  ModelHandle m;
  ASSERT_EQ(pmcphd_model_from_hmc_json(kToyModel, &m.p), PMCPHD_OK) << pmcphd_last_error();
  int sd = 0, od = 0;
  ASSERT_EQ(pmcphd_model_dims(m.p, &sd, &od), PMCPHD_OK);
  EXPECT_EQ(sd, 1);
  EXPECT_EQ(od, 1);
  double b[4], s[4];
  ASSERT_EQ(pmcphd_model_matrices(m.p, b, s), PMCPHD_OK);
  const double F = 0.95, Q = 1.0, H = 1.0, R = 0.5, F2 = 0.3, H2 = 0.2;
  EXPECT_NEAR(b[0], F - F2 * H, 1e-15);
  EXPECT_NEAR(b[1], H * F - H2 * H, 1e-15);
  EXPECT_NEAR(b[2], F2, 1e-15);
  EXPECT_NEAR(b[3], H2, 1e-15);
  EXPECT_NEAR(s[0], Q - F2 * R * F2, 1e-15);
  EXPECT_NEAR(s[1], H * Q - H2 * R * F2, 1e-15);
  EXPECT_NEAR(s[2], s[1], 0.0);
  EXPECT_NEAR(s[3], R - H2 * R * H2 + H * Q * H, 1e-15);

  int ok = 0;
  size_t needed = 0;
  ASSERT_EQ(pmcphd_model_validate(m.p, &ok, nullptr, 0, &needed), PMCPHD_OK);
  EXPECT_EQ(ok, 1);
  EXPECT_GT(needed, 0u);
}

TEST(CApi, InvalidEmbeddingStatus) {
  json spec = json::parse(kToyModel);
  spec["F2"] = json::array({json::array({3.0})});
  pmcphd_model* m = nullptr;
  EXPECT_EQ(pmcphd_model_from_hmc_json(spec.dump().c_str(), &m), PMCPHD_ERR_INVALID_EMBEDDING);
  EXPECT_EQ(m, nullptr);
  EXPECT_NE(std::string(pmcphd_last_error()).find("Sigma11"), std::string::npos) << pmcphd_last_error();
  EXPECT_EQ(pmcphd_model_from_hmc_json("{\"F\": [[1.0]]", &m), PMCPHD_ERR_CONFIG);
}

class CApiFilter : public ::testing::Test {
 protected:
  void SetUp() override {
    ASSERT_EQ(pmcphd_model_from_hmc_json(kToyModel, &model.p), PMCPHD_OK) << pmcphd_last_error();
    pmcphd_filter_params_default(&params);
    params.particles_per_target = 500;
    params.birth_particles = 200;
    params.clutter_rate = 1.0;
    params.region_volume = 40.0;
    params.p_detection = 0.95;
    params.p_survival = 0.99;
  }

  pmcphd_status make(FilterHandle& f, uint64_t seed) {
    const double mass = 0.05;
    const double mean[2] = {0.0, 0.0};
    const double cov[4] = {2.0, 2.0, 2.0, 2.5};
    return pmcphd_filter_create(model.p, &params, 1, &mass, mean, cov, seed, &f.p);
  }

  ModelHandle model;
  pmcphd_filter_params params{};
};

TEST_F(CApiFilter, TracksSingleTargetAndIsDeterministic) {
  FilterHandle a, b;
  ASSERT_EQ(make(a, 5), PMCPHD_OK) << pmcphd_last_error();
  ASSERT_EQ(make(b, 5), PMCPHD_OK);
  ASSERT_EQ(pmcphd_filter_initialize(a.p, 1.0), PMCPHD_OK) << pmcphd_last_error();
  ASSERT_EQ(pmcphd_filter_initialize(b.p, 1.0), PMCPHD_OK);
  double truth = 1.0;
  for (int k = 0; k < 20; ++k) {
    truth *= 0.95;
    const double z[2] = {truth, 12.0 - k};
    ASSERT_EQ(pmcphd_filter_step(a.p, z, 2), PMCPHD_OK) << pmcphd_last_error();
    ASSERT_EQ(pmcphd_filter_step(b.p, z, 2), PMCPHD_OK);
    double sa[8], sb[8], ca = 0.0, cb = 0.0;
    size_t na = 0, nb = 0;
    ASSERT_EQ(pmcphd_filter_estimates(a.p, sa, 8, &na, &ca), PMCPHD_OK);
    ASSERT_EQ(pmcphd_filter_estimates(b.p, sb, 8, &nb, &cb), PMCPHD_OK);
    EXPECT_EQ(ca, cb);
    ASSERT_EQ(na, nb);
    for (size_t i = 0; i < na && i < 8; ++i) EXPECT_EQ(sa[i], sb[i]);
    size_t particles = 0;
    double mass = 0.0;
    ASSERT_EQ(pmcphd_filter_cloud_size(a.p, &particles, &mass), PMCPHD_OK);
    EXPECT_GT(particles, 0u);
    EXPECT_NEAR(mass, ca, 1e-9);
  }
  double cardinality = 0.0;
  size_t count = 0;
  ASSERT_EQ(pmcphd_filter_estimates(a.p, nullptr, 0, &count, &cardinality), PMCPHD_OK);
  EXPECT_GT(cardinality, 0.5);
  EXPECT_LT(cardinality, 3.0);
}

TEST_F(CApiFilter, BadInputsReportStatus) {
  FilterHandle f;
  params.p_detection = 1.5;
  EXPECT_EQ(make(f, 1), PMCPHD_ERR_CONFIG);
  params.p_detection = 0.9;
  ASSERT_EQ(make(f, 1), PMCPHD_OK);
  ASSERT_EQ(pmcphd_filter_initialize(f.p, 1.0), PMCPHD_OK);
  const double bad[1] = {std::nan("")};
  EXPECT_EQ(pmcphd_filter_step(f.p, bad, 1), PMCPHD_ERR_NUMERIC);
  EXPECT_EQ(pmcphd_filter_step(f.p, nullptr, 1), PMCPHD_ERR_ARGUMENT);
}

TEST(CApi, OspaKnownValue) {
  const double x[4] = {0, 0, 10, 0};
  const double y[6] = {0, 3, 10, 4, 500, 500};
  double d = 0.0;
  ASSERT_EQ(pmcphd_ospa(x, 2, y, 3, 2, 100.0, 1.0, &d), PMCPHD_OK);
  EXPECT_NEAR(d, 107.0 / 3.0, 1e-12);
  EXPECT_EQ(pmcphd_ospa(x, 2, y, 3, 2, -1.0, 1.0, &d), PMCPHD_ERR_CONFIG);
  ASSERT_EQ(pmcphd_ospa(nullptr, 0, nullptr, 0, 2, 100.0, 1.0, &d), PMCPHD_OK);
  EXPECT_EQ(d, 0.0);
}

TEST(CApi, ValidateConfigReports) {
  int valid = 0;
  size_t needed = 0;
  ASSERT_EQ(pmcphd_validate_config(nullptr, &valid, nullptr, 0, &needed), PMCPHD_OK);
  EXPECT_EQ(valid, 1);
  const fs::path dir = fresh_dir("validate");
  std::ofstream(dir / "bad.json") << R"({"scenario": {"p_S": -0.1}})";
  std::string report(4096, '\0');
  ASSERT_EQ(pmcphd_validate_config((dir / "bad.json").c_str(), &valid, report.data(), report.size(), &needed),
            PMCPHD_OK);
  EXPECT_EQ(valid, 0);
  EXPECT_NE(report.find("p_S"), std::string::npos) << report;
}

TEST(CApi, RunExperimentAndPlots) {
  const fs::path dir = fresh_dir("run");
  const fs::path cfg = write_small_config(dir, 8, 2);
  pmcphd_run_options opts;
  pmcphd_run_options_default(&opts);
  const std::string cfg_path = cfg.string();
  opts.config_path = cfg_path.c_str();
  pmcphd_summary* summary = nullptr;
  ASSERT_EQ(pmcphd_run_experiment(&opts, &summary), PMCPHD_OK) << pmcphd_last_error();
  ASSERT_EQ(pmcphd_summary_filter_count(summary), 2u);
  char name[16];
  size_t needed = 0;
  ASSERT_EQ(pmcphd_summary_filter_name(summary, 0, name, sizeof name, &needed), PMCPHD_OK);
  EXPECT_STREQ(name, "pmc");
  double mean_ospa = -1.0;
  int ok = 0, failed = -1;
  ASSERT_EQ(pmcphd_summary_filter_stats(summary, 1, &mean_ospa, &ok, &failed), PMCPHD_OK);
  EXPECT_EQ(ok, 2);
  EXPECT_EQ(failed, 0);
  EXPECT_GE(mean_ospa, 0.0);
  EXPECT_LE(mean_ospa, 100.0);
  EXPECT_EQ(pmcphd_summary_filter_stats(summary, 2, &mean_ospa, &ok, &failed), PMCPHD_ERR_ARGUMENT);
  std::string out(512, '\0');
  ASSERT_EQ(pmcphd_summary_output_dir(summary, out.data(), out.size(), &needed), PMCPHD_OK);
  out.resize(needed);
  EXPECT_EQ(out, (dir / "out").string());
  ASSERT_EQ(pmcphd_summary_text(summary, nullptr, 0, &needed), PMCPHD_OK);
  EXPECT_GT(needed, 0u);
  pmcphd_summary_destroy(summary);

  std::string written(4096, '\0');
  ASSERT_EQ(pmcphd_emit_plots(out.c_str(), written.data(), written.size(), &needed), PMCPHD_OK)
      << pmcphd_last_error();
  EXPECT_NE(written.find("cardinality.svg"), std::string::npos);

  const fs::path empty = fresh_dir("noplot");
  EXPECT_EQ(pmcphd_emit_plots(empty.c_str(), nullptr, 0, &needed), PMCPHD_ERR_IO);
  EXPECT_NE(std::string(pmcphd_last_error()).find("truth.csv"), std::string::npos);
}

TEST(CApi, RunOptionsOverrideConfig) {
  const fs::path dir = fresh_dir("override");
  const fs::path cfg = write_small_config(dir, 6, 3);
  pmcphd_run_options opts;
  pmcphd_run_options_default(&opts);
  const std::string cfg_path = cfg.string();
  const std::string out_dir = (dir / "other").string();
  opts.config_path = cfg_path.c_str();
  opts.runs = 1;
  opts.filters = "hmc";
  opts.output_dir = out_dir.c_str();
  opts.override_seed = 1;
  opts.seed = 123;
  pmcphd_summary* summary = nullptr;
  ASSERT_EQ(pmcphd_run_experiment(&opts, &summary), PMCPHD_OK) << pmcphd_last_error();
  EXPECT_EQ(pmcphd_summary_filter_count(summary), 1u);
  pmcphd_summary_destroy(summary);
  EXPECT_TRUE(fs::exists(dir / "other" / "metrics_hmc.csv"));
  EXPECT_FALSE(fs::exists(dir / "other" / "metrics_pmc.csv"));
  EXPECT_NE(read_file(dir / "other" / "summary.txt").find("seed 123"), std::string::npos);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + PMCPHD_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const fs::path dir = fresh_dir("cli");
  EXPECT_EQ(run_cli("validate"), 0);
  std::ofstream(dir / "bad.json") << R"({"scenario": {"p_D": 1.5}})";
  EXPECT_EQ(run_cli("validate --config " + (dir / "bad.json").string()), 2);
  std::ofstream(dir / "syntax.json") << "{\"runs\": ,}";
  EXPECT_EQ(run_cli("run --config " + (dir / "syntax.json").string()), 2);
  EXPECT_EQ(run_cli("plot --out " + (dir / "missing").string()), 1);
  const fs::path cfg = write_small_config(dir, 5, 1);
  EXPECT_EQ(run_cli("run --plot --config " + cfg.string() + " --out " + (dir / "cli_out").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "cli_out" / "ospa.svg"));
}

}  // namespace

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "ptstab/cli.hpp"

using namespace ptstab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = fs::temp_directory_path() / ("ptstab_cli_" + std::string(info->test_suite_name()) + "_" + info->name());
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

Table load_csv(const fs::path& p) {
  std::ifstream in(p);
  return read_csv(in);
}

const char* kPhi1 = R"({"terms": [{"k": 2, "c": 1}]})";

}  // namespace

TEST(Simulate, ExamplesConcurrentlyThenCertify) {
  const auto dir = scratch_dir();
  const auto r = run({"--out", dir.string(), "simulate", "--preset", "example1", "--preset", "example2-paper", "--T", "5", "--jobs", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* stem : {"example1", "example2-paper"}) {
    for (const char* ext : {".csv", ".meta.json", ".metrics.json", ".figure.json"}) {
      EXPECT_TRUE(fs::exists(dir / (std::string(stem) + ext))) << stem << ext;
    }
  }

  const auto ex1 = load_csv(dir / "example1.csv");
  EXPECT_EQ(ex1.names, (std::vector<std::string>{"t", "x1", "x2", "V1", "V2", "env1"}));
  EXPECT_NEAR(ex1.column("t").back(), 5.0 - 5e-4, 1e-12);
  EXPECT_LT(std::abs(ex1.column("x1").back()), 1e-3);
  EXPECT_LT(std::abs(ex1.column("x2").back()), 1e-3);
  EXPECT_LE(ex1.column("t").size(), 20000u);

  const auto ex2 = load_csv(dir / "example2-paper.csv");
  for (const char* u : {"u1", "u2"}) {
    for (double v : ex2.column(u)) ASSERT_TRUE(std::isfinite(v)) << u;
  }

  const auto meta = json::parse(slurp(dir / "example2-paper.meta.json"));
  EXPECT_EQ(meta.at("horizon").at("Tbar"), 5.05);
  EXPECT_EQ(meta.at("config").at("blowup_horizon"), "Tbar");
  const auto figure = json::parse(slurp(dir / "example1.figure.json"));
  EXPECT_EQ(figure.at("data"), "example1.csv");
  EXPECT_EQ(figure.at("x"), "t");

  // simulate output goes straight into certify
  const auto csv = (dir / "example1.csv").string();
  const auto c = run({"--out", dir.string(), "certify", csv, "--signal", "x1", "--rate", kPhi1});
  EXPECT_EQ(c.code, 0) << c.err;
  const auto report = json::parse(slurp(dir / "certificate_x1.json"));
  EXPECT_EQ(report.at("verdict"), "Certified");

  EXPECT_EQ(run({"--out", dir.string(), "certify", csv, "--signal", "x1", "--rate", R"({"terms": [{"k": 1, "c": 1}]})"}).code, 1);
  EXPECT_EQ(run({"--out", dir.string(), "certify", csv, "--signal", "nope", "--rate", kPhi1}).code, 1);
  const auto rate_file = write(dir / "rate.json", kPhi1).string();
  EXPECT_EQ(run({"--out", dir.string(), "--format", "json", "certify", csv, "--signal", "x2", "--rate", rate_file}).code, 0);
}

TEST(Simulate, DeterministicOutput) {
  const auto dir = scratch_dir();
  ASSERT_EQ(run({"--out", (dir / "a").string(), "simulate", "--preset", "remark2"}).code, 0);
  ASSERT_EQ(run({"--out", (dir / "b").string(), "simulate", "--preset", "remark2", "--jobs", "4"}).code, 0);
  const auto a = slurp(dir / "a" / "remark2.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir / "b" / "remark2.csv"));
  EXPECT_EQ(a.find('\r'), std::string::npos);
}

TEST(Simulate, ConfigRunsAndJsonFormat) {
  const auto dir = scratch_dir();
  const auto cfg = write(dir / "runs.json", R"({"runs": [
    {"name": "short", "preset": "example2-soft", "integrator": {"t_end": 1.0}},
    {"name": "c2", "preset": "remark2", "params": {"c": 2.0}, "x0": [0.5, -1], "T": 2}
  ]})");
  const auto r = run({"--out", dir.string(), "--format", "json", "simulate", "--config", cfg.string(), "--max-rows", "50"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto traj = json::parse(slurp(dir / "short.json"));
  EXPECT_NEAR(traj.at("data").at("t").back().get<double>(), 1.0, 1e-12);
  EXPECT_LE(traj.at("data").at("t").size(), 50u);
  EXPECT_TRUE(traj.at("data").contains("u2"));
  const auto meta = json::parse(slurp(dir / "c2.meta.json"));
  EXPECT_EQ(meta.at("horizon").at("T"), 2.0);
  EXPECT_EQ(meta.at("config").at("c"), 2.0);
  EXPECT_EQ(meta.at("config").at("x0"), json({0.5, -1.0}));
}

TEST(Simulate, InputErrorsExitOne) {
  const auto dir = scratch_dir();
  const auto out = dir.string();
  EXPECT_EQ(run({"--out", out, "simulate", "--config", write(dir / "e.json", "{}").string()}).code, 1);
  EXPECT_EQ(run({"--out", out, "simulate", "--config", write(dir / "blank.json", "").string()}).code, 1);
  const auto broken = run({"--out", out, "simulate", "--config", write(dir / "b.json", "{\n  \"preset\": \"example1\",\n  \"T\": 5,,\n}").string()});
  EXPECT_EQ(broken.code, 1);
  EXPECT_NE(broken.err.find("b.json:3:"), std::string::npos) << broken.err;
  const auto unknown = run({"--out", out, "simulate", "--config", write(dir / "u.json", R"({"preset": "example1", "dt": 1})").string()});
  EXPECT_EQ(unknown.code, 1);
  EXPECT_NE(unknown.err.find("'dt'"), std::string::npos);
  const auto typed = run({"--out", out, "simulate", "--config", write(dir / "t.json", R"({"preset": "example1", "T": "five"})").string()});
  EXPECT_EQ(typed.code, 1);
  EXPECT_NE(typed.err.find("'T'"), std::string::npos);
  EXPECT_EQ(run({"--out", out, "simulate", "--config", write(dir / "n.json", R"({"preset": "example7"})").string()}).code, 1);
  EXPECT_EQ(run({"--out", out, "simulate", "--preset", "example7"}).code, 1);
  EXPECT_EQ(run({"--out", out, "simulate"}).code, 1);
  EXPECT_EQ(run({"--out", out, "simulate", "--preset", "remark2", "--T", "-1"}).code, 1);
  EXPECT_EQ(run({"--out", out, "simulate", "--preset", "remark2", "--T", "5", "--Tbar", "4"}).code, 1);
  EXPECT_EQ(run({"--out", out, "--format", "xml", "simulate", "--preset", "remark2"}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Simulate, NumericalFailuresExitTwo) {
  const auto dir = scratch_dir();
  const auto out = dir.string();
  // x1^3 overflows on the first stage
  const auto nonfinite = write(dir / "nf.json", R"({"preset": "example1", "x0": [1e103, 0]})");
  EXPECT_EQ(run({"--out", out, "simulate", "--config", nonfinite.string()}).code, 2);
  const auto budget = write(dir / "ms.json", R"({"preset": "remark2", "integrator": {"max_steps": 10}})");
  EXPECT_EQ(run({"--out", out, "simulate", "--config", budget.string()}).code, 2);
}

TEST(Verify, SpecsAndPresets) {
  const auto dir = scratch_dir();
  const auto out = dir.string();
  const auto g = derive_gains_example2(Example2Params::reference(5.05));
  json ex2 = {{"topology", "feedback2"},
              {"systems", {{{"phi", {{"T", 5.05}, {"offset", 6.0}, {"terms", {{{"k", 2}, {"c", 1.0}}}}}}, {"a", g.a1}},
                           {{"phi", {{"T", 5.05}, {"offset", 6.0}, {"terms", {{{"k", 3}, {"c", 1.0}}}}}}, {"a", g.a2}}}},
              {"b", {{0.0, g.b1}, {g.b2, 0.0}}}};
  const auto r = run({"--out", out, "verify", write(dir / "ex2.json", ex2.dump()).string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("PT-C-certified"), std::string::npos);
  const auto report = json::parse(slurp(dir / "theorem_report.json"));
  EXPECT_EQ(report.at("theorem"), "T4");

  json boundary = ex2;
  boundary["b"] = {{0.0, 1.0}, {0.5, 0.0}};  // a1 a2 = b1 b2
  EXPECT_EQ(run({"--out", out, "verify", write(dir / "bd.json", boundary.dump()).string()}).code, 3);

  json t6 = {{"topology", "feedbackN"},
             {"systems", {{{"phi", {{"T", 5.0}, {"terms", {{{"k", 2}, {"c", 1.0}}}}}}, {"a", 1.0}},
                          {{"phi", {{"T", 5.0}, {"terms", {{{"k", 3}, {"c", 1.0}}}}}}, {"a", 1.0}},
                          {{"phi", {{"T", 5.0}, {"terms", {{{"k", 4}, {"c", 1.0}}}}}}, {"a", 1.0}}}},
             {"b", {{0.0, 0.1, 0.1}, {0.1, 0.0, 0.1}, {0.1, 0.1, 0.0}}}};
  const auto r6 = run({"--out", out, "--format", "json", "verify", write(dir / "t6.json", t6.dump()).string()});
  EXPECT_EQ(r6.code, 0) << r6.err;
  const auto j6 = json::parse(r6.out);
  EXPECT_EQ(j6.at("theorem"), "T6");
  // row sums of the coupling are 0.2, so delta = 1 - 0.2 with uniform q
  EXPECT_NEAR(j6.at("witnesses").at("delta").get<double>(), 0.8, 1e-9);
  EXPECT_EQ(j6.at("witnesses").at("q").size(), 3u);

  EXPECT_EQ(run({"--out", out, "verify", write(dir / "bad.json", R"({"topology": "ring"})").string()}).code, 1);
  EXPECT_EQ(run({"--out", out, "verify", write(dir / "m.json", R"({"topology": "feedback2", "systems": [})").string()}).code, 1);
  EXPECT_EQ(run({"--out", out, "verify", (dir / "missing.json").string()}).code, 1);
  EXPECT_EQ(run({"--out", out, "verify", "--preset", "example2-paper"}).code, 0);
  EXPECT_EQ(run({"--out", out, "verify", "--preset", "example2-soft"}).code, 3);
  EXPECT_EQ(run({"--out", out, "verify", "--preset", "example1"}).code, 0);
}

TEST(DecayRate, Outputs) {
  const auto dir = scratch_dir();
  const auto out = dir.string();
  auto r = run({"--out", out, "--format", "json", "decay-rate", write(dir / "d.json", R"({"a": [1, 2]})").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  EXPECT_NEAR(j.at("delta").get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(j.at("bisection_delta").get<double>(), 1.0, 1e-8);

  const auto g = derive_gains_example2(Example2Params::reference(5.05));
  json A = {{"A", {{-g.a1, g.b1}, {g.b2, -g.a2}}}};
  r = run({"--out", out, "--format", "json", "decay-rate", write(dir / "ex2.json", A.dump()).string()});
  ASSERT_EQ(r.code, 0) << r.err;
  j = json::parse(r.out);
  const double alpha = (-(g.a1 + g.a2) + std::sqrt((g.a1 - g.a2) * (g.a1 - g.a2) + 4 * g.b1b2())) / 2;
  EXPECT_NEAR(j.at("delta").get<double>(), -alpha, 1e-10);
  EXPECT_EQ(json::parse(slurp(dir / "decay_rate.json")).at("delta"), j.at("delta"));

  r = run({"--out", out, "decay-rate", write(dir / "nh.json", R"({"a": [1, 1], "b": [[0, 2], [2, 0]]})").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(run({"--out", out, "decay-rate", write(dir / "neg.json", R"({"a": [1, -1]})").string()}).code, 1);
  EXPECT_EQ(run({"--out", out, "decay-rate", write(dir / "nk.json", R"({"b": [[0]]})").string()}).code, 1);

  r = run({"--out", out, "--format", "json", "decay-rate", R"( {"a": [2, 3]})"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(json::parse(r.out).at("delta").get<double>(), 2.0, 1e-10);
  EXPECT_EQ(run({"--out", out, "decay-rate", R"({"a": [2, )"}).code, 1);
}

TEST(Certify, ViolationsAndHorizon) {
  const auto dir = scratch_dir();
  const auto out = dir.string();
  std::string csv = "t,q\n";
  for (int i = 0; i < 100; ++i) csv += std::to_string(0.049 * i) + ",1\n";
  const auto path = write(dir / "const.csv", csv).string();
  // no meta file beside it, so the horizon must come from flags
  EXPECT_EQ(run({"--out", out, "certify", path, "--signal", "q", "--rate", kPhi1}).code, 1);
  const auto r = run({"--out", out, "certify", path, "--signal", "q", "--rate", kPhi1, "--T", "5"});
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(json::parse(slurp(dir / "certificate_q.json")).at("verdict"), "Violated");
  EXPECT_EQ(run({"--out", out, "certify", write(dir / "bad.csv", "t,q\n0,x\n").string(), "--signal", "q", "--rate", kPhi1, "--T", "5"}).code, 1);
  EXPECT_EQ(run({"--out", out, "certify", path, "--signal", "q", "--rate", "{oops", "--T", "5"}).code, 1);
}

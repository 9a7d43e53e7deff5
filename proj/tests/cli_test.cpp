#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "grasscat/grasscat.hpp"
#include "test_support.hpp"

using namespace grasscat;
namespace tk = grasscat::testkit;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(GRASSCAT_TEST_TMP) / ::testing::UnitTest::GetInstance()->current_test_info()->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    const auto s = tk::reader_schema();
    write_text_file(path("schema.json"), schema_to_json(s).dump(2) + "\n");
    write_text_file(path("data.csv"), records_to_csv(s, sample_records(tk::reader_params(), s, 400, 3)));
    ModelFile m;
    m.schema = s;
    m.kind = ModelKind::Grassmann;
    m.grassmann = tk::reader_params();
    write_text_file(path("reader.json"), serialize_model(m));
  }

  std::string path(const std::string& f) const { return (dir_ / f).string(); }

  CliRun run(const std::string& args) const {
    const auto log = dir_ / "last.out";
    const std::string cmd = std::string("\"") + GRASSCAT_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
  }

  fs::path dir_;
};

double value_after(const std::string& text, const std::string& key) {
  const auto at = text.find(key);
  if (at == std::string::npos) return std::nan("");
  return std::stod(text.substr(at + key.size()));
}

}  // namespace

TEST_F(Cli, HelpAndUsageCodes) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("fit --help").code, 0);
  EXPECT_EQ(run("--no-such-flag").code, 64);
  EXPECT_EQ(run("").code, 64);
  EXPECT_EQ(run("fit --schema x.json").code, 64);  // missing required flags
  const auto h = run("fa fit --help");
  EXPECT_NE(h.out.find("--latent-dim"), std::string::npos);
  EXPECT_NE(h.out.find("--continuous"), std::string::npos);
}

TEST_F(Cli, ValidationErrorsExitOne) {
  write_text_file(path("bad.csv"), "Working,Age,Education\n0,3,1\n");
  const auto r = run("validate --schema " + path("schema.json") + " --data " + path("bad.csv"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("line 2"), std::string::npos) << r.out;
  EXPECT_EQ(run("moments --model " + path("missing.json")).code, 1);
  EXPECT_EQ(run("prob --model " + path("reader.json") + " --query Nope=1").code, 1);
}

TEST_F(Cli, ValidateReportsCounts) {
  const auto r = run("validate --schema " + path("schema.json") + " --data " + path("data.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("q=6"), std::string::npos);
  EXPECT_NE(r.out.find("allowed states: 24"), std::string::npos);
  EXPECT_NE(r.out.find("400 rows"), std::string::npos);
}

TEST_F(Cli, ProbMatchesEnumeration) {
  const auto r = run("prob --model " + path("reader.json") + " --given Age=2 --query \"Education>=3\"");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto s = tk::reader_schema();
  const auto p = tk::reader_params();
  double joint = 0.0, given = 0.0;
  for (const auto& rec : enumerate_records(s)) {
    const double pr = joint_probability(p, encode_record(s, rec));
    if (rec[1] == 2) {
      given += pr;
      if (rec[2] >= 3) joint += pr;
    }
  }
  EXPECT_NEAR(value_after(r.out, "P(query | given) = "), joint / given, 1e-12);
  EXPECT_NEAR(value_after(r.out, "P(given) = "), given, 1e-12);
}

TEST_F(Cli, ProbOnZeroProbabilityConditionIsNumerical) {
  // Education<0 can never hold
  EXPECT_EQ(run("prob --model " + path("reader.json") + " --given \"Education<0\" --query Age=1").code, 2);
}

TEST_F(Cli, FitWritesLoadableModel) {
  const auto r = run("fit --schema " + path("schema.json") + " --data " + path("data.csv") + " --out " +
                     path("fit.json") + " --latent-dim 2 --restarts 1 --mean-out " + path("means.csv") +
                     " --correlation-out " + path("corr.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto m = load_model(path("fit.json"));
  EXPECT_EQ(m.kind, ModelKind::Grassmann);
  ASSERT_TRUE(m.structured.has_value());
  EXPECT_EQ(serialize_model(m), slurp(path("fit.json")));
  const auto means = slurp(path("means.csv"));
  EXPECT_EQ(means.rfind("dummy,model,empirical\n", 0), 0U);
  EXPECT_EQ(std::count(means.begin(), means.end(), '\n'), 7);
  const auto corr = slurp(path("corr.csv"));
  EXPECT_EQ(std::count(corr.begin(), corr.end(), '\n'), 37);
}

TEST_F(Cli, MomentsAgreeWithLibrary) {
  ASSERT_EQ(run("moments --model " + path("reader.json") + " --mean-out " + path("mean.csv")).code, 0);
  const auto text = slurp(path("mean.csv"));
  const auto mo = moments(tk::reader_params());
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  for (int r = 0; r < 6; ++r) {
    ASSERT_TRUE(std::getline(in, line));
    const auto f = split_csv_line(line);
    EXPECT_NEAR(std::stod(f[1]), mo.mean(r), 1e-15);
  }
}

TEST_F(Cli, SampleIsDeterministicAndInRange) {
  ASSERT_EQ(run("sample --model " + path("reader.json") + " --n 1000 --seed 7 --out " + path("a.csv")).code, 0);
  ASSERT_EQ(run("sample --model " + path("reader.json") + " --n 1000 --seed 7 --out " + path("b.csv")).code, 0);
  ASSERT_EQ(run("sample --model " + path("reader.json") + " --n 1000 --seed 8 --out " + path("c.csv")).code, 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_NE(slurp(path("a.csv")), slurp(path("c.csv")));
  const auto t = load_data_csv(path("a.csv"), tk::reader_schema());
  EXPECT_EQ(t.rows.size(), 1000U);
}

TEST_F(Cli, OracleCheckPasses) {
  const auto r = run("oracle check --model " + path("reader.json"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST_F(Cli, FactorFitBicAndBiplot) {
  const auto r = run("fa fit --schema " + path("schema.json") + " --data " + path("data.csv") + " --out " +
                     path("fa.json") + " --bic-range 0:2 --restarts 1 --bic-out " + path("bic.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("chosen p_z="), std::string::npos);
  const auto bic = slurp(path("bic.csv"));
  EXPECT_EQ(std::count(bic.begin(), bic.end(), '\n'), 4);
  const auto m = load_model(path("fa.json"));
  ASSERT_EQ(m.kind, ModelKind::Factor);

  const auto b = run("fa biplot --model " + path("fa.json") + " --data " + path("data.csv") + " --out-svg " +
                     path("b.svg") + " --out-scores " + path("s.csv") + " --out-loadings " + path("l.csv"));
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_EQ(slurp(path("b.svg")).rfind("<svg", 0), 0U);
  EXPECT_EQ(slurp(path("s.csv")).rfind("row_id,pc1,pc2,multiplicity\n", 0), 0U);
  EXPECT_EQ(slurp(path("l.csv")).rfind("variable,level_label,pc1,pc2\n", 0), 0U);
}

TEST_F(Cli, FactorFitWithContinuousColumns) {
  tk::Rng rng(5);
  const auto s = tk::reader_schema();
  FactorModel fm;
  fm.b = tk::gaussian_vector(rng, 6, 0.5);
  fm.g = tk::gaussian_matrix(rng, 6, 1, 0.6);
  fm.mu_x = Vector::Zero(2);
  fm.psi = Vector::Ones(2);
  fm.w_load = tk::gaussian_matrix(rng, 2, 1);
  fm.mu_z = Vector::Zero(1);
  fm.sigma_z = Matrix::Identity(1, 1);
  const auto smp = sample_factor(fm, s, 300, 2);
  write_text_file(path("mixed.csv"), records_to_csv(s, smp.rows, &smp.x, {"h", "w"}));
  const auto r = run("fa fit --schema " + path("schema.json") + " --data " + path("mixed.csv") +
                     " --continuous h,w --latent-dim 1 --restarts 1 --out " + path("fa.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto m = load_model(path("fa.json"));
  EXPECT_EQ(m.factor.p_x(), 2);
  EXPECT_EQ(m.continuous, (std::vector<std::string>{"h", "w"}));
  ASSERT_EQ(run("sample --model " + path("fa.json") + " --n 50 --seed 1 --out " + path("fs.csv")).code, 0);
  EXPECT_EQ(load_data_csv(path("fs.csv"), s, {"h", "w"}).x.rows(), 50);
}

TEST_F(Cli, MixedEvalMarginalAndConditional) {
  tk::Rng rng(9);
  ModelFile mf;
  mf.schema = tk::schema_of({{VariableKind::Categorical, 2}, {VariableKind::Categorical, 2}});
  mf.kind = ModelKind::Mixed;
  mf.mixed.mu = Vector::Zero(2);
  mf.mixed.sigma = Matrix::Identity(2, 2);
  mf.mixed.lambda = tk::random_valid_params(rng, 2).lambda();
  mf.mixed.g_int = tk::gaussian_matrix(rng, 2, 2, 0.5);
  mf.continuous = {"x1", "x2"};
  write_text_file(path("mixed.json"), serialize_model(mf));

  const auto joint = run("mixed eval --model " + path("mixed.json") + " --x 0.5,-0.25 --y 1,0");
  ASSERT_EQ(joint.code, 0) << joint.out;
  Vector x(2);
  x << 0.5, -0.25;
  EXPECT_NEAR(value_after(joint.out, "density = "), mixed_joint_density(mf.mixed, x, 0b01), 1e-15);

  const auto cond = run("mixed eval --model " + path("mixed.json") + " --x 0.5,? --y 1,? --given x1 --given v0");
  ASSERT_EQ(cond.code, 0) << cond.out;
  const MixedPartition part{{}, {1}, {0}, {}, {1}, {0}};
  EXPECT_NEAR(value_after(cond.out, "conditional density = "), mixed_conditional_density(mf.mixed, part, x, 0b01),
              1e-15);
  EXPECT_EQ(run("mixed eval --model " + path("mixed.json") + " --x 0.5 --y 1,0").code, 1);
  EXPECT_EQ(run("mixed eval --model " + path("reader.json") + " --x 0.5 --y 1").code, 1);
}

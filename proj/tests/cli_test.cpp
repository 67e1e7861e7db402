#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>

#include "support.hpp"

namespace secpol {
namespace {

namespace fs = std::filesystem;
using testing::data_path;
using testing::read_file;

struct Outcome {
  int code = -1;
  std::string out;
};

// Runs the CLI with `args`; stderr is discarded unless `merge` is set.
Outcome cli(const std::string& args, bool merge = false) {
  std::string cmd = std::string(SECPOL_CLI) + " " + args + (merge ? " 2>&1" : " 2>/dev/null");
  Outcome o;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return o;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) o.out.append(buf, n);
  int status = pclose(p);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string pol(const std::string& name) { return "--policies " + data_path("policies/" + name); }

TEST(Cli, NoArgumentsPrintsSynopsisAndExitsTwo) {
  Outcome o = cli("", true);
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.out.find("Usage:"), std::string::npos);
  EXPECT_NE(o.out.find("validate"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("compile " + pol("acyclic.pol") + " --strategy warp-speed --out /tmp/x").code, 2);
  EXPECT_EQ(cli("validate --policies /nonexistent/file.pol").code, 2);
  EXPECT_EQ(cli("classify").code, 2);
}

TEST(Cli, ValidateBundledAcyclicExitsZero) {
  Outcome o = cli("validate --schema " + data_path("tpch_schema.json") + " " + pol("acyclic.pol"));
  EXPECT_EQ(o.code, 0);
  EXPECT_NE(o.out.find("ACYCLIC"), std::string::npos);
}

TEST(Cli, ValidateReportsFindingsWithExitOne) {
  fs::path f = fs::temp_directory_path() / ("secpol_cli_bad_" + std::to_string(getpid()) + ".pol");
  {
    std::FILE* w = std::fopen(f.c_str(), "w");
    std::fputs("policy bad on customer using (c_acctbal > 0) mask (c_zip => null, * => keep);\n", w);
    std::fclose(w);
  }
  Outcome o = cli("validate --policies " + f.string());
  fs::remove(f);
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.out.find("c_zip"), std::string::npos);
}

TEST(Cli, TiersOnCyclicSuitePrintsPathAndExitsOne) {
  Outcome o = cli("tiers " + pol("cyclic.pol"));
  EXPECT_EQ(o.code, 1);
  EXPECT_EQ(o.out, "CYCLIC: orders -> orders\n");
}

TEST(Cli, TiersOnAcyclicSuite) {
  Outcome o = cli("tiers " + pol("acyclic.pol"));
  EXPECT_EQ(o.code, 0);
  for (const char* line : {"supplier 1\n", "customer 1\n", "partsupp 2\n", "lineitem 3\n", "orders 0 (base)\n"})
    EXPECT_NE(o.out.find(line), std::string::npos) << line;
}

TEST(Cli, ClassifyListsEveryAtomicPolicy) {
  Outcome o = cli("classify " + pol("composite.pol"));
  EXPECT_EQ(o.code, 0);
  EXPECT_EQ(o.out.rfind("policy,relation,class,mask\n", 0), 0u);
  EXPECT_NE(o.out.find(",customer,"), std::string::npos);
  EXPECT_NE(o.out.find(",masking"), std::string::npos);
}

TEST(Cli, CompileWritesArtifactFiles) {
  fs::path dir = fs::temp_directory_path() / ("secpol_cli_art_" + std::to_string(getpid()));
  Outcome o = cli("compile " + pol("cyclic.pol") + " --strategy udf --out " + dir.string());
  EXPECT_EQ(o.code, 0);
  EXPECT_TRUE(fs::exists(dir / "udf_setup.sql"));
  EXPECT_TRUE(fs::exists(dir / "udf_teardown.sql"));
  EXPECT_TRUE(fs::exists(dir / "udf_manifest.json"));
  // Artifact files hold SQL only.
  EXPECT_EQ(read_file((dir / "udf_setup.sql").string()).find("error"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, CompileGatesExitOne) {
  EXPECT_EQ(cli("compile " + pol("composite.pol") + " --strategy pure-rls --out /tmp/secpol_cli_gate").code, 1);
  EXPECT_EQ(cli("compile " + pol("cyclic.pol") + " --strategy inline-rewrite --out /tmp/secpol_cli_gate").code, 1);
  EXPECT_FALSE(fs::exists("/tmp/secpol_cli_gate"));
}

TEST(Cli, OracleRendersCompositeExample) {
  Outcome o = cli("oracle " + pol("composite.pol") + " --instance " + data_path("fixtures/composite"));
  EXPECT_EQ(o.code, 0);
  EXPECT_EQ(o.out,
            "-- customer\n"
            "c_custkey,visibility,c_custkey,c_name,c_address,c_nationkey,c_phone,c_acctbal,c_mktsegment,c_comment\n"
            "1,full,1,Customer#000000001,12 Elm St,7,17-123-456-7890,711.56,BUILDING,loyal\n"
            "2,masked,2,Customer#000000002,MASKED,7,MASKED,121.65,AUTOMOBILE,returns often\n"
            "3,masked,3,Customer#000000003,,,,,,\n");
}

TEST(Cli, ReportRecomputesRatios) {
  fs::path dir = fs::temp_directory_path() / ("secpol_cli_rep_" + std::to_string(getpid()));
  fs::create_directories(dir);
  {
    std::FILE* w = std::fopen((dir / "results.csv").c_str(), "w");
    std::fputs(
        "query,strategy,rep,planning_ms,execution_ms,timed_out\n"
        "q1,pure-rls,1,1.000,100.000,false\n"
        "q1,secure-view,1,2.000,50.000,false\n"
        "q2,pure-rls,1,,,true\n"
        "q2,secure-view,1,1.000,5.000,false\n",
        w);
    std::fclose(w);
  }
  Outcome o = cli("report --results " + (dir / "results.csv").string() + " --out " + (dir / "out").string());
  EXPECT_EQ(o.code, 0);
  EXPECT_EQ(read_file((dir / "out" / "ratios.csv").string()),
            "query,strategy,planning_ratio,execution_ratio,marker\n"
            "q1,pure-rls,1.000000,1.000000,\n"
            "q1,secure-view,2.000000,0.500000,\n"
            "q2,pure-rls,,,timeout\n"
            "q2,secure-view,,,baseline-timeout\n");
  fs::remove_all(dir);
}

}  // namespace
}  // namespace secpol

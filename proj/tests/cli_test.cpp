#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>

#include "test_support.hpp"
#include "volseg/bound_lab.hpp"
#include "volseg/sample_io.hpp"

namespace volseg {
namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(VOLSEG_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (const std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto r = run("phantom --dims 32,32,16 --material 0.1,0.0,0.6 --material 0.9,0.0,0.4 --seed 3 --out " +
                       (dir / "p.raw").string() + " --truth " + (dir / "truth.raw").string());
    ASSERT_EQ(r.code, 0) << r.out;
    meta = (dir / "p.meta").string();
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }

  testing::TempDir dir;
  std::string meta;
};

TEST_F(Cli, SampleWritesRequestedSize) {
  const auto r = run("sample " + meta + " --strategy exp:4 --size 4096 --seed 7 --out " + path("s.bin"));
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("seed 7"), std::string::npos);
  const auto s = read_sample(path("s.bin"));
  EXPECT_EQ(s.size(), 4096u);
  EXPECT_EQ(s.seed, 7u);
}

TEST_F(Cli, SampleMatchesLibrary) {
  ASSERT_EQ(run("sample " + meta + " --strategy linear --strata 3 --size 500 --seed 11 --out " + path("s.bin")).code, 0);
  const auto lib = stratified_sample(open_volume(meta), linear_boundaries(3), 500, 11);
  EXPECT_EQ(read_sample(path("s.bin")).values, lib.sample.values);
}

TEST_F(Cli, PercentResolvesAgainstVoxelCount) {
  ASSERT_EQ(run("sample " + meta + " --percent 0.1 --out " + path("s.bin")).code, 0);
  EXPECT_EQ(read_sample(path("s.bin")).size(), 17u);  // ceil(16384 * 0.001)
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("sample " + meta + " --strategy exp:0 --size 10 --out " + path("s.bin")).code, 2);
  EXPECT_EQ(run("sample " + meta + " --strategy cubic --size 10 --out " + path("s.bin")).code, 2);
  EXPECT_EQ(run("sample " + meta + " --size 10 --bogus --out " + path("s.bin")).code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
}

TEST_F(Cli, RuntimeErrorsExitOne) {
  EXPECT_EQ(run("sample " + path("missing.meta") + " --size 10 --out " + path("s.bin")).code, 1);
}

TEST_F(Cli, SegmentReproducesTruthAndIsDeterministic) {
  const std::string args = "segment " + meta + " --model gmm --clusters 2 --size 256 --seed 5 --out ";
  const auto a = run(args + path("a.raw"));
  ASSERT_EQ(a.code, 0);
  EXPECT_NE(a.out.find("seed 5"), std::string::npos);
  ASSERT_EQ(run(args + path("b.raw")).code, 0);
  EXPECT_EQ(testing::read_bytes(path("a.raw")), testing::read_bytes(path("b.raw")));

  const auto e = run("eval " + path("a.meta") + " " + path("truth.meta"));
  ASSERT_EQ(e.code, 0);
  EXPECT_NE(e.out.find("fm 1.000000"), std::string::npos) << e.out;
  EXPECT_NE(e.out.find("nmi 1.000000"), std::string::npos);
}

TEST_F(Cli, SegmentWithTooSmallSampleFails) {
  const auto r = run("segment " + meta + " --clusters 5 --size 3 --out " + path("l.raw"));
  EXPECT_NE(r.code, 0);
}

TEST_F(Cli, FitThenSegmentWithModelFile) {
  ASSERT_EQ(run("sample " + meta + " --size 300 --seed 2 --out " + path("s.bin")).code, 0);
  ASSERT_EQ(run("fit --sample " + path("s.bin") + " --model kmeans --clusters 2 --out " + path("m.txt")).code, 0);
  const auto r = run("segment " + meta + " --model-file " + path("m.txt") + " --report-kv --out " + path("l.raw"));
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("passes=1"), std::string::npos) << r.out;
  EXPECT_EQ(run("eval " + path("l.meta") + " " + path("truth.meta")).out, "fm 1.000000\nnmi 1.000000\n");
}

TEST_F(Cli, EvalExamples) {
  const VolumeHandle h(path("x.meta"), path("x.raw"), {4, 1, 1}, ElementType::U8, ByteOrder::Little);
  const std::vector<int> constant{0, 0, 0, 0}, binary{0, 0, 1, 1}, longer{0, 1, 0, 1, 0};
  write_labels(h, std::span<const int>(constant), path("c.raw"));
  write_labels(h, std::span<const int>(binary), path("b.raw"));
  const auto self = run("eval " + path("b.meta") + " " + path("b.meta"));
  EXPECT_EQ(self.out, "fm 1.000000\nnmi 1.000000\n");
  EXPECT_NE(run("eval " + path("c.meta") + " " + path("b.meta")).out.find("nmi 0.000000"), std::string::npos);
  const VolumeHandle h5(path("y.meta"), path("y.raw"), {5, 1, 1}, ElementType::U8, ByteOrder::Little);
  write_labels(h5, std::span<const int>(longer), path("five.raw"));
  EXPECT_NE(run("eval " + path("five.meta") + " " + path("b.meta")).code, 0);
}

TEST_F(Cli, BenchPrintsScalingTable) {
  const auto r = run("bench " + meta + " --sizes 64,256 --seeds 30 --grid 16 --seed 1");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("M\tmedian\tq1\tq3\n64\t"), std::string::npos) << r.out;
  EXPECT_EQ(run("bench " + meta + " --sizes 256,64 --seeds 30").code, 2);
}

TEST_F(Cli, RandomSeedIsReported) {
  const auto r = run("sample " + meta + " --size 10 --seed random --out " + path("s.bin"));
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("seed ", 0), 0u);
}

}  // namespace
}  // namespace volseg

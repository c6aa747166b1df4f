// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "fixtures.hpp"
#include "foldpc/ply.hpp"

#ifndef FOLDPC_CLI_PATH
#error "FOLDPC_CLI_PATH must point at the foldpc executable"
#endif

using namespace foldpc;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int status = -1;
  std::string output;
};

CliRun run(const std::string& args) {
  const std::string cmd = std::string(FOLDPC_CLI_PATH) + " " + args + " 2>&1";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("foldpc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
    save_ply(fixtures::plane(120), path("plane.ply"));
    PointCloud other = fixtures::plane(120);
    other.positions[5].y += 0.25;
    save_ply(other, path("other.ply"));
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

const char* kQuick = "--iterations 40 --refine-iterations 20";

}  // namespace

TEST_F(Cli, SelftestPasses) {
  const CliRun r = run("selftest");
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(r.output.find("FAIL"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("PASS"), std::string::npos);
}

TEST_F(Cli, HelpShowsDefaults) {
  const CliRun r = run("encode --help");
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.output.find("--alpha"), std::string::npos);
  EXPECT_NE(r.output.find("0.333333"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("1e-06"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("[9]"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("[100]"), std::string::npos) << r.output;
}

TEST_F(Cli, EncodeDecodeRoundTrip) {
  const CliRun enc = run("encode " + path("plane.ply") + " " + path("a.bin") + " --codec lossless " + kQuick);
  ASSERT_EQ(enc.status, 0) << enc.output;
  EXPECT_NE(enc.output.find("\"bpp\""), std::string::npos);
  const CliRun dec = run("decode " + path("plane.ply") + " " + path("a.bin") + " " + path("out.ply"));
  ASSERT_EQ(dec.status, 0) << dec.output;
  const PointCloud in = load_ply(path("plane.ply"));
  const PointCloud out = load_ply(path("out.ply"));
  EXPECT_EQ(out.positions, in.positions);
  ASSERT_EQ(out.colors.size(), in.colors.size());
  if (enc.output.find("\"max_occupancy\": 1") != std::string::npos) EXPECT_EQ(out.colors, in.colors);
}

TEST_F(Cli, SameSeedGivesIdenticalFiles) {
  ASSERT_EQ(run("encode " + path("plane.ply") + " " + path("a.bin") + " --seed 7 " + kQuick).status, 0);
  ASSERT_EQ(run("encode " + path("plane.ply") + " " + path("b.bin") + " --seed 7 --threads 3 " + kQuick).status, 0);
  EXPECT_EQ(slurp(path("a.bin")), slurp(path("b.bin")));
  ASSERT_EQ(run("encode " + path("plane.ply") + " " + path("c.bin") + " --seed 8 " + kQuick).status, 0);
  EXPECT_NE(slurp(path("a.bin")), slurp(path("c.bin")));
}

TEST_F(Cli, ExitCodes) {
  ASSERT_EQ(run("encode " + path("plane.ply") + " " + path("a.bin") + " " + kQuick).status, 0);
  EXPECT_EQ(run("decode " + path("other.ply") + " " + path("a.bin") + " " + path("x.ply")).status, 3);
  std::ofstream(path("junk.bin")) << "not a bitstream";
  EXPECT_EQ(run("decode " + path("plane.ply") + " " + path("junk.bin") + " " + path("x.ply")).status, 2);
  EXPECT_EQ(run("encode --bogus-flag").status, 2);
  EXPECT_EQ(run("encode " + path("plane.ply") + " " + path("a.bin") + " --qp 99").status, 2);
  const CliRun missing = run("encode " + path("plane.ply") + " " + path("d.bin") + " --codec bpg --bpgenc /nonexistent/enc " + kQuick);
  EXPECT_EQ(missing.status, 4) << missing.output;
  EXPECT_NE(missing.output.find("stage compress"), std::string::npos) << missing.output;
}

TEST_F(Cli, SweepReportsFailuresAndKeepsGoing) {
  const CliRun r = run("sweep " + path("plane.ply") + " --qp 20,30 --bpgenc /nonexistent/enc " + kQuick);
  EXPECT_EQ(r.status, 4) << r.output;
  EXPECT_NE(r.output.find("qp,bpp,y_psnr,stage"), std::string::npos);
  EXPECT_NE(r.output.find("qp 20:"), std::string::npos);
  EXPECT_NE(r.output.find("qp 30:"), std::string::npos);
}

TEST_F(Cli, AblateEmitsJson) {
  const CliRun r = run("ablate " + path("plane.ply") + " " + kQuick);
  ASSERT_EQ(r.status, 0) << r.output;
  for (const char* key : {"\"folded\"", "\"refined\"", "\"optimized\"", "\"occupancy_histogram\"", "\"y_psnr\""})
    EXPECT_NE(r.output.find(key), std::string::npos) << key;
}

// SPDX-License-Identifier: Apache-2.0
//
// foldpc command-line front end.
//
// Exit codes: 0 ok, 1 other failure, 2 parse error (bad arguments, malformed
// PLY or bitstream), 3 geometry checksum mismatch, 4 external codec failure,
// 5 determinism violation.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "foldpc/foldpc.hpp"

namespace {

using foldpc::ErrorKind;
using json = nlohmann::json;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return 2;
    case ErrorKind::checksum: return 3;
    case ErrorKind::external_codec: return 4;
    case ErrorKind::determinism: return 5;
    default: return 1;
  }
}

json psnr_value(double db) { return std::isinf(db) ? json("inf") : json(db); }

std::string format_psnr(double db) {
  if (std::isinf(db)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", db);
  return buf;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) foldpc::fail(ErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) foldpc::fail(ErrorKind::io, "cannot write " + path.string());
}

struct Options {
  foldpc::PipelineConfig config;
  std::string codec = "lossless";
  int qp = 30;
  std::string stage = "optimized";
  unsigned threads = 1;
  std::string bpgenc;
  std::string bpgdec;

  foldpc::ExternalCodec tools() const {
    foldpc::ExternalCodec t = foldpc::ExternalCodec::from_environment();
    if (!bpgenc.empty()) t.encoder = bpgenc;
    if (!bpgdec.empty()) t.decoder = bpgdec;
    return t;
  }

  foldpc::Execution exec() const { return {threads}; }

  // CLI strings -> config; called after parsing.
  void finish() {
    config.codec = codec == "bpg" ? foldpc::CodecChoice::bpg(qp) : foldpc::CodecChoice::lossless();
    config.stage = stage == "folded"    ? foldpc::Stage::folded
                   : stage == "refined" ? foldpc::Stage::refined
                                        : foldpc::Stage::optimized;
  }
};

void add_runtime_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--threads", o.threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  cmd->add_option("--bpgenc", o.bpgenc, "External encoder binary (default: $FOLDPC_BPGENC or bpgenc)");
  cmd->add_option("--bpgdec", o.bpgdec, "External decoder binary (default: $FOLDPC_BPGDEC or bpgdec)");
}

void add_config_flags(CLI::App* cmd, Options& o) {
  auto& c = o.config;
  cmd->add_option("--iterations", c.train.iterations, "Training iterations")->capture_default_str();
  cmd->add_option("--learning-rate", c.train.learning_rate, "Adam learning rate")->capture_default_str();
  cmd->add_option("--beta1", c.train.beta1, "Adam beta1")->capture_default_str();
  cmd->add_option("--beta2", c.train.beta2, "Adam beta2")->capture_default_str();
  cmd->add_option("--epsilon", c.train.epsilon, "Adam epsilon")->capture_default_str();
  cmd->add_option("--seed", c.train.seed, "Weight initialization seed")->capture_default_str();
  cmd->add_option("--alpha", c.refine.alpha, "Refinement grid-attraction weight")->capture_default_str();
  cmd->add_option("--refine-iterations", c.refine.iterations, "Refinement iterations")->capture_default_str();
  cmd->add_option("-k,--k", c.k, "Candidate cells per point in the mapping")->capture_default_str();
  cmd->add_option("--min-relative-change", c.min_relative_change, "Expansion stopping threshold")
      ->capture_default_str();
  cmd->add_option("--max-rounds", c.max_rounds, "Maximum expansion rounds")->capture_default_str();
  cmd->add_option("--max-points", c.max_points, "Patch size limit (0 = one patch)")->capture_default_str();
  cmd->add_option("--stage", o.stage, "Mapping stage")
      ->check(CLI::IsMember({"folded", "refined", "optimized"}))
      ->capture_default_str();
  add_runtime_flags(cmd, o);
}

json patch_summary(const foldpc::PatchGeometry& g) {
  return {{"points", g.cloud.size()},
          {"grid", {g.training.grid.width, g.training.grid.height}},
          {"expanded", {g.mapped.grid.width, g.mapped.grid.height}},
          {"max_occupancy", g.table.max_occupancy()},
          {"expansion_rounds", g.expansion.insertions.size()},
          {"expansion_stop", foldpc::to_string(g.expansion.stop)},
          {"chamfer_initial", g.training.initial_loss.chamfer},
          {"chamfer_trained", g.training.final_loss.chamfer}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run_encode(const std::string& in, const std::string& out, const Options& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const foldpc::PointCloud pc = foldpc::load_ply(in);
  const foldpc::EncodeResult r = foldpc::encode_detailed(pc, o.config, o.exec(), o.tools());
  const std::vector<std::uint8_t> bytes = foldpc::serialize(r.bitstream);
  write_file(out, bytes);
  json patches = json::array();
  for (const auto& g : r.prepared.geometry) patches.push_back(patch_summary(g));
  const json report{{"points", pc.size()},
                    {"bytes", bytes.size()},
                    {"bpp", foldpc::bits_per_point(bytes.size(), pc.size())},
                    {"codec", foldpc::to_string(o.config.codec.id)},
                    {"qp", o.config.codec.qp},
                    {"stage", foldpc::to_string(o.config.stage)},
                    {"seconds", seconds_since(t0)},
                    {"patches", patches}};
  std::cout << report.dump(2) << '\n';
  return 0;
}

int run_decode(const std::string& geometry, const std::string& in, const std::string& out, const Options& o) {
  const auto t0 = std::chrono::steady_clock::now();
  foldpc::PointCloud pc = foldpc::load_ply(geometry, foldpc::ColorPolicy::optional);
  const foldpc::Bitstream bs = foldpc::parse(read_file(in));
  const foldpc::DecodeResult r = foldpc::decode_detailed(pc.positions, bs, o.exec(), o.tools());
  pc.colors = r.colors;
  foldpc::save_ply(pc, out);
  const json report{{"points", pc.size()}, {"patches", r.patches.size()}, {"seconds", seconds_since(t0)}};
  std::cout << report.dump(2) << '\n';
  return 0;
}

int run_sweep(const std::string& in, std::vector<int> qps, const std::string& csv_path, const Options& o) {
  const foldpc::PointCloud pc = foldpc::load_ply(in);
  const auto outcomes = foldpc::rd_sweep(pc, o.config, qps, o.exec(), o.tools());
  std::ofstream file;
  if (!csv_path.empty()) {
    file.open(csv_path, std::ios::trunc);
    if (!file) foldpc::fail(ErrorKind::io, "cannot write " + csv_path);
  }
  std::ostream& csv = csv_path.empty() ? std::cout : file;
  csv << "qp,bpp,y_psnr,stage\n";
  int status = 0;
  for (const auto& r : outcomes) {
    if (r.point) {
      char bpp[32];
      std::snprintf(bpp, sizeof bpp, "%.6f", r.point->bpp);
      csv << r.qp << ',' << bpp << ',' << format_psnr(r.point->y_psnr) << ',' << r.point->stage << '\n';
    } else {
      std::cerr << "qp " << r.qp << ": " << r.error << '\n';
      if (status == 0) status = r.error.rfind(foldpc::to_string(ErrorKind::external_codec), 0) == 0 ? 4 : 1;
    }
  }
  return status;
}

int run_ablate(const std::string& in, const Options& o) {
  const foldpc::PointCloud pc = foldpc::load_ply(in);
  const foldpc::AblationReport r = foldpc::run_stage_ablation(pc, o.config, o.exec());
  json stages = json::array();
  for (const auto& s : r.stages) {
    json hist = json::object();
    for (const auto& [occ, count] : s.histogram) hist[std::to_string(occ)] = count;
    stages.push_back({{"stage", foldpc::to_string(s.stage)}, {"y_psnr", psnr_value(s.y_psnr)}, {"cells", s.cells},
                      {"occupancy_histogram", hist}});
  }
  json patches = json::array();
  for (const auto& g : r.geometry) patches.push_back(patch_summary(g));
  std::cout << json{{"points", pc.size()}, {"stages", stages}, {"patches", patches}}.dump(2) << '\n';
  return 0;
}

int run_selftest() {
  int failures = 0;
  for (const foldpc::SelfCheck& c : foldpc::run_selftest()) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name;
    if (!c.passed) {
      std::cout << ": " << c.detail;
      ++failures;
    }
    std::cout << '\n';
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"foldpc: point cloud colour compression by grid folding"};
  app.require_subcommand(1);

  Options opts;
  std::string in, out, geometry, csv;
  std::vector<int> qps = foldpc::default_qp_sweep();

  auto* encode = app.add_subcommand("encode", "Compress the colours of a PLY cloud");
  encode->add_option("input", in, "Coloured PLY")->required()->check(CLI::ExistingFile);
  encode->add_option("output", out, "Bitstream to write")->required();
  add_config_flags(encode, opts);
  encode->add_option("--codec", opts.codec, "Image codec")
      ->check(CLI::IsMember({"lossless", "bpg"}))
      ->capture_default_str();
  encode->add_option("--qp", opts.qp, "Quantization parameter for --codec bpg")
      ->check(CLI::Range(0, 51))
      ->capture_default_str();

  auto* decode = app.add_subcommand("decode", "Restore colours onto a geometry-only PLY");
  decode->add_option("geometry", geometry, "PLY providing positions")->required()->check(CLI::ExistingFile);
  decode->add_option("input", in, "Bitstream")->required()->check(CLI::ExistingFile);
  decode->add_option("output", out, "Coloured PLY to write")->required();
  add_runtime_flags(decode, opts);

  auto* sweep = app.add_subcommand("sweep", "Rate-distortion sweep over QPs (CSV)");
  sweep->add_option("input", in, "Coloured PLY")->required()->check(CLI::ExistingFile);
  sweep->add_option("--qp", qps, "QP list")->delimiter(',')->check(CLI::Range(0, 51));
  sweep->add_option("--csv", csv, "Write the table here instead of stdout");
  add_config_flags(sweep, opts);

  auto* ablate = app.add_subcommand("ablate", "Mapping-only Y-PSNR per pipeline stage (JSON)");
  ablate->add_option("input", in, "Coloured PLY")->required()->check(CLI::ExistingFile);
  add_config_flags(ablate, opts);

  auto* selftest = app.add_subcommand("selftest", "Run the embedded oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    opts.finish();
    if (*encode) return run_encode(in, out, opts);
    if (*decode) return run_decode(geometry, in, out, opts);
    if (*sweep) return run_sweep(in, qps, csv, opts);
    if (*ablate) return run_ablate(in, opts);
    if (*selftest) return run_selftest();
  } catch (const foldpc::Error& e) {
    std::cerr << "foldpc: " << foldpc::to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "foldpc: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

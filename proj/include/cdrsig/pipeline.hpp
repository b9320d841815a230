// Pipeline stages. Each stage reads its inputs from files, writes its
// artifacts into the output directory, and records a manifest with input and
// output hashes.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "cdrsig/core.hpp"
#include "cdrsig/ingest.hpp"
#include "cdrsig/synth.hpp"

namespace cdrsig::pipeline {

inline constexpr std::string_view kVersion = "0.1.0";

struct PipelineConfig {
  // Inputs.
  std::filesystem::path cdr;
  std::filesystem::path towers;
  std::filesystem::path taz;
  std::filesystem::path districts;
  std::filesystem::path labels;
  std::filesystem::path out_dir = "out";

  // Ingest.
  std::string timezone = "Asia/Riyadh";
  std::string timestamp_format = "auto";  // auto | iso8601 | epoch
  std::string window_start;               // optional ISO timestamps
  std::string window_end;
  std::size_t group_memory_records = std::size_t{1} << 20;
  std::filesystem::path spill_dir;  // empty: system temp directory

  // Geometry. NaN origin: south-west corner of the tower bounding box.
  std::string projection = "equirectangular";  // equirectangular | identity
  double origin_lon = std::numeric_limits<double>::quiet_NaN();
  double origin_lat = std::numeric_limits<double>::quiet_NaN();

  // Indicators.
  int night_start = 19;
  int night_end = 7;
  std::string initiated_variant = "paper_literal";
  std::string entropy_variant = "standard_shannon";
  std::string entropy_weight = "total";
  std::int64_t min_records = 5;
  std::int64_t min_users = 30;

  // Models.
  int som_rows = 3;
  int som_cols = 3;
  int som_epochs = 500;
  int gp_restarts = 5;
  int gp_max_iterations = 200;
  int cv_folds = 5;
  int cv_repeats = 5;

  std::uint64_t seed = 1;
  int threads = 0;  // 0: all cores
  bool strict = false;

  // Synthetic city (synth stage only).
  int synth_districts = 148;
  int synth_towers = 400;
  int synth_users = 50000;
  int synth_days = 28;
  double synth_share = 0.1;
  double synth_records_per_user = 30.0;
  double synth_district_noise = 0.7;
  double synth_user_noise = 0.5;
  synth::EffectVector synth_effects = synth::default_effects();

  void validate() const;
  // Semantic settings as sorted key=value lines. Paths, the output
  // directory, thread count, strictness and memory limits are left out so
  // the hash identifies the computation rather than where it ran.
  std::string canonical() const;
  synth::SynthConfig synth_config() const;
};

// Stage seeds derived from the root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stage);

std::string sha256_file(const std::filesystem::path& path);
std::string sha256_text(std::string_view text);

void cmd_synth(const PipelineConfig& cfg);
IngestReport cmd_validate(const PipelineConfig& cfg);
void cmd_indicators(const PipelineConfig& cfg);
void cmd_geo(const PipelineConfig& cfg);
void cmd_aggregate(const PipelineConfig& cfg);
void cmd_som(const PipelineConfig& cfg);
void cmd_regress(const PipelineConfig& cfg);
void cmd_predict(const PipelineConfig& cfg);
// indicators, geo, aggregate, som, regress, predict in order.
void cmd_run_all(const PipelineConfig& cfg);

// Command-line entry point: 0 success, 2 validation error, 1 internal error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cdrsig::pipeline

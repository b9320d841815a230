// Synthetic rectangular city with planted links between district
// unemployment and user behaviour. Serves as the end-to-end ground truth.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdrsig/core.hpp"

namespace cdrsig::synth {

using EffectVector = std::array<double, kIndicatorCount>;  // indexed by index_of(Indicator)

// Signs follow the reference regressions: night calls and time at home rise
// with unemployment, entropy and the initiated share fall.
EffectVector default_effects();

struct SynthConfig {
  std::uint64_t seed = 1;
  int n_districts = 148;
  int n_towers = 400;
  int n_users = 50000;
  int days = 28;
  double width_m = 40000.0;
  double height_m = 40000.0;
  int taz_per_district = 4;
  // Subscribers / census persons over the whole city.
  double market_share = 0.1;
  // Log-scale spread of the per-district share around market_share.
  double share_spread = 0.2;
  double base_unemployment = 0.1;
  double unemployment_scale = 0.5;  // logit-scale slope on the latent factor
  EffectVector effects = default_effects();
  double district_noise = 0.7;  // sd of idiosyncratic district shifts
  double user_noise = 0.5;      // sd of per-user behaviour scores
  double records_per_user = 30.0;
  double origin_lon = 46.6;
  double origin_lat = 24.6;
  int start_year = 2026;
  unsigned start_month = 3;
  unsigned start_day = 1;
  std::int32_t utc_offset_s = 3 * 3600;

  // Throws Error{Config} on non-positive counts, non-finite effects or
  // out-of-range fractions.
  void validate() const;
};

// Per-user behaviour derived from scores v = district shift + user noise.
// Each field depends on exactly one score and moves the matching indicator
// in the direction of that score.
struct Behaviour {
  double record_rate = 0;     // Poisson mean of the record count
  double p_night = 0;         // share of records in the night window
  double duration_mu = 0;     // log-mean of call durations (s)
  double p_home = 0;          // target share of records at the home tower
  double visit_rate = 0;      // Poisson mean of extra visited towers
  double ipc_target = 0;      // interactions per contact
  double entropy_target = 0;  // normalized entropy of contact volumes
  double out_only_share = 0;  // share of contacts reached only outgoing
  double balance_target = 0;  // mean outgoing fraction per contact
};
Behaviour behaviour_from_scores(const EffectVector& v, double records_per_user = 30.0);

inline constexpr double kNightHomeShare = 0.85;
inline constexpr double kBidirectionalShare = 0.7;

struct DistrictTruth {
  std::string id;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // planar metres after the lon/lat round trip
  double population = 0;                 // exact areal share of TAZ populations
  double share = 0;                      // subscriber share used to place users
  double latent = 0;
  double unemployment_rate = 0;
  EffectVector shift{};
  int users = 0;
};

struct TowerTruth {
  std::string id;
  double lon = 0, lat = 0;
  double x = 0, y = 0;
};

struct TazTruth {
  std::string id;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double population = 0;
};

struct UserTruth {
  std::string id;
  std::string home_district;
  std::string home_tower;
  std::int64_t n_records = 0;
  Behaviour behaviour;
};

struct GroundTruth {
  SynthConfig config;
  std::vector<DistrictTruth> districts;
  std::vector<TazTruth> tazs;
  std::vector<TowerTruth> towers;
  std::vector<UserTruth> users;
  double total_population = 0;

  std::string to_json() const;
  static GroundTruth from_json(const std::string& text);
  static GroundTruth load(const std::filesystem::path& path);
};

struct CityFiles {
  std::filesystem::path towers = "towers.csv";
  std::filesystem::path taz = "taz.geojson";
  std::filesystem::path districts = "districts.geojson";
  std::filesystem::path labels = "labels.csv";
  std::filesystem::path cdr = "cdr.csv";
  std::filesystem::path ground_truth = "ground_truth.json";
};

// Writes the six city files into out_dir and returns the ground truth.
// Output is byte-identical for identical configs.
GroundTruth generate_city(const SynthConfig& config, const std::filesystem::path& out_dir,
                          const CityFiles& names = {});

struct OracleOptions {
  std::int64_t min_records = 5;
  int night_start_hour = 19;
  int night_end_hour = 7;
};

struct OracleDistrict {
  std::string district_id;
  std::int64_t user_count = 0;
  IndicatorArray mean{};
};

// Straightforward in-memory recomputation of every district indicator mean
// from the raw CDR text, using the ground-truth geometry for home
// assignment. Local time is read directly from the timestamp text. Supports
// the default indicator variants only.
std::vector<OracleDistrict> recompute_indicator_oracle(const GroundTruth& truth, const std::filesystem::path& cdr,
                                                       const OracleOptions& options = {});

}  // namespace cdrsig::synth

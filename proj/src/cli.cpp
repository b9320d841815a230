#include <functional>
#include <ostream>

#include <CLI11.hpp>

#include "cdrsig/pipeline.hpp"

namespace cdrsig::pipeline {
namespace {

void bind_options(CLI::App& app, PipelineConfig& c, std::vector<std::string>& effects) {
  app.add_option("--out-dir", c.out_dir, "Artifact directory");
  app.add_option("--seed", c.seed, "Root seed for every random stage");
  app.add_option("--threads", c.threads, "Worker threads (0: all cores)");
  app.add_flag("--strict", c.strict, "Any quarantined CDR row is fatal");

  app.add_option("--cdr", c.cdr, "CDR csv");
  app.add_option("--towers", c.towers, "Tower csv (tower_id,lon,lat)");
  app.add_option("--taz", c.taz, "TAZ GeoJSON with population");
  app.add_option("--districts", c.districts, "District GeoJSON with zone_id");
  app.add_option("--labels", c.labels, "District unemployment csv");

  app.add_option("--timezone", c.timezone, "IANA zone name or fixed offset such as +03:00");
  app.add_option("--timestamp-format", c.timestamp_format, "auto, iso8601 or epoch");
  app.add_option("--window-start", c.window_start, "Inclusive ISO-8601 start of the observation window");
  app.add_option("--window-end", c.window_end, "Exclusive ISO-8601 end of the observation window");
  app.add_option("--group-memory-records", c.group_memory_records, "Records held in memory before spilling");
  app.add_option("--spill-dir", c.spill_dir, "Directory for sort spill files");

  app.add_option("--projection", c.projection, "equirectangular or identity");
  app.add_option("--origin-lon", c.origin_lon, "Projection origin longitude");
  app.add_option("--origin-lat", c.origin_lat, "Projection origin latitude");

  app.add_option("--night-start", c.night_start, "First night hour");
  app.add_option("--night-end", c.night_end, "Hour the night ends");
  app.add_option("--initiated-variant", c.initiated_variant, "paper_literal or name_consistent");
  app.add_option("--entropy-variant", c.entropy_variant, "standard_shannon or paper_literal");
  app.add_option("--entropy-weight", c.entropy_weight, "total or outgoing");
  app.add_option("--min-records", c.min_records, "Minimum records per user");
  app.add_option("--min-users", c.min_users, "Minimum users per modelled district");

  app.add_option("--som-rows", c.som_rows);
  app.add_option("--som-cols", c.som_cols);
  app.add_option("--som-epochs", c.som_epochs);
  app.add_option("--gp-restarts", c.gp_restarts);
  app.add_option("--gp-max-iterations", c.gp_max_iterations);
  app.add_option("--cv-folds", c.cv_folds);
  app.add_option("--cv-repeats", c.cv_repeats);

  app.add_option("--synth-districts", c.synth_districts);
  app.add_option("--synth-towers", c.synth_towers);
  app.add_option("--synth-users", c.synth_users);
  app.add_option("--synth-days", c.synth_days);
  app.add_option("--synth-share", c.synth_share);
  app.add_option("--synth-records-per-user", c.synth_records_per_user);
  app.add_option("--synth-district-noise", c.synth_district_noise);
  app.add_option("--synth-user-noise", c.synth_user_noise);
  app.add_option("--synth-effect", effects, "Planted effect as indicator=value, repeatable")->delimiter(' ');
}

void apply_effects(PipelineConfig& c, const std::vector<std::string>& effects) {
  for (const auto& e : effects) {
    if (e == "none") {
      c.synth_effects.fill(0.0);
      continue;
    }
    const auto eq = e.find('=');
    const auto ind = eq == std::string::npos ? std::nullopt : parse_indicator(e.substr(0, eq));
    double v = 0;
    try {
      if (!ind) throw std::invalid_argument(e);
      std::size_t used = 0;
      v = std::stod(e.substr(eq + 1), &used);
      if (used != e.size() - eq - 1) throw std::invalid_argument(e);
    } catch (const std::exception&) {
      throw Error(ErrorCode::Config, "--synth-effect expects indicator=value or none, got '" + e + "'");
    }
    c.synth_effects[index_of(*ind)] = v;
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"District unemployment signatures from call detail records", "cdrsig"};
  app.set_version_flag("--version", std::string(kVersion));
  app.set_config("--config", "", "INI config file; flags win over file values");
  app.fallthrough();
  app.require_subcommand(1);

  PipelineConfig cfg;
  std::vector<std::string> effects;
  bind_options(app, cfg, effects);

  std::function<void()> action;
  auto stage = [&](const char* name, const char* help, std::function<void()> fn) {
    app.add_subcommand(name, help)->callback([&action, fn] { action = fn; });
  };
  stage("synth", "Generate a synthetic city with planted signal", [&] { cmd_synth(cfg); });
  stage("validate", "Check every configured input and report quarantine counts", [&] {
    const auto r = cmd_validate(cfg);
    out << "rows read " << r.rows_read << ", accepted " << r.rows_ok << ", quarantined " << r.quarantined_total()
        << '\n';
  });
  stage("indicators", "Per-user indicators from the CDR", [&] { cmd_indicators(cfg); });
  stage("geo", "Voronoi cells, areal weights and district populations", [&] { cmd_geo(cfg); });
  stage("aggregate", "District means, z-scores, penetration and correlations", [&] { cmd_aggregate(cfg); });
  stage("som", "Self-organizing map over district vectors", [&] { cmd_som(cfg); });
  stage("regress", "OLS of log unemployment on each indicator with controls", [&] { cmd_regress(cfg); });
  stage("predict", "Cross-validated Gaussian-process prediction", [&] { cmd_predict(cfg); });
  stage("run-all", "indicators, geo, aggregate, som, regress and predict", [&] { cmd_run_all(cfg); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  try {
    apply_effects(cfg, effects);
    if (action) action();
    return 0;
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return is_validation_error(e.code()) ? 2 : 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace cdrsig::pipeline

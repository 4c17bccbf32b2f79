#include "fastnose/pipeline.hpp"
#include "fastnose/text.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

using namespace fastnose;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int fail(const std::string& code, const std::string& message, int exit_code) {
  nlohmann::json j;
  j["error"] = {{"code", code}, {"message", message}};
  std::cerr << j.dump() << '\n';
  return exit_code;
}

Config load_config(const std::string& path) {
  if (!path.empty() && !std::filesystem::exists(path)) throw UsageError("config file not found: " + path);
  return Config::load(path);
}

unsigned parse_stimuli(const std::string& list) {
  if (list == "all") return kAllStimuli;
  unsigned k = 0;
  for (auto part : text::split(list, ',')) {
    const auto p = text::trim(part);
    if (p == "pulse") k |= kFullPulse;
    else if (p == "conc") k |= kConcentration;
    else if (p == "short") k |= kShortPulse;
    else if (p == "anti") k |= kAntiTrain;
    else if (p == "corr") k |= kCorrTrain;
    else throw UsageError("unknown stimulus family '" + std::string(p) + "' (pulse,conc,short,anti,corr|all)");
  }
  return k;
}

void require_file(const std::string& path, const std::string& what) {
  if (!std::filesystem::exists(path)) throw UsageError(what + " not found: " + path);
}

void write_calibration(const std::string& path, const Config& cfg) {
  const auto settings = settings_from_config(cfg);
  const auto params = load_sensor_params_for(settings);
  std::ofstream out(path + ".tmp");
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "sensor_id,slope_c_per_ohm,intercept_c,delta_c,voltage_v\n";
  for (const auto& sp : params.sensors) {
    auto hp = sp.hotplate;
    hp.t_ambient_c = settings.plant.ambient_c;
    if (settings.plant.tau_thermal_ms > 0.0) hp.tau_thermal_ms = settings.plant.tau_thermal_ms;
    HeaterPlant plant(hp, settings.plant.circuit, settings.plant.ambient_c);
    Rng rng(derive_seed(kReferenceParamSeed, static_cast<std::uint64_t>(sp.sensor_id)));
    const auto ctrl = make_calibrated_controller(plant, sp.datasheet, settings.controller, &rng);
    const auto& m = ctrl.map();
    for (std::size_t i = 0; i < m.delta_grid().size(); ++i)
      out << sp.sensor_id << ',' << text::format_double(m.slope()) << ',' << text::format_double(m.intercept()) << ','
          << text::format_double(m.delta_grid()[i]) << ',' << text::format_double(m.voltages()[i]) << '\n';
  }
  out.close();
  std::filesystem::rename(path + ".tmp", path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fastnose: simulated high-speed electronic nose"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "INI file overriding the built-in defaults");

  auto* sim = app.add_subcommand("simulate", "Run a recording protocol");
  std::string protocol, out_dir, stimuli = "all";
  std::uint64_t seed = 0;
  double scale = 0.0;
  bool binary = false;
  sim->add_option("--protocol", protocol, "A, B or C")->required();
  sim->add_option("--seed", seed, "master seed")->required();
  sim->add_option("--out", out_dir, "output directory")->required();
  sim->add_option("--scale", scale, "repetition scale factor (overrides [protocol] scale)");
  sim->add_option("--stimuli", stimuli, "comma list of pulse,conc,short,anti,corr or all");
  sim->add_flag("--binary", binary, "write binary recordings");

  auto* cal = app.add_subcommand("calibrate", "Heater calibration maps for the sensor parameter set");
  std::string cal_out;
  cal->add_option("--out", cal_out, "output CSV")->required();

  auto* feat = app.add_subcommand("features", "Extract features from a simulated run");
  std::string mode, feat_in, feat_out;
  bool raw = false;
  feat->add_option("--mode", mode, "phase or dft")->required();
  feat->add_option("--in", feat_in, "run directory")->required();
  feat->add_option("--out", feat_out, "feature CSV")->required();
  feat->add_flag("--raw", raw, "phase mode: unnormalised resistance windows");

  auto* train = app.add_subcommand("train", "Train a task model bundle");
  std::string task, train_features, model_out;
  std::uint64_t train_seed = 0;
  bool shuffled = false;
  auto* seed_opt = train->add_option("--seed", train_seed, "training seed (default: the run seed)");
  train->add_option("--task", task, "pulse, conc, freq, freqpair or corr")->required();
  train->add_option("--features", train_features, "feature CSV")->required();
  train->add_option("--out", model_out, "model bundle")->required();
  train->add_flag("--shuffle-labels", shuffled, "label-shuffled control");

  auto* eval = app.add_subcommand("evaluate", "Score a model bundle on a feature set");
  std::string model_in, eval_features, eval_out;
  eval->add_option("--model", model_in, "model bundle")->required();
  eval->add_option("--features", eval_features, "feature CSV")->required();
  eval->add_option("--out", eval_out, "result CSV")->required();

  auto* rep = app.add_subcommand("report", "Summarise result CSVs");
  std::string report_in;
  rep->add_option("--in", report_in, "directory with result CSVs")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    const auto cfg = load_config(config_path);
    if (*sim) {
      Config c = cfg;
      if (scale > 0.0) c.set("protocol", "scale", text::format_double(scale));
      simulate_to_directory(out_dir, parse_protocol(protocol), seed, c, binary, parse_stimuli(stimuli));
      std::cout << "simulated protocol " << protocol << " into " << out_dir << '\n';
    } else if (*cal) {
      write_calibration(cal_out, cfg);
      std::cout << "wrote " << cal_out << '\n';
    } else if (*feat) {
      if (!std::filesystem::is_directory(feat_in)) throw UsageError("run directory not found: " + feat_in);
      const auto run = open_run_directory(feat_in);
      const auto params = load_sensor_params_for(settings_from_config(cfg));
      const auto set = extract_features(run, feature_options_from_config(cfg, parse_feature_mode(mode), raw), &params);
      save_feature_set(feat_out, set);
      std::cout << "wrote " << set.table.size() << " feature rows to " << feat_out << '\n';
    } else if (*train) {
      require_file(train_features, "feature file");
      const auto set = load_feature_set(train_features);
      const auto s = seed_opt->count() ? train_seed : set.seed;
      const auto bundle = train_task(parse_task(task), set, ml_settings_from_config(cfg), s, shuffled);
      save_bundle(model_out, bundle);
      std::cout << "trained " << bundle.entries.size() << " model(s) into " << model_out << '\n';
    } else if (*eval) {
      require_file(model_in, "model bundle");
      require_file(eval_features, "feature file");
      const auto bundle = load_bundle(model_in);
      const auto set = load_feature_set(eval_features);
      const auto ev = evaluate_task(bundle, set);
      write_evaluation(eval_out, ev);
      std::cout << "wrote " << ev.rows.size() << " result rows to " << eval_out << '\n';
    } else if (*rep) {
      std::cout << report_directory(report_in);
    }
  } catch (const UsageError& e) {
    return fail("usage", e.what(), 2);
  } catch (const std::invalid_argument& e) {
    return fail("invalid_argument", e.what(), 3);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 1);
  }
  return 0;
}

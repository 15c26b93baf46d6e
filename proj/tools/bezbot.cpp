// bezbot command line: data collection, model training, reference
// generation, closed-loop experiments, and standalone image encoding for
// the synthetic continuum robot.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "bezbot/config.hpp"
#include "bezbot/dataset.hpp"
#include "bezbot/harness.hpp"

namespace fs = std::filesystem;

namespace {

bezbot::SystemConfig load_config(const std::string& path) {
  if (path.empty()) return bezbot::SystemConfig{};  // built-in defaults
  return bezbot::SystemConfig::from_file(path);
}

void snapshot_config(const std::string& config_path, const std::string& out_dir) {
  if (config_path.empty()) return;
  fs::create_directories(out_dir);
  fs::copy_file(config_path, fs::path(out_dir) / "config.toml",
                fs::copy_options::overwrite_existing);
}

int fail_with_json(const std::string& kind, const std::string& what) {
  nlohmann::json err;
  err["error"] = kind;
  err["what"] = what;
  std::cerr << err.dump() << std::endl;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"visual shape-state control of a simulated continuum robot"};
  app.require_subcommand(1);

  std::string config_path;
  uint64_t seed = 1;
  app.add_option("--config", config_path, "TOML-style key-value config file")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "seed for every stochastic choice");

  // collect
  auto* collect_cmd = app.add_subcommand("collect", "record workspace exploration datasets");
  int samples = 1000;
  std::string collect_out = "data";
  collect_cmd->add_option("--samples", samples, "transition samples to record");
  collect_cmd->add_option("--out-dir", collect_out, "output directory");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a dynamics model from a dataset");
  std::string dataset_path, kind = "shape", model_out = "model.json", report_out;
  int epochs_override = -1;
  train_cmd->add_option("--dataset", dataset_path, "dataset CSV")->required();
  train_cmd->add_option("--kind", kind, "shape or position")
      ->check(CLI::IsMember({"shape", "position"}));
  train_cmd->add_option("--out", model_out, "model file to write");
  train_cmd->add_option("--report", report_out, "training report JSON (default <out>.report.json)");
  train_cmd->add_option("--epochs", epochs_override, "override configured epoch count");

  // make-ref
  auto* ref_cmd = app.add_subcommand("make-ref", "generate reference trajectory files");
  std::string ref_kind = "regulate", ref_out = "refs";
  double ref_duration = 0.0;
  ref_cmd->add_option("--kind", ref_kind, "regulate | infinity | eight | self-motion | obstacle-regulate")
      ->check(CLI::IsMember({"regulate", "infinity", "eight", "self-motion", "obstacle-regulate"}));
  ref_cmd->add_option("--out-dir", ref_out, "output directory");
  ref_cmd->add_option("--duration", ref_duration, "trajectory duration override, s");

  // run
  auto* run_cmd = app.add_subcommand("run", "run a closed-loop experiment");
  bezbot::TaskConfig task;
  task.task = "regulate";
  task.ref_dir = "refs";
  task.out_dir = "run";
  run_cmd->add_option("--task", task.task, "regulate | track | obstacle-regulate | self-motion")
      ->check(CLI::IsMember({"regulate", "track", "obstacle-regulate", "self-motion"}));
  run_cmd->add_option("--ref-dir", task.ref_dir, "reference directory from make-ref");
  run_cmd->add_option("--shape-model", task.shape_model_path, "shape dynamics model")->required();
  run_cmd->add_option("--position-model", task.position_model_path, "position dynamics model")
      ->required();
  run_cmd->add_option("--out-dir", task.out_dir, "output directory");
  run_cmd->add_option("--obstacle", task.obstacle_file, "obstacle trajectory CSV");
  run_cmd->add_option("--duration", task.duration, "duration override, s");

  // encode
  auto* encode_cmd = app.add_subcommand("encode", "encode one image pair into a shape state");
  std::string img1, img2, encode_csv;
  encode_cmd->add_option("view1", img1, "view-1 PGM image")->required()->check(CLI::ExistingFile);
  encode_cmd->add_option("view2", img2, "view-2 PGM image")->required()->check(CLI::ExistingFile);
  encode_cmd->add_option("--csv", encode_csv, "also append the state to this CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    const bezbot::SystemConfig sys = load_config(config_path);

    if (collect_cmd->parsed()) {
      const auto stats = bezbot::collect(sys, samples, seed, collect_out);
      snapshot_config(config_path, collect_out);
      if (stats.degraded)
        std::cerr << "warning: collection degraded, " << stats.skipped << "/" << stats.requested
                  << " samples skipped" << std::endl;
      std::cout << "wrote " << stats.written << " samples to " << collect_out << " ("
                << stats.skipped << " skipped)\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      const bool is_shape = kind == "shape";
      const bezbot::ModelSpec spec = is_shape ? sys.shape_spec : sys.position_spec;
      bezbot::TrainHyper hyper = sys.hyper;
      hyper.seed = seed;
      if (epochs_override >= 0) hyper.epochs = epochs_override;
      const auto ds = bezbot::read_dataset(dataset_path, spec.state_dim, spec.input_dim);
      const auto res = bezbot::train(ds, spec, hyper);
      bezbot::save_model(res.model, model_out);

      nlohmann::json report;
      report["dataset"] = dataset_path;
      report["kind"] = kind;
      report["samples"] = ds.samples.size();
      report["epochs"] = hyper.epochs;
      report["seed"] = seed;
      report["best_epoch"] = res.report.best_epoch;
      report["train_loss"] = res.report.train_loss;
      report["val_loss"] = res.report.val_loss;
      report["model_fnv64"] = bezbot::hex64(bezbot::fnv64_file(model_out));
      const std::string rp = report_out.empty() ? model_out + ".report.json" : report_out;
      std::ofstream ro(rp);
      ro << report.dump(1) << "\n";
      std::cout << "model written to " << model_out << ", best epoch " << res.report.best_epoch
                << ", final val loss " << res.report.val_loss.back() << "\n";
      return 0;
    }

    if (ref_cmd->parsed()) {
      bezbot::SystemConfig ref_sys = sys;
      if (ref_duration > 0.0) ref_sys.duration = ref_duration;
      bezbot::make_reference(ref_sys, ref_kind, seed, ref_out);
      snapshot_config(config_path, ref_out);
      std::cout << "references written to " << ref_out << "\n";
      return 0;
    }

    if (run_cmd->parsed()) {
      task.seed = seed;
      const auto result = bezbot::run_task(sys, task);
      snapshot_config(config_path, task.out_dir);
      std::cout << "run complete: " << result.rows.size() << " rows, final shape error "
                << result.summary["final"]["shape_maxpt_px"].get<double>()
                << " px, final tip error "
                << result.summary["final"]["tip_err_m"].get<double>() << " m\n";
      return 0;
    }

    if (encode_cmd->parsed()) {
      const Eigen::VectorXd xs = bezbot::encode_files(sys, img1, img2);
      for (int i = 0; i < xs.size(); ++i)
        std::cout << (i ? "," : "") << bezbot::csv::fmt(xs[i]);
      std::cout << "\n";
      if (!encode_csv.empty()) {
        std::ofstream out(encode_csv, std::ios::app);
        for (int i = 0; i < xs.size(); ++i) out << (i ? "," : "") << bezbot::csv::fmt(xs[i]);
        out << "\n";
      }
      return 0;
    }
  } catch (const bezbot::EncodingError& e) {
    return fail_with_json("encoding", e.what());
  } catch (const bezbot::ConfigError& e) {
    return fail_with_json("config", e.what());
  } catch (const bezbot::ModelFormatError& e) {
    return fail_with_json("model-format", e.what());
  } catch (const bezbot::IoError& e) {
    return fail_with_json("io", e.what());
  } catch (const bezbot::Error& e) {
    return fail_with_json("runtime", e.what());
  } catch (const std::exception& e) {
    return fail_with_json("unexpected", e.what());
  }
  return 0;
}

// traj: command-line front end for the trajectory toolkit.
//
// Subcommands cover the full workflow: ingest (GPX -> JSONL), preprocess
// (normalize + filter), synth (seeded synthetic corpus), pretrain (masked
// reconstruction), eval (recovery / prediction metrics), mask-preview
// (inspect masking decisions).
//
// Contract: identical inputs + config + seed produce bit-identical artifacts,
// so no artifact may contain wall-clock times or absolute paths. Exit codes:
// 0 success, 1 I/O or configuration problem, 2 data/contract violation.
// Errors are emitted as one JSON object per line on stderr.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajkit/checkpoint.hpp"
#include "trajkit/errors.hpp"
#include "trajkit/geo.hpp"
#include "trajkit/gpx.hpp"
#include "trajkit/heads.hpp"
#include "trajkit/jsonl.hpp"
#include "trajkit/masking.hpp"
#include "trajkit/metrics.hpp"
#include "trajkit/model.hpp"
#include "trajkit/preprocess.hpp"
#include "trajkit/resample.hpp"
#include "trajkit/rng.hpp"
#include "trajkit/synth.hpp"
#include "trajkit/train.hpp"
#include "trajkit/trajectory.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AppOpts {
  std::uint64_t seed = 42;
  trajkit::FilterPolicy filter;
  trajkit::ResamplePolicy resample;
  std::size_t interval_dt = 1;  // index stride applied after adaptive resampling
  trajkit::MaskSpec mask;
  trajkit::ModelConfig model;
  trajkit::SynthSpec synth;

  std::string eval_mode = "recovery";
  double eval_mask_ratio = 0.5;
  std::size_t eval_horizon = trajkit::kPredictionHorizon;
  bool eval_per_trajectory = false;

  std::size_t preview_count = 5;
  std::string preview_strategy = "mix";

  std::vector<std::string> gpx_inputs;
  std::string in_path;
  std::string out_path;
  std::string checkpoint_path;
  std::string loss_csv_path;
  std::string report_path;
};

void emit_error(const std::string& type, const std::string& message) {
  ordered_json e{{"error", ordered_json{{"type", type}, {"message", message}}}};
  std::cerr << e.dump() << "\n";
}

// Maps config-file sections onto the dotted option names used here
// ([model] d=... sets --model.d); CLI11 itself resolves sections against
// subcommand names only.
class FlatSectionConfig : public CLI::ConfigTOML {
 public:
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::vector<CLI::ConfigItem> items = CLI::ConfigTOML::from_config(input);
    std::vector<CLI::ConfigItem> flat_items;
    for (CLI::ConfigItem& item : items) {
      if (item.name == "++" || item.name == "--") continue;  // section open/close markers
      if (!item.parents.empty()) {
        std::string flat;
        for (const std::string& p : item.parents) flat += p + ".";
        item.name = flat + item.name;
        item.parents.clear();
      }
      flat_items.push_back(std::move(item));
    }
    return flat_items;
  }
};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open input file: " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file: " + path);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out = open_output(path);
  out << text;
  if (!out) throw IoError("failed writing: " + path);
}

trajkit::TrajectoryDataset load_jsonl(const std::string& path) {
  std::ifstream in = open_input(path);
  return trajkit::read_jsonl(in, path);
}

ordered_json filter_json(const trajkit::FilterPolicy& p) {
  return ordered_json{{"min_points", p.min_points},       {"min_distance_m", p.min_distance_m},
                      {"max_speed_kmh", p.max_speed_kmh}, {"min_speed_kmh", p.min_speed_kmh},
                      {"loop_endpoint_m", p.loop_endpoint_m},
                      {"loop_min_path_m", p.loop_min_path_m},
                      {"max_gap_s", p.max_gap_s}};
}

ordered_json resample_json(const trajkit::ResamplePolicy& p, std::size_t interval_dt) {
  return ordered_json{{"n_min", p.n_min},
                      {"n_max", p.n_max},
                      {"r_min", p.r_min},
                      {"interval_dt", interval_dt}};
}

ordered_json mask_json(const trajkit::MaskSpec& m) {
  return ordered_json{{"mask_ratio", m.ratio},
                      {"rdp_epsilon_m", m.rdp_epsilon_m},
                      {"w_random", m.mixture_weights[0]},
                      {"w_block", m.mixture_weights[1]},
                      {"w_key", m.mixture_weights[2]},
                      {"w_lastn", m.mixture_weights[3]}};
}

ordered_json synth_json(const trajkit::SynthSpec& s) {
  return ordered_json{{"n_traj", s.n_traj},
                      {"min_waypoints", s.min_waypoints},
                      {"max_waypoints", s.max_waypoints},
                      {"speed_min_kmh", s.speed_min_kmh},
                      {"speed_max_kmh", s.speed_max_kmh},
                      {"noise_sigma_m", s.noise_sigma_m},
                      {"min_lng", s.region.min_lng},
                      {"min_lat", s.region.min_lat},
                      {"max_lng", s.region.max_lng},
                      {"max_lat", s.region.max_lat}};
}

// Sidecar describing how a JSONL artifact was produced. Inputs are recorded
// as the strings given on the command line, never resolved paths.
void write_sidecar(const std::string& jsonl_path, const std::string& command,
                   const AppOpts& o, const std::vector<std::string>& inputs,
                   const ordered_json& config, const ordered_json& counts) {
  ordered_json meta{{"tool", "traj"},
                    {"command", command},
                    {"seed", o.seed},
                    {"inputs", inputs},
                    {"config", config},
                    {"counts", counts}};
  write_text(jsonl_path + ".meta.json", meta.dump(2) + "\n");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// ingest

int cmd_ingest(const AppOpts& o) {
  std::vector<fs::path> files;
  for (const std::string& arg : o.gpx_inputs) {
    fs::path p(arg);
    std::error_code ec;
    if (fs::is_directory(p, ec)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::recursive_directory_iterator(p, ec)) {
        if (entry.is_regular_file() && entry.path().extension() == ".gpx")
          found.push_back(entry.path());
      }
      if (ec) throw IoError("cannot read directory: " + arg);
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(p, ec)) {
      files.push_back(p);
    } else {
      throw IoError("no such file or directory: " + arg);
    }
  }

  trajkit::TrajectoryDataset out;
  out.provenance = "gpx";
  trajkit::GpxStats totals;
  std::size_t files_failed = 0;
  std::set<std::string> used_ids;

  for (const fs::path& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) {
      emit_error("warning", "cannot open, skipping: " + f.string());
      ++files_failed;
      continue;
    }
    trajkit::GpxStats stats;
    std::vector<trajkit::Trajectory> part;
    try {
      part = trajkit::parse_gpx(in, &stats);
    } catch (const trajkit::Error& e) {
      emit_error("warning", f.string() + ": " + e.what());
      ++files_failed;
      continue;
    }
    totals.points_seen += stats.points_seen;
    totals.dropped_invalid += stats.dropped_invalid;
    totals.dropped_duplicate += stats.dropped_duplicate;
    totals.dropped_nonmonotonic += stats.dropped_nonmonotonic;
    totals.segments_dropped += stats.segments_dropped;
    const std::string stem = f.stem().string();
    for (trajkit::Trajectory& t : part) {
      const std::string base = stem + "/" + t.id;
      std::string id = base;
      std::size_t k = 2;
      while (used_ids.count(id)) id = base + "~" + std::to_string(k++);
      used_ids.insert(id);
      t.id = id;
      out.trajectories.push_back(std::move(t));
    }
  }

  {
    std::ofstream os = open_output(o.out_path);
    trajkit::write_jsonl(out, os);
    if (!os) throw IoError("failed writing: " + o.out_path);
  }

  ordered_json counts{{"files", files.size()},
                      {"files_failed", files_failed},
                      {"trajectories", out.trajectories.size()},
                      {"points_seen", totals.points_seen},
                      {"points_dropped", totals.dropped_total()},
                      {"segments_dropped", totals.segments_dropped}};
  write_sidecar(o.out_path, "ingest", o, o.gpx_inputs, ordered_json::object(), counts);
  std::cout << counts.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// preprocess

int cmd_preprocess(const AppOpts& o) {
  trajkit::TrajectoryDataset ds = load_jsonl(o.in_path);
  auto [clean, report] = trajkit::run_pipeline(ds, o.filter);
  {
    std::ofstream os = open_output(o.out_path);
    trajkit::write_jsonl(clean, os);
    if (!os) throw IoError("failed writing: " + o.out_path);
  }

  ordered_json rejected = ordered_json::object();
  for (const auto& [rule, count] : report.rejected_by_rule) rejected[rule] = count;
  ordered_json rep{{"inputs", report.inputs},
                   {"candidates", report.candidates},
                   {"kept", report.kept},
                   {"rejected", rejected}};
  ordered_json config{{"filter", filter_json(o.filter)}};
  write_sidecar(o.out_path, "preprocess", o, {o.in_path}, config, rep);
  if (!o.report_path.empty()) {
    ordered_json full{{"command", "preprocess"}, {"seed", o.seed}, {"config", config},
                      {"report", rep}};
    write_text(o.report_path, full.dump(2) + "\n");
  }
  std::cout << rep.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// synth

int cmd_synth(AppOpts& o) {
  o.synth.seed = o.seed;
  trajkit::TrajectoryDataset ds = trajkit::generate(o.synth);
  {
    std::ofstream os = open_output(o.out_path);
    trajkit::write_jsonl(ds, os);
    if (!os) throw IoError("failed writing: " + o.out_path);
  }
  std::size_t points = 0;
  for (const auto& t : ds.trajectories) points += t.points.size();
  ordered_json counts{{"trajectories", ds.trajectories.size()}, {"points", points}};
  write_sidecar(o.out_path, "synth", o, {}, ordered_json{{"synth", synth_json(o.synth)}},
                counts);
  std::cout << counts.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// pretrain

int cmd_pretrain(AppOpts& o) {
  trajkit::TrajectoryDataset ds = load_jsonl(o.in_path);
  o.model.seed = o.seed;

  ordered_json config{{"model", trajkit::config_to_json(o.model)},
                      {"resample", resample_json(o.resample, o.interval_dt)},
                      {"mask", mask_json(o.mask)}};

  trajkit::TrainResult res =
      trajkit::train(ds, o.model, o.resample, o.mask, [](const trajkit::EpochStats& s) {
        std::fprintf(stderr, "epoch %zu train %.6f val %.6f\n", s.epoch, s.train_loss,
                     s.val_loss);
      });

  {
    std::ofstream os = open_output(o.checkpoint_path);
    trajkit::save_checkpoint(res.state, res.best_epoch, os);
    if (!os) throw IoError("failed writing: " + o.checkpoint_path);
  }

  if (!o.loss_csv_path.empty()) {
    std::ostringstream csv;
    csv << "# config: " << config.dump() << "\n";
    csv << "# untrained_val_loss: " << format_double(res.untrained_val_loss) << "\n";
    csv << "# best_epoch: " << res.best_epoch << "\n";
    csv << "epoch,train_loss,val_loss\n";
    for (const auto& s : res.history)
      csv << s.epoch << "," << format_double(s.train_loss) << ","
          << format_double(s.val_loss) << "\n";
    write_text(o.loss_csv_path, csv.str());
  }

  ordered_json summary{{"epochs_run", res.history.size()},
                       {"best_epoch", res.best_epoch},
                       {"best_val_loss", res.best_val_loss},
                       {"untrained_val_loss", res.untrained_val_loss}};
  std::cout << summary.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const AppOpts& o) {
  trajkit::Checkpoint ckpt;
  {
    std::ifstream is = open_input(o.checkpoint_path);
    ckpt = trajkit::load_checkpoint(is);
  }
  const trajkit::ModelState& st = ckpt.state;
  trajkit::TrajectoryDataset ds = load_jsonl(o.in_path);

  std::vector<trajkit::EvalItem> items;
  trajkit::TrajectoryDataset gen, ref;  // predicted vs true points at the evaluated indices
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    trajkit::Trajectory t = trajkit::dynamic_resample(ds.trajectories[i], o.resample);
    if (o.interval_dt > 1 && t.points.size() > o.interval_dt)
      t = trajkit::thin_by_index(t, o.interval_dt);
    if (t.points.size() > st.cfg.pad_len) t.points.resize(st.cfg.pad_len);
    if (t.points.size() < 4) {
      ++skipped;
      continue;
    }
    trajkit::MaskedTrajectory m =
        o.eval_mode == "prediction"
            ? trajkit::mask_last_points(t, o.eval_horizon)
            : trajkit::mask_random(t, o.eval_mask_ratio, trajkit::mix64(o.seed, 0x6576616cULL, i));
    const std::vector<trajkit::GeoPoint> pred = trajkit::recover_coords(m, st);
    trajkit::EvalItem item;
    item.eval_indices = m.masked;
    item.pred = pred;
    item.truth.reserve(m.base.points.size());
    for (const auto& p : m.base.points) item.truth.push_back(p.pos);
    items.push_back(std::move(item));

    trajkit::Trajectory gt, rt;
    gt.id = rt.id = m.base.id;
    for (std::size_t j = 0; j < m.masked.size(); ++j) {
      const std::size_t idx = m.masked[j];
      gt.points.push_back({pred[idx], static_cast<double>(j)});
      rt.points.push_back({m.base.points[idx].pos, static_cast<double>(j)});
    }
    gen.trajectories.push_back(std::move(gt));
    ref.trajectories.push_back(std::move(rt));
  }

  const auto [mae_m, rmse_m] = trajkit::mae_rmse_dataset(items, o.eval_per_trajectory);
  trajkit::MetricReport metrics;
  metrics.mae_m = mae_m;
  metrics.rmse_m = rmse_m;
  for (const trajkit::EvalItem& it : items) metrics.n_points += it.eval_indices.size();
  const trajkit::geo::BBox box =
      trajkit::geo::bbox_union(trajkit::geo::bbox_of(gen), trajkit::geo::bbox_of(ref));
  metrics.density_jsd = trajkit::density_jsd(gen, ref, box);

  ordered_json config{{"resample", resample_json(o.resample, o.interval_dt)},
                      {"eval", ordered_json{{"mode", o.eval_mode},
                                            {"mask_ratio", o.eval_mask_ratio},
                                            {"horizon", o.eval_horizon},
                                            {"per_trajectory", o.eval_per_trajectory}}}};
  ordered_json rep{{"command", "eval"},
                   {"mode", o.eval_mode},
                   {"seed", o.seed},
                   {"config", config},
                   {"model_config", trajkit::config_to_json(st.cfg)},
                   {"checkpoint_epoch", ckpt.epoch},
                   {"counts", ordered_json{{"trajectories", ds.trajectories.size()},
                                           {"evaluated", items.size()},
                                           {"skipped", skipped}}},
                   {"metrics", ordered_json{{"mae_m", metrics.mae_m},
                                            {"rmse_m", metrics.rmse_m},
                                            {"density_jsd", *metrics.density_jsd},
                                            {"n_points", metrics.n_points}}}};
  const std::string text = rep.dump(2) + "\n";
  if (!o.report_path.empty()) write_text(o.report_path, text);
  std::cout << text;
  return 0;
}

// ---------------------------------------------------------------------------
// mask-preview

int cmd_mask_preview(const AppOpts& o) {
  trajkit::TrajectoryDataset ds = load_jsonl(o.in_path);
  std::ostringstream out;
  std::size_t shown = 0;
  for (std::size_t i = 0; i < ds.trajectories.size() && shown < o.preview_count; ++i) {
    const trajkit::Trajectory& t = ds.trajectories[i];
    if (t.points.size() < 4) continue;
    trajkit::MaskStrategy strategy;
    if (o.preview_strategy == "mix")
      strategy = trajkit::sample_strategy(o.mask, trajkit::mix64(o.seed, 0x70726576ULL, i));
    else if (o.preview_strategy == "random")
      strategy = trajkit::MaskStrategy::kRandom;
    else if (o.preview_strategy == "block")
      strategy = trajkit::MaskStrategy::kBlock;
    else if (o.preview_strategy == "key_points")
      strategy = trajkit::MaskStrategy::kKeyPoints;
    else if (o.preview_strategy == "last_n")
      strategy = trajkit::MaskStrategy::kLastN;
    else
      throw IoError("unknown strategy: " + o.preview_strategy);
    trajkit::MaskedTrajectory m =
        trajkit::mask_with(t, strategy, o.mask, trajkit::mix64(o.seed, 0x6d736bULL, i));
    ordered_json line{{"id", t.id},
                      {"n", t.points.size()},
                      {"strategy", trajkit::mask_strategy_name(strategy)},
                      {"masked", m.masked}};
    out << line.dump() << "\n";
    ++shown;
  }
  if (!o.out_path.empty())
    write_text(o.out_path, out.str());
  else
    std::cout << out.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  AppOpts o;
  CLI::App app{"trajectory toolkit: ingest, preprocess, synthesize, pretrain, evaluate"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.config_formatter(std::make_shared<FlatSectionConfig>());
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config")
      ->description("config file with sections [filter] [resample] [mask] [model] "
                    "[synth] [eval]; command-line flags override file values");
  app.set_version_flag("--version", "0.1.0");

  app.add_option("--seed", o.seed, "seed for every stochastic choice");

  app.add_option("--filter.min_points", o.filter.min_points,
                 "reject trajectories with fewer points");
  app.add_option("--filter.min_distance_m", o.filter.min_distance_m,
                 "reject trajectories with a shorter path");
  app.add_option("--filter.max_speed_kmh", o.filter.max_speed_kmh,
                 "reject on any faster segment");
  app.add_option("--filter.min_speed_kmh", o.filter.min_speed_kmh,
                 "reject on sustained slower movement");
  app.add_option("--filter.loop_endpoint_m", o.filter.loop_endpoint_m,
                 "loop rule: endpoint separation below this");
  app.add_option("--filter.loop_min_path_m", o.filter.loop_min_path_m,
                 "loop rule: path length above this");
  app.add_option("--filter.max_gap_s", o.filter.max_gap_s,
                 "interpolate gaps up to this many seconds, split beyond");

  app.add_option("--resample.n_min", o.resample.n_min, "keep everything at or below this length");
  app.add_option("--resample.n_max", o.resample.n_max, "ratio reaches its floor at this length");
  app.add_option("--resample.r_min", o.resample.r_min, "sampling ratio floor");
  app.add_option("--resample.interval_dt", o.interval_dt,
                 "index stride applied after adaptive resampling (eval, preview)");

  app.add_option("--mask.mask_ratio", o.mask.ratio, "fraction of points hidden");
  app.add_option("--mask.rdp_epsilon_m", o.mask.rdp_epsilon_m,
                 "key-point deviation threshold in meters");
  app.add_option("--mask.w_random", o.mask.mixture_weights[0], "mixture weight: random");
  app.add_option("--mask.w_block", o.mask.mixture_weights[1], "mixture weight: block");
  app.add_option("--mask.w_key", o.mask.mixture_weights[2], "mixture weight: key points");
  app.add_option("--mask.w_lastn", o.mask.mixture_weights[3], "mixture weight: last n");

  app.add_option("--model.d", o.model.d, "embedding width");
  app.add_option("--model.enc_blocks", o.model.enc_blocks, "encoder blocks");
  app.add_option("--model.dec_blocks", o.model.dec_blocks, "decoder blocks");
  app.add_option("--model.heads", o.model.heads, "attention heads");
  app.add_option("--model.pad_len", o.model.pad_len, "maximum sequence length after truncation");
  app.add_option("--model.max_len", o.model.max_len, "hard upper bound on sequence length");
  app.add_option("--model.ffn_mult", o.model.ffn_mult, "feed-forward width multiplier");
  app.add_option("--model.lr", o.model.lr, "base learning rate");
  app.add_option("--model.batch", o.model.batch, "batch size");
  app.add_option("--model.epochs", o.model.epochs, "maximum epochs");
  app.add_option("--model.patience", o.model.patience, "early-stopping patience in epochs");
  app.add_option("--model.val_fraction", o.model.val_fraction,
                 "tail fraction of the dataset held out for validation");
  app.add_option("--model.icr_dts", o.model.icr_dts,
                 "interval candidates drawn per training sample")
      ->delimiter(',');

  app.add_option("--synth.n_traj", o.synth.n_traj, "number of trajectories");
  app.add_option("--synth.min_waypoints", o.synth.min_waypoints,
                 "fewest waypoints per trajectory");
  app.add_option("--synth.max_waypoints", o.synth.max_waypoints,
                 "most waypoints per trajectory");
  app.add_option("--synth.speed_min_kmh", o.synth.speed_min_kmh, "slowest leg speed");
  app.add_option("--synth.speed_max_kmh", o.synth.speed_max_kmh, "fastest leg speed");
  app.add_option("--synth.noise_sigma_m", o.synth.noise_sigma_m, "stationary per-axis noise");
  app.add_option("--synth.min_lng", o.synth.region.min_lng, "region west edge");
  app.add_option("--synth.min_lat", o.synth.region.min_lat, "region south edge");
  app.add_option("--synth.max_lng", o.synth.region.max_lng, "region east edge");
  app.add_option("--synth.max_lat", o.synth.region.max_lat, "region north edge");

  app.add_option("--eval.mode", o.eval_mode,
                 "recovery (random mask) or prediction (last points)")
      ->check(CLI::IsMember({"recovery", "prediction"}));
  app.add_option("--eval.mask_ratio", o.eval_mask_ratio, "hidden fraction in recovery mode");
  app.add_option("--eval.horizon", o.eval_horizon, "points hidden in prediction mode");
  app.add_flag("--eval.per_trajectory", o.eval_per_trajectory,
               "average per-trajectory errors instead of pooling points");

  CLI::App* ing = app.add_subcommand("ingest", "convert GPX files to a JSONL dataset");
  ing->fallthrough();
  ing->add_option("inputs", o.gpx_inputs, ".gpx files or directories to scan")
      ->required()
      ->expected(-1);
  ing->add_option("--out", o.out_path, "output JSONL path")->required();

  CLI::App* pre = app.add_subcommand("preprocess", "normalize to 1 Hz and filter a dataset");
  pre->fallthrough();
  pre->add_option("--in", o.in_path, "input JSONL path")->required();
  pre->add_option("--out", o.out_path, "output JSONL path")->required();
  pre->add_option("--report", o.report_path, "also write the filter report to this JSON file");

  CLI::App* syn = app.add_subcommand("synth", "generate a synthetic trajectory corpus");
  syn->fallthrough();
  syn->add_option("--out", o.out_path, "output JSONL path")->required();

  CLI::App* tr = app.add_subcommand("pretrain", "train masked reconstruction on a dataset");
  tr->fallthrough();
  tr->add_option("--in", o.in_path, "input JSONL path")->required();
  tr->add_option("--checkpoint", o.checkpoint_path, "output checkpoint path")->required();
  tr->add_option("--loss-csv", o.loss_csv_path, "per-epoch loss table");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  ev->fallthrough();
  ev->add_option("--in", o.in_path, "input JSONL path")->required();
  ev->add_option("--checkpoint", o.checkpoint_path, "checkpoint to evaluate")->required();
  ev->add_option("--out", o.report_path, "also write the report to this JSON file");

  CLI::App* mp = app.add_subcommand("mask-preview", "print masking decisions for inspection");
  mp->fallthrough();
  mp->add_option("--in", o.in_path, "input JSONL path")->required();
  mp->add_option("--out", o.out_path, "write preview lines here instead of stdout");
  mp->add_option("--count", o.preview_count, "trajectories to preview");
  mp->add_option("--strategy", o.preview_strategy, "mix, random, block, key_points, last_n")
      ->check(CLI::IsMember({"mix", "random", "block", "key_points", "last_n"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) emit_error("config", e.what());
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(ing)) return cmd_ingest(o);
    if (app.got_subcommand(pre)) return cmd_preprocess(o);
    if (app.got_subcommand(syn)) return cmd_synth(o);
    if (app.got_subcommand(tr)) return cmd_pretrain(o);
    if (app.got_subcommand(ev)) return cmd_eval(o);
    if (app.got_subcommand(mp)) return cmd_mask_preview(o);
  } catch (const IoError& e) {
    emit_error("io", e.what());
    return 1;
  } catch (const trajkit::Error& e) {
    emit_error("contract", e.what());
    return 2;
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return 1;
  }
  return 0;
}

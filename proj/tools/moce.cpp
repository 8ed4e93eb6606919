// moce: dataset generation, delta-hyperbolicity, cross-validated training
// and checkpoint evaluation. JSON on stdout, progress on stderr.
//
// Exit codes: 0 ok, 2 bad input, 3 unsupported format version,
// 4 numerical failure during training, 1 anything else.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "moce/checkpoint.hpp"
#include "moce/data.hpp"
#include "moce/errors.hpp"
#include "moce/hyperbolicity.hpp"
#include "moce/io.hpp"
#include "moce/run.hpp"
#include "moce/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace moce;

namespace {

enum Exit { kOk = 0, kOther = 1, kInput = 2, kVersion = 3, kNumeric = 4 };

json parse_json_file(const fs::path& path) {
  const std::string text = io::read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": malformed JSON: " + e.what());
  }
}

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

std::vector<int> parse_groups(const std::string& list) {
  std::vector<int> out;
  std::stringstream ss(list);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(static_cast<int>(io::parse_int(cell, "--groups")));
  if (out.empty()) throw InputError("--groups: empty list");
  return out;
}

// ---- gen -----------------------------------------------------------------

struct GenArgs {
  std::string spec;
  std::string out;
};

int cmd_gen(const GenArgs& a) {
  const data::SyntheticSpec spec = run::synthetic_spec_from_json(parse_json_file(a.spec), 0, "spec");
  spec.validate();
  const data::Dataset ds = data::generate(spec);
  data::write_dataset(ds, a.out);
  json mods = json::array();
  for (std::size_t m = 0; m < ds.modality_names.size(); ++m) {
    mods.push_back({{"name", ds.modality_names[m]}, {"dim", ds.features[m].cols()}});
  }
  emit({{"out", a.out},
        {"modalities", mods},
        {"samples", ds.size()},
        {"classes", ds.classes},
        {"groups", ds.group_ids().size()},
        {"seed", spec.seed}});
  return kOk;
}

// ---- delta ---------------------------------------------------------------

struct DeltaArgs {
  std::string input;
  std::size_t batch_size = 1500;
  std::size_t batches = 10;
  std::uint64_t seed = 0;
  std::string metric = "euclidean";
  bool precomputed = false;
};

int cmd_delta(const DeltaArgs& a) {
  const bool pre = a.precomputed || a.metric == "precomputed";
  if (a.metric != "euclidean" && a.metric != "precomputed") {
    throw InputError("--metric must be euclidean or precomputed");
  }
  Mat<double> m = io::read_numeric_csv(a.input);
  if (m.rows() < 4) throw InputError(a.input + ": need at least 4 points, got " + std::to_string(m.rows()));
  if (a.batch_size < 4) throw InputError("--batch-size must be >= 4");
  if (a.batches < 1) throw InputError("--batches must be >= 1");
  const auto cloud = pre ? hyperbolicity::MetricCloud::from_distances(std::move(m))
                         : hyperbolicity::MetricCloud::from_points(std::move(m));
  const auto r = hyperbolicity::delta_rel_sampled(cloud, a.batch_size, a.batches, a.seed);
  emit({{"input", a.input},
        {"metric", pre ? "precomputed" : "euclidean"},
        {"points", r.points},
        {"batch_size", r.batch_size},
        {"batches", r.batches},
        {"seed", r.seed},
        {"delta", r.delta},
        {"diameter", r.diameter},
        {"delta_rel", {{"mean", r.delta_rel}, {"std", r.delta_rel_std}}},
        {"per_batch", {{"delta", r.batch_delta}, {"diameter", r.batch_diameter}, {"delta_rel", r.batch_delta_rel}}}});
  return kOk;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string out;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  // Everything that can be rejected is checked before the first write.
  const fs::path cfg_path(a.config);
  const run::RunConfig cfg = run::run_config_from_json(parse_json_file(cfg_path), cfg_path.parent_path());
  cfg.train.validate();
  const data::Dataset ds = run::load_data(cfg);
  run::make_model_spec(cfg.model, ds);
  data::grouped_folds(ds, cfg.eval.folds);

  const fs::path out(a.out);
  fs::create_directories(out);
  io::write_text(out / "config.json", run::to_json(cfg).dump(2) + "\n");
  if (cfg.synthetic) data::write_dataset(ds, out / "data");

  const auto logger = [&](int fold, const training::EpochRecord& r) {
    if (a.quiet) return;
    std::fprintf(stderr, "fold %d epoch %3d  loss %.6f  val bacc %.4f  f1 %.4f  lambda %.4f\n", fold, r.epoch,
                 r.train_loss, r.validation.balanced_accuracy, r.validation.macro_f1, r.validation.lambda);
  };
  const run::CvResult res = run::run_cv(cfg, ds, logger);
  for (const auto& f : res.folds) {
    const fs::path dir = out / ("fold_" + std::to_string(f.fold));
    checkpoint::save(f.best, dir / "checkpoint.json");
    json metrics = run::fold_json(f);
    json history = json::array();
    for (const auto& h : f.history) history.push_back(training::to_json(h));
    metrics["history"] = history;
    io::write_text(dir / "metrics.json", metrics.dump(2) + "\n");
  }
  const json summary = run::summary_json(res);
  io::write_text(out / "summary.json", summary.dump(2) + "\n");
  emit(summary);
  return kOk;
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string groups;
};

int cmd_eval(const EvalArgs& a) {
  const model::MoceModel m = checkpoint::load(a.checkpoint);
  data::Dataset ds = data::read_dataset(a.data);
  if (!a.groups.empty()) {
    const auto keep = parse_groups(a.groups);
    const auto present = ds.group_ids();
    for (int g : keep) {
      if (!std::binary_search(present.begin(), present.end(), g)) {
        throw InputError("--groups: dataset has no group " + std::to_string(g));
      }
    }
    ds = ds.subset(ds.rows_in_groups(keep));
  }
  json j = training::to_json(training::evaluate(m, ds));
  j["samples"] = ds.size();
  j["groups"] = ds.group_ids();
  emit(j);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyperbolic mixture-of-curvature-experts toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic multimodal dataset");
  g->add_option("--spec", gen.spec, "SyntheticSpec JSON (missing keys take defaults)")->required();
  g->add_option("--out", gen.out, "Output directory")->required();

  DeltaArgs delta;
  auto* d = app.add_subcommand("delta", "Sampled delta-hyperbolicity of a point cloud");
  d->add_option("--input", delta.input, "CSV with a header row")->required();
  d->add_option("--batch-size", delta.batch_size, "Points per batch");
  d->add_option("--batches", delta.batches, "Number of batches");
  d->add_option("--seed", delta.seed, "Sampling seed");
  d->add_option("--metric", delta.metric, "euclidean (rows are points) or precomputed (distance matrix)");
  d->add_flag("--precomputed", delta.precomputed, "Same as --metric precomputed");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Grouped cross-validated training");
  t->add_option("--config", train.config, "Run config JSON")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_flag("--quiet", train.quiet, "No per-epoch progress on stderr");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  e->add_option("--checkpoint", eval.checkpoint, "Checkpoint JSON")->required();
  e->add_option("--data", eval.data, "Dataset directory")->required();
  e->add_option("--groups", eval.groups, "Comma-separated group ids to keep");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kInput;
  }

  try {
    if (*g) return cmd_gen(gen);
    if (*d) return cmd_delta(delta);
    if (*t) return cmd_train(train);
    if (*e) return cmd_eval(eval);
  } catch (const VersionError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kVersion;
  } catch (const ConvergenceError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kNumeric;
  } catch (const TrainingError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kNumeric;
  } catch (const NumericError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kNumeric;
  } catch (const Error& err) {
    // Input, dimension, geometry and parameter errors all trace back to
    // what the user supplied.
    std::cerr << "error: " << err.what() << "\n";
    return kInput;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kOther;
  }
  return kOther;
}

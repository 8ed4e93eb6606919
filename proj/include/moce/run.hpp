#pragma once

// Run configuration and the grouped cross-validation driver shared by the
// CLI and the acceptance suite.
//
// Run config (JSON, unknown keys rejected at every level):
// {
//   "seed": 0,
//   "data": { "synthetic": { SyntheticSpec keys, each optional } }   or   { "path": "<dataset dir>" },
//   "model": { "d", "hidden", "layers", "heads", "tau0", "lambda_init",
//              "k_init": -2 | { "<modality>": K, ... },
//              "activation", "variant", "hbn": {..}, "frechet": {..} },
//   "train": { TrainConfig keys except seed },
//   "eval":  { "folds": 4, "validation_groups": 1 }
// }

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>

#include <json.hpp>

#include "moce/data.hpp"
#include "moce/model.hpp"
#include "moce/training.hpp"

namespace moce::run {

struct ModelConfig {
  int d = 8;
  int hidden = 16;
  int layers = 2;
  int heads = 4;
  double tau0 = 1.0;
  double lambda_init = 0.3;
  /// A shared initial curvature or one per modality name.
  std::variant<double, std::map<std::string, double>> k_init = -2.0;
  layers::Activation activation = layers::Activation::elu;
  model::Variant variant = model::Variant::hyperbolic;
  layers::HBNConfig hbn;
  frechet::FrechetConfig frechet;
};

struct EvalConfig {
  int folds = 4;
  /// Training groups held out per fold for early stopping.
  int validation_groups = 1;
};

struct RunConfig {
  std::uint64_t seed = 0;
  /// Exactly one is set. A synthetic spec without an explicit seed uses `seed`.
  std::optional<data::SyntheticSpec> synthetic;
  std::optional<std::filesystem::path> data_path;
  ModelConfig model;
  training::TrainConfig train;
  EvalConfig eval;

  /// Default synthetic data with default settings.
  static RunConfig defaults();
};

/// SyntheticSpec keys merged over the defaults; the seed defaults to
/// `default_seed`. Unknown keys are rejected.
data::SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j, std::uint64_t default_seed,
                                             const std::string& where = "data.synthetic");

/// Relative data paths are resolved against `base_dir`.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const RunConfig& c);

data::Dataset load_data(const RunConfig& c);
model::ModelSpec make_model_spec(const ModelConfig& mc, const data::Dataset& ds);

/// Deterministic sub-seed for an independent random stream.
std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t stream);

struct FoldResult {
  int fold = 0;
  std::vector<int> train_groups;
  std::vector<int> validation_groups;
  std::vector<int> test_groups;
  int best_epoch = 0;
  std::vector<training::EpochRecord> history;
  training::MetricsReport test;
  model::MoceModel best;
};

struct CvResult {
  std::vector<std::string> modalities;
  std::vector<FoldResult> folds;
};

using FoldLogger = std::function<void(int fold, const training::EpochRecord&)>;

CvResult run_cv(const RunConfig& c, const data::Dataset& ds, const FoldLogger& log = {});

/// Per-fold metrics plus mean and sample std across folds. Contains no
/// timings or paths, so equal runs serialize to equal bytes.
nlohmann::json summary_json(const CvResult& r);
nlohmann::json fold_json(const FoldResult& f);

}  // namespace moce::run

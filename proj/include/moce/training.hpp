#pragma once

// Gradients, Adam, the early-stopped training loop and classification
// metrics.

#include <cstdint>
#include <functional>
#include <vector>

#include <json.hpp>

#include "moce/data.hpp"
#include "moce/model.hpp"

namespace moce::training {

struct TrainConfig {
  int epochs = 100;
  double lr = 1e-3;
  /// Number of consecutive non-improving epochs tolerated before stopping.
  int patience = 20;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct MetricsReport {
  double balanced_accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> recalls;
  std::vector<std::vector<long>> confusion;  // [true][predicted]
  std::vector<double> curvatures;
  double lambda = 0.0;
};

/// Classes never predicted and never seen get precision, recall and F1 of 0.
MetricsReport compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels, int classes);
nlohmann::json to_json(const MetricsReport& r);

/// Rows of one domain; inputs in the model's canonical modality order.
struct Batch {
  std::vector<Mat<double>> inputs;
  std::vector<int> labels;
  int domain = 0;
};

Batch make_batch(const model::ModelSpec& spec, const data::Dataset& ds, const std::vector<std::size_t>& rows);

/// One batch per domain, rows in dataset order.
std::vector<Batch> domain_batches(const model::ModelSpec& spec, const data::Dataset& ds);

/// Mean cross-entropy of the batch in training mode. Running statistics in
/// `state` are updated as in a training step.
double batch_loss(const model::ModelSpec& spec, const model::ModelParams<double>& params, model::ModelState& state,
                  const Batch& batch, int step);

struct LossGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // flatten() order
};

/// Reverse-mode gradient of batch_loss. A non-finite loss or gradient raises
/// TrainingError naming the offending parameter.
LossGradient loss_gradient(const model::ModelSpec& spec, const model::ModelParams<double>& params,
                           model::ModelState& state, const Batch& batch, int step);

/// Central differences of batch_loss, each evaluation on a copy of `state`.
std::vector<double> loss_gradient_fd(const model::ModelSpec& spec, const model::ModelParams<double>& params,
                                     const model::ModelState& state, const Batch& batch, int step, double h = 1e-5);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-6);

class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1, double beta2, double eps);
  void step(std::vector<double>& params, const std::vector<double>& grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

/// Predictions for every row of `ds` (dataset order); each domain is
/// evaluated as one batch on a copy of the running statistics.
std::vector<int> predict(const model::MoceModel& m, const data::Dataset& ds);
MetricsReport evaluate(const model::MoceModel& m, const data::Dataset& ds);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  MetricsReport validation;
};

nlohmann::json to_json(const EpochRecord& r);

struct TrainResult {
  model::MoceModel best;  // parameters and statistics at the best validation epoch
  int best_epoch = 0;
  std::vector<EpochRecord> history;
};

using EpochLogger = std::function<void(const EpochRecord&)>;

/// Per-domain minibatches (each domain's rows shuffled and cut into
/// near-equal chunks of at most batch_size), chunk order shuffled every
/// epoch. After each Adam step the curvatures are clamped and the HBN
/// statistics moved to them. The best epoch is the first reaching the
/// highest validation balanced accuracy.
TrainResult train(model::MoceModel model, const data::Dataset& train_set, const data::Dataset& validation_set,
                  const TrainConfig& cfg, const EpochLogger& log = {});

}  // namespace moce::training

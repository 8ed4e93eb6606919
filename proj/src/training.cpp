#include "moce/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "moce/ad/var.hpp"
#include "moce/errors.hpp"
#include "moce/json_util.hpp"

namespace moce::training {

using nlohmann::json;
using model::ModelParams;
using model::ModelSpec;
using model::ModelState;
using model::MoceModel;

void TrainConfig::validate() const {
  if (epochs < 1) throw InputError("train: epochs must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InputError("train: lr must be >= 0");
  if (patience < 0) throw InputError("train: patience must be >= 0");
  if (batch_size < 2) throw InputError("train: batch_size must be >= 2");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InputError("train: Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw InputError("train: adam_eps must be > 0");
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs}, {"lr", c.lr},       {"patience", c.patience}, {"batch_size", c.batch_size},
          {"seed", c.seed},     {"beta1", c.beta1}, {"beta2", c.beta2},       {"adam_eps", c.adam_eps}};
}

TrainConfig train_config_from_json(const json& j) {
  using namespace json_util;
  const std::string w = "train";
  require_object(j, w);
  reject_unknown(j, {"epochs", "lr", "patience", "batch_size", "seed", "beta1", "beta2", "adam_eps"}, w);
  TrainConfig c;
  c.epochs = get_or(j, "epochs", c.epochs, w);
  c.lr = get_or(j, "lr", c.lr, w);
  c.patience = get_or(j, "patience", c.patience, w);
  c.batch_size = get_or(j, "batch_size", c.batch_size, w);
  c.seed = get_or(j, "seed", c.seed, w);
  c.beta1 = get_or(j, "beta1", c.beta1, w);
  c.beta2 = get_or(j, "beta2", c.beta2, w);
  c.adam_eps = get_or(j, "adam_eps", c.adam_eps, w);
  c.validate();
  return c;
}

MetricsReport compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels, int classes) {
  if (predictions.empty()) throw InputError("metrics: no predictions");
  if (predictions.size() != labels.size()) throw InputError("metrics: predictions and labels differ in length");
  if (classes < 1) throw InputError("metrics: classes must be >= 1");
  MetricsReport r;
  r.confusion.assign(static_cast<std::size_t>(classes), std::vector<long>(static_cast<std::size_t>(classes), 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes || predictions[i] < 0 || predictions[i] >= classes) {
      throw InputError("metrics: class index out of range");
    }
    ++r.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predictions[i])];
  }
  double recall_sum = 0.0, f1_sum = 0.0;
  for (std::size_t c = 0; c < r.confusion.size(); ++c) {
    long tp = r.confusion[c][c], fn = 0, fp = 0;
    for (std::size_t o = 0; o < r.confusion.size(); ++o) {
      if (o == c) continue;
      fn += r.confusion[c][o];
      fp += r.confusion[o][c];
    }
    const double recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double f1 = tp > 0 ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn) : 0.0;
    r.recalls.push_back(recall);
    recall_sum += recall;
    f1_sum += f1;
  }
  r.balanced_accuracy = recall_sum / classes;
  r.macro_f1 = f1_sum / classes;
  return r;
}

json to_json(const MetricsReport& r) {
  return {{"balanced_accuracy", r.balanced_accuracy},
          {"macro_f1", r.macro_f1},
          {"recalls", r.recalls},
          {"confusion", r.confusion},
          {"curvatures", r.curvatures},
          {"lambda", r.lambda}};
}

json to_json(const EpochRecord& r) {
  json j = to_json(r.validation);
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  return j;
}

Batch make_batch(const ModelSpec& spec, const data::Dataset& ds, const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw InputError("batch: no rows");
  Batch b;
  b.domain = ds.groups[rows[0]];
  for (std::size_t r : rows) {
    if (ds.groups[r] != b.domain) throw InputError("batch: rows from more than one domain");
    b.labels.push_back(ds.labels[r]);
  }
  for (std::size_t m = 0; m < spec.modalities.size(); ++m) {
    const auto it = std::find(ds.modality_names.begin(), ds.modality_names.end(), spec.modalities[m]);
    if (it == ds.modality_names.end()) throw InputError("data has no modality '" + spec.modalities[m] + "'");
    const Mat<double>& f = ds.features[static_cast<std::size_t>(it - ds.modality_names.begin())];
    if (f.cols() != spec.input_dims[m]) {
      throw InputError("modality '" + spec.modalities[m] + "' has " + std::to_string(f.cols()) +
                       " features in the data but the model expects " + std::to_string(spec.input_dims[m]));
    }
    Mat<double> x(static_cast<Eigen::Index>(rows.size()), f.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = f.row(static_cast<Eigen::Index>(rows[i]));
    b.inputs.push_back(std::move(x));
  }
  return b;
}

namespace {

std::map<int, std::vector<std::size_t>> rows_by_domain(const data::Dataset& ds) {
  std::map<int, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < ds.size(); ++i) out[ds.groups[i]].push_back(i);
  return out;
}

void check_classes(const ModelSpec& spec, const data::Dataset& ds) {
  for (int y : ds.labels) {
    if (y < 0 || y >= spec.classes) {
      throw InputError("label " + std::to_string(y) + " outside the model's " + std::to_string(spec.classes) +
                       " classes");
    }
  }
}

}  // namespace

std::vector<Batch> domain_batches(const ModelSpec& spec, const data::Dataset& ds) {
  std::vector<Batch> out;
  for (const auto& [domain, rows] : rows_by_domain(ds)) out.push_back(make_batch(spec, ds, rows));
  return out;
}

double batch_loss(const ModelSpec& spec, const ModelParams<double>& params, ModelState& state, const Batch& batch,
                  int step) {
  const auto logits = model::forward<double>(spec, params, state, batch.inputs, batch.domain, layers::Mode::train, step);
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) loss += model::cross_entropy<double>(logits[i], batch.labels[i]);
  return loss / static_cast<double>(logits.size());
}

LossGradient loss_gradient(const ModelSpec& spec, const ModelParams<double>& params, ModelState& state,
                           const Batch& batch, int step) {
  using ad::Var;
  thread_local ad::Tape tape;
  thread_local std::vector<double> adj;
  tape.clear();
  ad::TapeScope scope(tape);
  const auto vp = model::map_params<Var>(params, [](double v) { return Var::variable(v); });
  const auto logits = model::forward<Var>(spec, vp, state, batch.inputs, batch.domain, layers::Mode::train, step);
  Var loss(0.0);
  for (std::size_t i = 0; i < logits.size(); ++i) loss += model::cross_entropy<Var>(logits[i], batch.labels[i]);
  loss = loss / static_cast<double>(logits.size());
  if (!std::isfinite(loss.val)) throw TrainingError("non-finite training loss on domain " + std::to_string(batch.domain));

  LossGradient out;
  out.loss = loss.val;
  if (loss.is_constant()) {
    out.gradient.assign(model::parameter_count(spec, params), 0.0);
    return out;
  }
  tape.adjoints_into(loss.id, adj);
  model::visit_params(
      spec.modalities,
      [&](const std::string& path, const auto& t) {
        for (Eigen::Index i = 0; i < model::scalar_count(t); ++i) {
          const Var& v = model::scalar_at(t, i);
          const double g = v.is_constant() ? 0.0 : adj[static_cast<std::size_t>(v.id)];
          if (!std::isfinite(g)) throw TrainingError("non-finite gradient for " + path + "[" + std::to_string(i) + "]");
          out.gradient.push_back(g);
        }
      },
      vp);
  return out;
}

std::vector<double> loss_gradient_fd(const ModelSpec& spec, const ModelParams<double>& params, const ModelState& state,
                                     const Batch& batch, int step, double h) {
  const std::vector<double> theta = model::flatten(spec, params);
  ModelParams<double> probe = params;
  std::vector<double> grad(theta.size());
  auto at = [&](const std::vector<double>& x) {
    model::assign_flat(spec, probe, x);
    ModelState s = state;
    return batch_loss(spec, probe, s, batch, step);
  };
  for (std::size_t i = 0; i < theta.size(); ++i) {
    std::vector<double> x = theta;
    x[i] = theta[i] + h;
    const double up = at(x);
    x[i] = theta[i] - h;
    const double down = at(x);
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
  if (a.size() != b.size()) throw DimensionError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::vector<double>& params, const std::vector<double>& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw DimensionError("Adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

std::vector<int> predict(const MoceModel& m, const data::Dataset& ds) {
  check_classes(m.spec, ds);
  std::vector<int> out(ds.size(), -1);
  for (const auto& [domain, rows] : rows_by_domain(ds)) {
    const Batch b = make_batch(m.spec, ds, rows);
    const auto logits = m.logits(b.inputs, domain);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      Eigen::Index best = 0;
      logits[i].maxCoeff(&best);
      out[rows[i]] = static_cast<int>(best);
    }
  }
  return out;
}

MetricsReport evaluate(const MoceModel& m, const data::Dataset& ds) {
  MetricsReport r = compute_metrics(predict(m, ds), ds.labels, m.spec.classes);
  r.curvatures = m.curvatures();
  r.lambda = m.lambda();
  return r;
}

TrainResult train(MoceModel model, const data::Dataset& train_set, const data::Dataset& validation_set,
                  const TrainConfig& cfg, const EpochLogger& log) {
  cfg.validate();
  if (train_set.size() == 0) throw InputError("train: empty training split");
  if (validation_set.size() == 0) throw InputError("train: empty validation split");
  check_classes(model.spec, train_set);

  std::mt19937_64 rng(cfg.seed);
  const auto domains = rows_by_domain(train_set);
  std::vector<double> theta = model::flatten(model.spec, model.params);
  Adam adam(theta.size(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);

  TrainResult result{model, 0, {}};
  double best = -1.0;
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::vector<std::size_t>> chunks;
    for (auto [domain, rows] : domains) {
      std::shuffle(rows.begin(), rows.end(), rng);
      const std::size_t n = rows.size();
      const std::size_t k = (n + static_cast<std::size_t>(cfg.batch_size) - 1) / static_cast<std::size_t>(cfg.batch_size);
      for (std::size_t c = 0, start = 0; c < k; ++c) {
        const std::size_t len = n / k + (c < n % k ? 1 : 0);
        chunks.emplace_back(rows.begin() + static_cast<std::ptrdiff_t>(start),
                            rows.begin() + static_cast<std::ptrdiff_t>(start + len));
        start += len;
      }
    }
    std::shuffle(chunks.begin(), chunks.end(), rng);

    double loss_sum = 0.0;
    for (const auto& rows : chunks) {
      const Batch batch = make_batch(model.spec, train_set, rows);
      const LossGradient lg = loss_gradient(model.spec, model.params, model.state, batch, epoch - 1);
      loss_sum += lg.loss * static_cast<double>(rows.size());
      adam.step(theta, lg.gradient);
      model::assign_flat(model.spec, model.params, theta);
      model.sync_curvatures();
      theta = model::flatten(model.spec, model.params);  // picks up the curvature clamp
    }

    EpochRecord rec{epoch, loss_sum / static_cast<double>(train_set.size()), evaluate(model, validation_set)};
    result.history.push_back(rec);
    if (log) log(rec);
    if (rec.validation.balanced_accuracy > best) {
      best = rec.validation.balanced_accuracy;
      result.best = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      break;
    }
  }
  return result;
}

}  // namespace moce::training

#include "moce/run.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

#include "moce/errors.hpp"
#include "moce/json_util.hpp"
#include "moce/stats.hpp"

namespace moce::run {

using nlohmann::json;
using namespace moce::json_util;

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.synthetic = data::SyntheticSpec::defaults();
  return c;
}

data::SyntheticSpec synthetic_spec_from_json(const json& j, std::uint64_t default_seed, const std::string& where) {
  require_object(j, where);
  json full = data::to_json(data::SyntheticSpec::defaults());
  full["seed"] = default_seed;
  for (const auto& [k, v] : j.items()) full[k] = v;
  // Unknown keys survive the merge and are rejected by the spec reader.
  return data::spec_from_json(full);
}

namespace {

ModelConfig model_from_json(const json& j) {
  const std::string w = "model";
  reject_unknown(j,
                 {"d", "hidden", "layers", "heads", "tau0", "lambda_init", "k_init", "activation", "variant", "hbn",
                  "frechet"},
                 w);
  ModelConfig m;
  m.d = get_or(j, "d", m.d, w);
  m.hidden = get_or(j, "hidden", m.hidden, w);
  m.layers = get_or(j, "layers", m.layers, w);
  m.heads = get_or(j, "heads", m.heads, w);
  m.tau0 = get_or(j, "tau0", m.tau0, w);
  m.lambda_init = get_or(j, "lambda_init", m.lambda_init, w);
  if (j.contains("k_init")) {
    const json& k = j.at("k_init");
    if (k.is_number()) {
      m.k_init = k.get<double>();
    } else if (k.is_object()) {
      m.k_init = get<std::map<std::string, double>>(j, "k_init", w);
    } else {
      throw InputError("model.k_init: expected a number or an object of per-modality numbers");
    }
  }
  if (j.contains("activation")) m.activation = layers::parse_activation(get<std::string>(j, "activation", w));
  if (j.contains("variant")) m.variant = model::parse_variant(get<std::string>(j, "variant", w));
  if (j.contains("hbn")) {
    const json& h = j.at("hbn");
    reject_unknown(h, {"eps", "eta0", "decay", "eta_test"}, "model.hbn");
    m.hbn.eps = get_or(h, "eps", m.hbn.eps, "model.hbn");
    m.hbn.eta0 = get_or(h, "eta0", m.hbn.eta0, "model.hbn");
    m.hbn.decay = get_or(h, "decay", m.hbn.decay, "model.hbn");
    m.hbn.eta_test = get_or(h, "eta_test", m.hbn.eta_test, "model.hbn");
  }
  if (j.contains("frechet")) {
    const json& f = j.at("frechet");
    reject_unknown(f, {"max_iters", "tol", "step"}, "model.frechet");
    m.frechet.max_iters = get_or(f, "max_iters", m.frechet.max_iters, "model.frechet");
    m.frechet.tol = get_or(f, "tol", m.frechet.tol, "model.frechet");
    m.frechet.step = get_or(f, "step", m.frechet.step, "model.frechet");
  }
  try {
    m.hbn.validate();
    m.frechet.validate();
  } catch (const ParameterError& e) {
    throw InputError(std::string("model: ") + e.what());
  }
  return m;
}

json model_to_json(const ModelConfig& m) {
  json k;
  if (std::holds_alternative<double>(m.k_init)) {
    k = std::get<double>(m.k_init);
  } else {
    k = std::get<std::map<std::string, double>>(m.k_init);
  }
  return {{"d", m.d},
          {"hidden", m.hidden},
          {"layers", m.layers},
          {"heads", m.heads},
          {"tau0", m.tau0},
          {"lambda_init", m.lambda_init},
          {"k_init", k},
          {"activation", layers::to_string(m.activation)},
          {"variant", model::to_string(m.variant)},
          {"hbn", {{"eps", m.hbn.eps}, {"eta0", m.hbn.eta0}, {"decay", m.hbn.decay}, {"eta_test", m.hbn.eta_test}}},
          {"frechet", {{"max_iters", m.frechet.max_iters}, {"tol", m.frechet.tol}, {"step", m.frechet.step}}}};
}

json mean_std(const std::vector<double>& xs) {
  return {{"mean", stats::mean(xs)}, {"std", xs.size() > 1 ? stats::stddev(xs) : 0.0}};
}

std::string percent(const std::vector<double>& xs) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", 100.0 * stats::mean(xs), xs.size() > 1 ? 100.0 * stats::stddev(xs) : 0.0);
  return buf;
}

}  // namespace

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  reject_unknown(j, {"seed", "data", "model", "train", "eval"}, "config");
  RunConfig c;
  c.seed = get_or(j, "seed", c.seed, "config");

  const json data = j.contains("data") ? j.at("data") : json{{"synthetic", json::object()}};
  reject_unknown(data, {"synthetic", "path"}, "data");
  if (data.contains("synthetic") == data.contains("path")) {
    throw InputError("data: give exactly one of 'synthetic' or 'path'");
  }
  if (data.contains("synthetic")) {
    c.synthetic = synthetic_spec_from_json(data.at("synthetic"), c.seed);
  } else {
    std::filesystem::path p = get<std::string>(data, "path", "data");
    c.data_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  }

  if (j.contains("model")) c.model = model_from_json(j.at("model"));
  if (j.contains("train")) {
    if (j.at("train").contains("seed")) throw InputError("train: 'seed' is set by the top-level config seed");
    c.train = training::train_config_from_json(j.at("train"));
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    reject_unknown(e, {"folds", "validation_groups"}, "eval");
    c.eval.folds = get_or(e, "folds", c.eval.folds, "eval");
    c.eval.validation_groups = get_or(e, "validation_groups", c.eval.validation_groups, "eval");
    if (c.eval.folds < 2) throw InputError("eval: folds must be >= 2");
    if (c.eval.validation_groups < 1) throw InputError("eval: validation_groups must be >= 1");
  }
  return c;
}

json to_json(const RunConfig& c) {
  json data;
  if (c.synthetic) data["synthetic"] = data::to_json(*c.synthetic);
  if (c.data_path) data["path"] = c.data_path->string();
  json train = training::to_json(c.train);
  train.erase("seed");
  return {{"seed", c.seed},
          {"data", data},
          {"model", model_to_json(c.model)},
          {"train", train},
          {"eval", {{"folds", c.eval.folds}, {"validation_groups", c.eval.validation_groups}}}};
}

data::Dataset load_data(const RunConfig& c) {
  if (c.synthetic) return data::generate(*c.synthetic);
  if (c.data_path) return data::read_dataset(*c.data_path);
  throw InputError("config has no data source");
}

model::ModelSpec make_model_spec(const ModelConfig& mc, const data::Dataset& ds) {
  model::ModelSpec s;
  std::vector<std::size_t> order(ds.modality_names.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ds.modality_names[a] < ds.modality_names[b]; });
  for (std::size_t i : order) {
    const std::string& name = ds.modality_names[i];
    s.modalities.push_back(name);
    s.input_dims.push_back(static_cast<int>(ds.features[i].cols()));
    if (std::holds_alternative<double>(mc.k_init)) {
      s.k_init.push_back(std::get<double>(mc.k_init));
    } else {
      const auto& per = std::get<std::map<std::string, double>>(mc.k_init);
      const auto it = per.find(name);
      if (it == per.end()) throw InputError("model.k_init: no curvature for modality '" + name + "'");
      s.k_init.push_back(it->second);
    }
  }
  if (std::holds_alternative<std::map<std::string, double>>(mc.k_init)) {
    for (const auto& [name, k] : std::get<std::map<std::string, double>>(mc.k_init)) {
      if (!std::binary_search(s.modalities.begin(), s.modalities.end(), name)) {
        throw InputError("model.k_init: data has no modality '" + name + "'");
      }
    }
  }
  s.classes = ds.classes;
  s.d = mc.d;
  s.hidden = mc.hidden;
  s.layers = mc.layers;
  s.heads = mc.heads;
  s.tau0 = mc.tau0;
  s.lambda_init = mc.lambda_init;
  s.activation = mc.activation;
  s.variant = mc.variant;
  s.hbn = mc.hbn;
  s.frechet = mc.frechet;
  s.validate();
  return s;
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

CvResult run_cv(const RunConfig& c, const data::Dataset& ds, const FoldLogger& log) {
  c.train.validate();
  const model::ModelSpec spec = make_model_spec(c.model, ds);
  const auto folds = data::grouped_folds(ds, c.eval.folds);
  CvResult out;
  out.modalities = spec.modalities;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    FoldResult fr;
    fr.fold = static_cast<int>(f);
    fr.test_groups = folds[f].test_groups;
    std::vector<int> pool = folds[f].train_groups;
    if (static_cast<int>(pool.size()) <= c.eval.validation_groups) {
      throw InputError("eval: fold " + std::to_string(f) + " has too few training groups for " +
                       std::to_string(c.eval.validation_groups) + " validation group(s)");
    }
    std::mt19937_64 split_rng(sub_seed(c.seed, 3 * f));
    std::shuffle(pool.begin(), pool.end(), split_rng);
    fr.validation_groups.assign(pool.begin(), pool.begin() + c.eval.validation_groups);
    fr.train_groups.assign(pool.begin() + c.eval.validation_groups, pool.end());
    std::sort(fr.validation_groups.begin(), fr.validation_groups.end());
    std::sort(fr.train_groups.begin(), fr.train_groups.end());

    training::TrainConfig tc = c.train;
    tc.seed = sub_seed(c.seed, 3 * f + 1);
    auto res = training::train(model::MoceModel::init(spec, sub_seed(c.seed, 3 * f + 2)),
                               ds.subset(ds.rows_in_groups(fr.train_groups)),
                               ds.subset(ds.rows_in_groups(fr.validation_groups)), tc,
                               [&](const training::EpochRecord& r) {
                                 if (log) log(fr.fold, r);
                               });
    fr.best_epoch = res.best_epoch;
    fr.history = std::move(res.history);
    fr.best = std::move(res.best);
    fr.test = training::evaluate(fr.best, ds.subset(ds.rows_in_groups(fr.test_groups)));
    out.folds.push_back(std::move(fr));
  }
  return out;
}

json fold_json(const FoldResult& f) {
  json j = training::to_json(f.test);
  j["fold"] = f.fold;
  j["train_groups"] = f.train_groups;
  j["validation_groups"] = f.validation_groups;
  j["test_groups"] = f.test_groups;
  j["best_epoch"] = f.best_epoch;
  j["epochs_run"] = static_cast<int>(f.history.size());
  return j;
}

json summary_json(const CvResult& r) {
  std::vector<double> ba, f1, lam;
  std::vector<std::vector<double>> curv(r.modalities.size());
  json folds = json::array();
  for (const auto& f : r.folds) {
    folds.push_back(fold_json(f));
    ba.push_back(f.test.balanced_accuracy);
    f1.push_back(f.test.macro_f1);
    lam.push_back(f.test.lambda);
    for (std::size_t m = 0; m < curv.size(); ++m) curv[m].push_back(f.test.curvatures[m]);
  }
  json curvatures = json::object();
  for (std::size_t m = 0; m < curv.size(); ++m) curvatures[r.modalities[m]] = mean_std(curv[m]);
  return {{"modalities", r.modalities},
          {"folds", folds},
          {"summary",
           {{"balanced_accuracy", mean_std(ba)},
            {"macro_f1", mean_std(f1)},
            {"curvatures", curvatures},
            {"lambda", mean_std(lam)},
            {"table", {{"balanced_accuracy", percent(ba)}, {"macro_f1", percent(f1)}}}}}};
}

}  // namespace moce::run

#include "moce/checkpoint.hpp"

#include "moce/errors.hpp"
#include "moce/io.hpp"
#include "moce/json_util.hpp"

namespace moce::checkpoint {

using nlohmann::json;
using namespace moce::json_util;
using model::ModelSpec;
using model::MoceModel;

namespace {

json tensor_to_json(double x) { return x; }
json tensor_to_json(const Vec<double>& v) { return std::vector<double>(v.data(), v.data() + v.size()); }
json tensor_to_json(const Mat<double>& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(tensor_to_json(Vec<double>(m.row(r).transpose())));
  return rows;
}

Vec<double> vec_from_json(const json& j, Eigen::Index n, const std::string& where) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n) {
    throw InputError(where + ": expected an array of " + std::to_string(n) + " numbers");
  }
  Vec<double> v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!j[i].is_number()) throw InputError(where + ": non-numeric entry");
    v[i] = j[i].get<double>();
  }
  return v;
}

void tensor_from_json(const json& j, double& x, const std::string& where) {
  if (!j.is_number()) throw InputError(where + ": expected a number");
  x = j.get<double>();
}
void tensor_from_json(const json& j, Vec<double>& v, const std::string& where) { v = vec_from_json(j, v.size(), where); }
void tensor_from_json(const json& j, Mat<double>& m, const std::string& where) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != m.rows()) {
    throw InputError(where + ": expected " + std::to_string(m.rows()) + " rows");
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    m.row(r) = vec_from_json(j[r], m.cols(), where + "[" + std::to_string(r) + "]").transpose();
  }
}

int domain_from_key(const std::string& key, const std::string& where) {
  return static_cast<int>(io::parse_int(key, where + " domain key"));
}

}  // namespace

json spec_to_json(const ModelSpec& s) {
  return {{"modalities", s.modalities},
          {"input_dims", s.input_dims},
          {"classes", s.classes},
          {"d", s.d},
          {"hidden", s.hidden},
          {"layers", s.layers},
          {"heads", s.heads},
          {"tau0", s.tau0},
          {"lambda_init", s.lambda_init},
          {"k_init", s.k_init},
          {"activation", layers::to_string(s.activation)},
          {"variant", model::to_string(s.variant)},
          {"hbn", {{"eps", s.hbn.eps}, {"eta0", s.hbn.eta0}, {"decay", s.hbn.decay}, {"eta_test", s.hbn.eta_test}}},
          {"frechet", {{"max_iters", s.frechet.max_iters}, {"tol", s.frechet.tol}, {"step", s.frechet.step}}}};
}

ModelSpec spec_from_json(const json& j) {
  const std::string w = "checkpoint spec";
  require_object(j, w);
  reject_unknown(j,
                 {"modalities", "input_dims", "classes", "d", "hidden", "layers", "heads", "tau0", "lambda_init",
                  "k_init", "activation", "variant", "hbn", "frechet"},
                 w);
  ModelSpec s;
  s.modalities = get<std::vector<std::string>>(j, "modalities", w);
  s.input_dims = get<std::vector<int>>(j, "input_dims", w);
  s.classes = get<int>(j, "classes", w);
  s.d = get<int>(j, "d", w);
  s.hidden = get<int>(j, "hidden", w);
  s.layers = get<int>(j, "layers", w);
  s.heads = get<int>(j, "heads", w);
  s.tau0 = get<double>(j, "tau0", w);
  s.lambda_init = get<double>(j, "lambda_init", w);
  s.k_init = get<std::vector<double>>(j, "k_init", w);
  s.activation = layers::parse_activation(get<std::string>(j, "activation", w));
  s.variant = model::parse_variant(get<std::string>(j, "variant", w));
  const json& h = j.at("hbn");
  require_object(h, w + ".hbn");
  reject_unknown(h, {"eps", "eta0", "decay", "eta_test"}, w + ".hbn");
  s.hbn.eps = get<double>(h, "eps", w + ".hbn");
  s.hbn.eta0 = get<double>(h, "eta0", w + ".hbn");
  s.hbn.decay = get<double>(h, "decay", w + ".hbn");
  s.hbn.eta_test = get<double>(h, "eta_test", w + ".hbn");
  const json& f = j.at("frechet");
  require_object(f, w + ".frechet");
  reject_unknown(f, {"max_iters", "tol", "step"}, w + ".frechet");
  s.frechet.max_iters = get<int>(f, "max_iters", w + ".frechet");
  s.frechet.tol = get<double>(f, "tol", w + ".frechet");
  s.frechet.step = get<double>(f, "step", w + ".frechet");
  s.validate();
  s.frechet.validate();
  return s;
}

json to_json(const MoceModel& m) {
  json params = json::object();
  model::visit_params(
      m.spec.modalities, [&](const std::string& path, const auto& t) { params[path] = tensor_to_json(t); }, m.params);

  json hbn = json::object(), ebn = json::object();
  for (std::size_t i = 0; i < m.spec.modalities.size(); ++i) {
    const auto& name = m.spec.modalities[i];
    json domains = json::object();
    for (const auto& [id, st] : m.state.hbn[i].domains()) {
      domains[std::to_string(id)] = {{"mean", tensor_to_json(st.mean.coords())}, {"variance", st.variance}};
    }
    hbn[name] = {{"curvature", m.state.hbn[i].curvature().value()}, {"domains", domains}};
    json edomains = json::object();
    for (const auto& [id, st] : m.state.ebn[i].domains) {
      edomains[std::to_string(id)] = {{"mean", tensor_to_json(st.mean)}, {"variance", st.variance}};
    }
    ebn[name] = {{"domains", edomains}};
  }
  return {{"format_version", kCheckpointFormatVersion},
          {"spec", spec_to_json(m.spec)},
          {"params", params},
          {"curvatures", m.curvatures()},
          {"lambda", m.lambda()},
          {"state", {{"hbn", hbn}, {"ebn", ebn}}}};
}

static MoceModel from_json_impl(const json& j) {
  require_object(j, "checkpoint");
  if (!j.contains("format_version") || !j["format_version"].is_number_integer()) {
    throw InputError("checkpoint: missing integer format_version");
  }
  if (j["format_version"].get<int>() != kCheckpointFormatVersion) {
    throw VersionError("checkpoint format_version " + j["format_version"].dump() + " is not supported (expected " +
                       std::to_string(kCheckpointFormatVersion) + ")");
  }
  reject_unknown(j, {"format_version", "spec", "params", "curvatures", "lambda", "state"}, "checkpoint");
  if (!j.contains("spec") || !j.contains("params") || !j.contains("state")) {
    throw InputError("checkpoint: spec, params and state are required");
  }
  // init() fixes every tensor's shape; the stored values then overwrite it.
  MoceModel m = MoceModel::init(spec_from_json(j["spec"]), 0);
  const json& params = j["params"];
  require_object(params, "checkpoint.params");
  std::size_t seen = 0;
  model::visit_params(
      m.spec.modalities,
      [&](const std::string& path, auto& t) {
        if (!params.contains(path)) throw InputError("checkpoint.params: missing '" + path + "'");
        tensor_from_json(params[path], t, "checkpoint.params." + path);
        ++seen;
      },
      m.params);
  if (seen != params.size()) throw InputError("checkpoint.params: unexpected extra entries");

  const json& state = j["state"];
  require_object(state, "checkpoint.state");
  reject_unknown(state, {"hbn", "ebn"}, "checkpoint.state");
  const Eigen::Index d = m.spec.d;
  for (std::size_t i = 0; i < m.spec.modalities.size(); ++i) {
    const auto& name = m.spec.modalities[i];
    const std::string w = "checkpoint.state.hbn." + name;
    const json& h = state.at("hbn").at(name);
    reject_unknown(h, {"curvature", "domains"}, w);
    layers::HBNState hs(d, lorentz::Curvature<double>(get<double>(h, "curvature", w)), m.spec.hbn);
    for (const auto& [key, st] : h.at("domains").items()) {
      reject_unknown(st, {"mean", "variance"}, w + "." + key);
      lorentz::LorentzPoint<double> mean(vec_from_json(st.at("mean"), d + 1, w + "." + key + ".mean"), hs.curvature());
      hs.set(domain_from_key(key, w), {mean, get<double>(st, "variance", w + "." + key)});
    }
    m.state.hbn[i] = std::move(hs);

    const std::string we = "checkpoint.state.ebn." + name;
    const json& e = state.at("ebn").at(name);
    reject_unknown(e, {"domains"}, we);
    for (const auto& [key, st] : e.at("domains").items()) {
      reject_unknown(st, {"mean", "variance"}, we + "." + key);
      m.state.ebn[i].domains[domain_from_key(key, we)] = {vec_from_json(st.at("mean"), d, we + "." + key + ".mean"),
                                                          get<double>(st, "variance", we + "." + key)};
    }
  }
  return m;
}

MoceModel from_json(const json& j) {
  try {
    return from_json_impl(j);
  } catch (const json::exception& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
}

void save(const MoceModel& m, const std::filesystem::path& path) { io::write_text(path, to_json(m).dump(1) + "\n"); }

MoceModel load(const std::filesystem::path& path) {
  const std::string text = io::read_text(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError("checkpoint " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace moce::checkpoint

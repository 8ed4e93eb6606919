#include "moce/data.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

#include <Eigen/QR>

#include "moce/errors.hpp"
#include "moce/io.hpp"
#include "moce/json_util.hpp"

namespace moce::data {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kMaxNodes = 4e6;

bool safe_name(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  });
}

void check_names(const std::vector<std::string>& names, const std::string& where) {
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (!safe_name(n)) throw InputError(where + ": modality name '" + n + "' must match [A-Za-z0-9_-]+");
    if (n == "labels") throw InputError(where + ": modality name 'labels' is reserved");
    if (!seen.insert(n).second) throw InputError(where + ": duplicate modality name '" + n + "'");
  }
}

long long ipow(long long b, int e) {
  long long r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

// Node positions of a complete b-ary tree in BFS order; level l starts at
// (b^l - 1) / (b - 1). Edges take successive columns of random orthonormal
// bases, a fresh basis every `dim` edges, so the tree is exactly orthogonal
// whenever dim >= edge count and leaf distances depend only on the level of
// the common ancestor.
Mat<double> embed_tree(const ModalitySpec& m, double r0, double decay, std::mt19937_64& rng) {
  const long long b = m.branching;
  const long long nodes = (ipow(b, m.depth + 1) - 1) / (b - 1);
  Mat<double> pos = Mat<double>::Zero(nodes, m.dim);
  std::normal_distribution<double> nd;
  Mat<double> basis;
  Eigen::Index used = m.dim;
  auto next_direction = [&]() -> Vec<double> {
    if (used == m.dim) {
      Mat<double> g(m.dim, m.dim);
      for (Eigen::Index k = 0; k < g.size(); ++k) g.data()[k] = nd(rng);
      Eigen::HouseholderQR<Mat<double>> qr(g);
      basis = qr.householderQ();
      used = 0;
    }
    return basis.col(used++);
  };
  long long first = 0, width = 1;
  for (int level = 0; level < m.depth; ++level) {
    const double len = r0 * std::pow(decay, level);
    const long long next = first + width;
    for (long long i = 0; i < width; ++i) {
      for (long long c = 0; c < b; ++c) {
        pos.row(next + i * b + c) = pos.row(first + i) + len * next_direction().transpose();
      }
    }
    first = next;
    width *= b;
  }
  return pos;
}

}  // namespace

int class_level(int branching, int classes) {
  int level = 0;
  long long width = 1;
  while (width < classes) {
    width *= branching;
    ++level;
  }
  return level;
}

void SyntheticSpec::validate() const {
  const std::string w = "synthetic spec";
  if (modalities.empty()) throw InputError(w + ": needs at least one modality");
  std::vector<std::string> names;
  for (const auto& m : modalities) names.push_back(m.name);
  check_names(names, w);
  if (classes < 2) throw InputError(w + ": classes must be >= 2");
  if (subjects < 1) throw InputError(w + ": subjects must be >= 1");
  if (samples_per_subject < 1) throw InputError(w + ": samples_per_subject must be >= 1");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw InputError(w + ": noise must be finite and >= 0");
  if (!(shift >= 0.0) || !std::isfinite(shift)) throw InputError(w + ": shift must be finite and >= 0");
  if (!(edge_length > 0.0) || !std::isfinite(edge_length)) throw InputError(w + ": edge_length must be > 0");
  if (!(edge_decay > 0.0 && edge_decay <= 1.0)) throw InputError(w + ": edge_decay must lie in (0, 1]");
  for (const auto& m : modalities) {
    const std::string mw = w + ", modality '" + m.name + "'";
    if (m.depth < 1) throw InputError(mw + ": depth must be >= 1");
    if (m.branching < 2) throw InputError(mw + ": branching must be >= 2");
    if (m.dim < 2) throw InputError(mw + ": dim must be >= 2");
    if (!(m.noise_scale >= 0.0) || !std::isfinite(m.noise_scale)) throw InputError(mw + ": noise_scale must be >= 0");
    if (std::pow(static_cast<double>(m.branching), m.depth + 1) > kMaxNodes) {
      throw InputError(mw + ": tree too large (branching^(depth+1) > 4e6)");
    }
    const int lc = class_level(m.branching, classes);
    if (lc > m.depth) {
      throw InputError(mw + ": " + std::to_string(classes) + " classes need depth >= " + std::to_string(lc));
    }
  }
}

SyntheticSpec SyntheticSpec::defaults() {
  SyntheticSpec s;
  s.modalities = {{"deep", 7, 2, 64, 1.0}, {"mid", 4, 2, 32, 1.0}, {"shallow", 2, 2, 16, 1.0}};
  return s;
}

json to_json(const SyntheticSpec& spec) {
  json mods = json::array();
  for (const auto& m : spec.modalities) {
    mods.push_back({{"name", m.name},
                    {"depth", m.depth},
                    {"branching", m.branching},
                    {"dim", m.dim},
                    {"noise_scale", m.noise_scale}});
  }
  return {{"modalities", mods},
          {"classes", spec.classes},
          {"subjects", spec.subjects},
          {"samples_per_subject", spec.samples_per_subject},
          {"noise", spec.noise},
          {"shift", spec.shift},
          {"edge_length", spec.edge_length},
          {"edge_decay", spec.edge_decay},
          {"seed", spec.seed}};
}

SyntheticSpec spec_from_json(const json& j) {
  namespace ju = json_util;
  const std::string w = "synthetic spec";
  ju::reject_unknown(j,
                     {"modalities", "classes", "subjects", "samples_per_subject", "noise", "shift", "edge_length",
                      "edge_decay", "seed"},
                     w);
  SyntheticSpec d;
  SyntheticSpec s;
  s.modalities.clear();
  if (!j.contains("modalities") || !j.at("modalities").is_array()) {
    throw InputError(w + ": 'modalities' must be an array");
  }
  for (std::size_t i = 0; i < j.at("modalities").size(); ++i) {
    const json& mj = j.at("modalities")[i];
    const std::string mw = w + ".modalities[" + std::to_string(i) + "]";
    ju::reject_unknown(mj, {"name", "depth", "branching", "dim", "noise_scale"}, mw);
    ModalitySpec m;
    m.name = ju::get<std::string>(mj, "name", mw);
    m.depth = ju::get<int>(mj, "depth", mw);
    m.branching = ju::get_or<int>(mj, "branching", 2, mw);
    m.dim = ju::get<int>(mj, "dim", mw);
    m.noise_scale = ju::get_or<double>(mj, "noise_scale", 1.0, mw);
    s.modalities.push_back(m);
  }
  s.classes = ju::get_or<int>(j, "classes", d.classes, w);
  s.subjects = ju::get_or<int>(j, "subjects", d.subjects, w);
  s.samples_per_subject = ju::get_or<int>(j, "samples_per_subject", d.samples_per_subject, w);
  s.noise = ju::get_or<double>(j, "noise", d.noise, w);
  s.shift = ju::get_or<double>(j, "shift", d.shift, w);
  s.edge_length = ju::get_or<double>(j, "edge_length", d.edge_length, w);
  s.edge_decay = ju::get_or<double>(j, "edge_decay", d.edge_decay, w);
  s.seed = ju::get_or<std::uint64_t>(j, "seed", d.seed, w);
  s.validate();
  return s;
}

void Dataset::validate() const {
  if (features.empty()) throw InputError("dataset has no modalities");
  if (features.size() != modality_names.size()) throw InputError("dataset: modality names and matrices differ in count");
  check_names(modality_names, "dataset");
  if (groups.size() != labels.size()) throw InputError("dataset: labels and groups differ in length");
  if (classes < 2) throw InputError("dataset: classes must be >= 2");
  for (std::size_t m = 0; m < features.size(); ++m) {
    if (static_cast<std::size_t>(features[m].rows()) != labels.size()) {
      throw InputError("dataset: modality '" + modality_names[m] + "' has " + std::to_string(features[m].rows()) +
                       " rows, labels have " + std::to_string(labels.size()));
    }
    if (features[m].cols() < 1) throw InputError("dataset: modality '" + modality_names[m] + "' has no columns");
    if (!features[m].allFinite()) throw InputError("dataset: modality '" + modality_names[m] + "' has non-finite values");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) throw InputError("dataset: label " + std::to_string(y) + " outside [0, classes)");
  }
}

std::vector<int> Dataset::group_ids() const {
  std::vector<int> g(groups);
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

std::vector<std::size_t> Dataset::rows_in_groups(const std::vector<int>& keep) const {
  const std::set<int> k(keep.begin(), keep.end());
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (k.count(groups[i])) rows.push_back(i);
  }
  return rows;
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.modality_names = modality_names;
  out.classes = classes;
  out.spec = spec;
  for (const auto& f : features) {
    Mat<double> s(static_cast<Eigen::Index>(rows.size()), f.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r] >= static_cast<std::size_t>(f.rows())) throw DimensionError("subset: row index out of range");
      s.row(static_cast<Eigen::Index>(r)) = f.row(static_cast<Eigen::Index>(rows[r]));
    }
    out.features.push_back(std::move(s));
  }
  for (std::size_t r : rows) {
    out.labels.push_back(labels.at(r));
    out.groups.push_back(groups.at(r));
  }
  return out;
}

Dataset generate(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> nd;

  const auto M = spec.modalities.size();
  std::vector<Mat<double>> trees;
  for (const auto& m : spec.modalities) trees.push_back(embed_tree(m, spec.edge_length, spec.edge_decay, rng));

  // shifts[s][m]: one offset per subject and modality.
  std::vector<std::vector<Vec<double>>> shifts(static_cast<std::size_t>(spec.subjects));
  for (auto& per_subject : shifts) {
    for (const auto& m : spec.modalities) {
      Vec<double> v(m.dim);
      const double sd = spec.shift / std::sqrt(static_cast<double>(m.dim));
      for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = sd * nd(rng);
      per_subject.push_back(std::move(v));
    }
  }

  const auto n = static_cast<Eigen::Index>(spec.subjects) * spec.samples_per_subject;
  Dataset ds;
  ds.classes = spec.classes;
  ds.spec = spec;
  for (const auto& m : spec.modalities) {
    ds.modality_names.push_back(m.name);
    ds.features.emplace_back(n, m.dim);
  }
  ds.labels.resize(static_cast<std::size_t>(n));
  ds.groups.resize(static_cast<std::size_t>(n));

  Eigen::Index row = 0;
  for (int s = 0; s < spec.subjects; ++s) {
    for (int i = 0; i < spec.samples_per_subject; ++i, ++row) {
      const int y = i % spec.classes;
      ds.labels[static_cast<std::size_t>(row)] = y;
      ds.groups[static_cast<std::size_t>(row)] = s;
      for (std::size_t mi = 0; mi < M; ++mi) {
        const auto& m = spec.modalities[mi];
        const long long b = m.branching;
        const int lc = class_level(m.branching, spec.classes);
        // Classes spread evenly over the nodes of their level.
        long long width = ipow(b, lc);
        long long node = (ipow(b, lc) - 1) / (b - 1) + (static_cast<long long>(y) * width) / spec.classes;
        std::uniform_int_distribution<long long> child(0, b - 1);
        for (int level = lc; level < m.depth; ++level) node = node * b + 1 + child(rng);
        // Noise stands in for the unresolved levels below the leaves: its norm
        // is about the length the next edge would have.
        const double sigma = spec.noise * m.noise_scale * spec.edge_length * std::pow(spec.edge_decay, m.depth) /
                             std::sqrt(static_cast<double>(m.dim));
        auto out = ds.features[mi].row(row);
        for (Eigen::Index k = 0; k < m.dim; ++k) {
          out(k) = trees[mi](node, k) + sigma * nd(rng) + shifts[static_cast<std::size_t>(s)][mi](k);
        }
      }
    }
  }
  return ds;
}

std::vector<Fold> grouped_folds(const std::vector<int>& group_ids, int k) {
  std::vector<int> g(group_ids);
  std::sort(g.begin(), g.end());
  if (std::adjacent_find(g.begin(), g.end()) != g.end()) throw InputError("grouped_folds: duplicate group ids");
  const int G = static_cast<int>(g.size());
  if (k < 1) throw InputError("grouped_folds: k must be >= 1");
  if (k > G) {
    throw InputError("grouped_folds: " + std::to_string(k) + " folds requested but only " + std::to_string(G) +
                     " groups");
  }
  std::vector<Fold> folds;
  int start = 0;
  for (int f = 0; f < k; ++f) {
    const int len = G / k + (f < G % k ? 1 : 0);
    Fold fold;
    for (int i = 0; i < G; ++i) {
      (i >= start && i < start + len ? fold.test_groups : fold.train_groups).push_back(g[static_cast<std::size_t>(i)]);
    }
    folds.push_back(std::move(fold));
    start += len;
  }
  return folds;
}

std::vector<Fold> grouped_folds(const Dataset& ds, int k) { return grouped_folds(ds.group_ids(), k); }

void write_dataset(const Dataset& ds, const fs::path& dir) {
  ds.validate();
  fs::create_directories(dir);
  json mods = json::array();
  for (std::size_t m = 0; m < ds.features.size(); ++m) {
    const std::string file = ds.modality_names[m] + ".csv";
    std::vector<std::string> header;
    for (Eigen::Index c = 0; c < ds.features[m].cols(); ++c) header.push_back("f" + std::to_string(c));
    io::write_text(dir / file, io::numeric_csv(ds.features[m], header));
    mods.push_back({{"name", ds.modality_names[m]}, {"dim", ds.features[m].cols()}, {"file", file}});
  }
  std::string labels = "label,group\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    labels += std::to_string(ds.labels[i]) + "," + std::to_string(ds.groups[i]) + "\n";
  }
  io::write_text(dir / "labels.csv", labels);

  json manifest = {{"format_version", kDatasetFormatVersion},
                   {"modalities", mods},
                   {"classes", ds.classes},
                   {"groups", ds.group_ids().size()},
                   {"samples", ds.size()},
                   {"labels_file", "labels.csv"}};
  manifest["seed"] = ds.spec ? json(ds.spec->seed) : json(nullptr);
  manifest["spec"] = ds.spec ? to_json(*ds.spec) : json(nullptr);
  // Written last so a present manifest implies complete data files.
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset read_dataset(const fs::path& dir) {
  namespace ju = json_util;
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) throw InputError("no manifest.json in " + dir.string());
  const std::string w = mpath.string();
  const json manifest = ju::parse(io::read_text(mpath), w);
  ju::require_object(manifest, w);
  const int version = ju::get<int>(manifest, "format_version", w);
  if (version != kDatasetFormatVersion) {
    throw VersionError(w + ": dataset format_version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kDatasetFormatVersion) + ")");
  }
  Dataset ds;
  ds.classes = ju::get<int>(manifest, "classes", w);
  if (!manifest.contains("modalities") || !manifest.at("modalities").is_array()) {
    throw InputError(w + ": 'modalities' must be an array");
  }
  for (const json& mj : manifest.at("modalities")) {
    const auto name = ju::get<std::string>(mj, "name", w);
    const auto file = ju::get<std::string>(mj, "file", w);
    const int dim = ju::get<int>(mj, "dim", w);
    std::vector<std::string> header;
    Mat<double> f = io::read_numeric_csv(dir / file, &header);
    if (f.cols() != dim) {
      throw InputError(file + ": " + std::to_string(f.cols()) + " columns, manifest says " + std::to_string(dim));
    }
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] != "f" + std::to_string(c)) throw InputError(file + ": header must be f0..f" + std::to_string(dim - 1));
    }
    ds.modality_names.push_back(name);
    ds.features.push_back(std::move(f));
  }
  const auto labels_file = ju::get_or<std::string>(manifest, "labels_file", "labels.csv", w);
  const io::CsvTable t = io::read_csv(dir / labels_file);
  if (t.header != std::vector<std::string>{"label", "group"}) throw InputError(labels_file + ": header must be label,group");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string rw = labels_file + " row " + std::to_string(r + 2);
    if (t.rows[r].size() != 2) throw InputError(rw + ": expected 2 cells");
    ds.labels.push_back(static_cast<int>(io::parse_int(t.rows[r][0], rw)));
    ds.groups.push_back(static_cast<int>(io::parse_int(t.rows[r][1], rw)));
  }
  if (manifest.contains("spec") && !manifest.at("spec").is_null()) ds.spec = spec_from_json(manifest.at("spec"));
  ds.validate();
  return ds;
}

}  // namespace moce::data

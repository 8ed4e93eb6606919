#pragma once

// Synthetic hierarchical multimodal data, grouped cross-validation folds
// and the on-disk dataset layout.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "moce/scalar.hpp"

namespace moce::data {

inline constexpr int kDatasetFormatVersion = 1;

struct ModalitySpec {
  std::string name;
  int depth = 1;
  int branching = 2;
  int dim = 8;
  double noise_scale = 1.0;  // multiplies SyntheticSpec::noise for this modality
};

struct SyntheticSpec {
  std::vector<ModalitySpec> modalities;
  int classes = 4;
  int subjects = 12;
  int samples_per_subject = 40;
  // Isotropic sample noise, in units of the edge length one level below the
  // leaves: its expected norm is noise * edge_length * edge_decay^depth.
  double noise = 1.0;
  // Expected norm of the per-subject, per-modality offset.
  double shift = 0.3;
  double edge_length = 1.0;
  double edge_decay = 0.7;
  std::uint64_t seed = 0;

  void validate() const;

  /// Three binary-tree modalities of depth 7, 4 and 2 (dims 64, 32, 16),
  /// four classes, twelve subjects.
  static SyntheticSpec defaults();
};

/// Tree level whose nodes define the classes: the shallowest level with at
/// least `classes` nodes.
int class_level(int branching, int classes);

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec spec_from_json(const nlohmann::json& j);

struct Dataset {
  std::vector<std::string> modality_names;
  std::vector<Mat<double>> features;  // one (samples x dim) matrix per modality
  std::vector<int> labels;
  std::vector<int> groups;
  int classes = 0;
  std::optional<SyntheticSpec> spec;

  std::size_t size() const { return labels.size(); }
  void validate() const;
  /// Distinct group ids in ascending order.
  std::vector<int> group_ids() const;
  /// Row indices whose group is in `keep`.
  std::vector<std::size_t> rows_in_groups(const std::vector<int>& keep) const;
  Dataset subset(const std::vector<std::size_t>& rows) const;
};

Dataset generate(const SyntheticSpec& spec);

struct Fold {
  std::vector<int> train_groups;
  std::vector<int> test_groups;
};

/// Sorted groups cut into k contiguous test blocks whose sizes differ by at
/// most one; k equal to the group count is leave-one-group-out.
std::vector<Fold> grouped_folds(const std::vector<int>& group_ids, int k);
std::vector<Fold> grouped_folds(const Dataset& ds, int k);

void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace moce::data

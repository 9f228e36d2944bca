#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include "comt/datamodel.hpp"
#include "comt/synthgen.hpp"

namespace comt {

// Generator provenance stored next to a dataset CSV as `<csv>.meta` (INI).
struct DatasetMeta {
  TaskKind task = TaskKind::kRegression;
  std::uint64_t seed = 0;
  Eigen::Index n = 0;
  Eigen::Index d = 0;
  ClusterGeometry geometry;
  Vector true_w;  // empty for classification
};

// CSV layout: header `y,x1,...,xd`, one instance per row, shortest
// round-trip decimal encoding.
void write_dataset_csv(const std::filesystem::path& path, const Matrix& features, const Vector& labels);
void read_dataset_csv(const std::filesystem::path& path, Matrix& features, Vector& labels);

void write_meta(const std::filesystem::path& path, const DatasetMeta& meta);
DatasetMeta read_meta(const std::filesystem::path& path);

std::filesystem::path meta_path_for(const std::filesystem::path& csv);

struct LabeledData {
  Matrix features;
  Vector labels;
};

// Sparse `label idx:value ...` text, 1-based indices, densified. For
// classification the two label values map to -1 (smaller) and +1 (larger).
// `dim` overrides the width inferred from the largest index.
LabeledData parse_libsvm(std::istream& in, TaskKind task, std::optional<Eigen::Index> dim = std::nullopt);
LabeledData load_libsvm(const std::filesystem::path& path, TaskKind task,
                        std::optional<Eigen::Index> dim = std::nullopt);

}  // namespace comt

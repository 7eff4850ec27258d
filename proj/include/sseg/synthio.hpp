#pragma once

#include "sseg/structure.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace sseg {

/// Per-point labels as produced by a segmentation backbone.
struct LabeledCloud {
  std::vector<Vec3> points;
  std::vector<LabelId> semantics;
  std::vector<int> instances;
  bool normalized = false;

  std::size_t size() const { return points.size(); }
  /// Equal lengths, N >= 1, instance ids 0..K-1 all present, one label per instance.
  void validate() const;
  std::size_t instance_count() const;
  /// Segment k holds the points with instance id k.
  std::vector<Segment> segments() const;
};

/// Translates and scales so the AABB is centered at the origin with unit
/// diagonal. Returns (scale, offset) with p' = (p - offset) * scale.
std::pair<double, Vec3> normalize_cloud(LabeledCloud& cloud);

struct ShapeRecord {
  std::string name;
  std::string category;
  LabeledCloud cloud;
  /// Leaves hold the clean partition; boxes and relations are filled.
  Hierarchy hierarchy;
  /// (source instance, target instance) pairs that undo over-segmentation.
  std::vector<std::pair<int, int>> gt_merges;
};

enum class Category { Chair, Table, Storage };
std::string to_string(Category c);
Category category_from_string(const std::string& name);
Taxonomy category_taxonomy(Category c);

struct NoiseConfig {
  /// Probability that one part is split in two.
  double oversegment_prob = 0.0;
  /// Probability that a chair carries two arm units.
  double arm_prob = 0.0;
  /// Points closer than this to a touching neighbor's box take its instance
  /// (absolute units before normalization); 0 disables.
  double boundary_noise = 0.03;
  /// Fraction of points relabeled to a random other part, wherever they lie.
  double outlier_fraction = 0.002;
  std::size_t num_points = 2048;
  std::size_t min_points_per_part = 48;
};

ShapeRecord gen_shape(Category category, std::uint64_t seed, const NoiseConfig& noise = {});

/// Same part inventory, different geometry: per-axis scaling by up to
/// 1 +- amount, point jitter of amount/10, renormalized. Requires
/// axis-aligned boxes.
ShapeRecord perturb_shape(const ShapeRecord& record, std::uint64_t seed, double amount);

/// Removes one part (instance) and its points; the rest keeps its geometry.
/// Only for records without gt merges.
ShapeRecord drop_part(const ShapeRecord& record, int instance, const Taxonomy& taxonomy);

// --- Files -------------------------------------------------------------------

nlohmann::json hierarchy_to_json(const Hierarchy& h);
Hierarchy hierarchy_from_json(const nlohmann::json& j);
nlohmann::json record_to_json(const ShapeRecord& r);
ShapeRecord record_from_json(const nlohmann::json& j);

/// Parses a JSON file; syntax errors report line and column.
nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j, int indent = -1);

ShapeRecord load_shape(const std::string& path);
void save_shape(const ShapeRecord& r, const std::string& path);
/// Accepts a hierarchy document or a shape record (its hierarchy is used).
Hierarchy load_hierarchy(const std::string& path);
void save_hierarchy(const Hierarchy& h, const std::string& path);

// --- Datasets ----------------------------------------------------------------

struct DatasetEntry {
  std::string file;   // relative to the dataset directory
  std::string split;  // "train" or "test"
};

struct Dataset {
  std::string directory;
  std::string category;
  Taxonomy taxonomy;
  std::vector<DatasetEntry> entries;

  std::vector<DatasetEntry> split(const std::string& name) const;
  std::string path_of(const DatasetEntry& e) const;
};

/// Every fifth record (index % 5 == 4) goes to the test split.
std::string split_for_index(std::size_t index);

/// Writes manifest.json + taxonomy.json next to the records.
void save_manifest(const Dataset& d);
Dataset load_dataset(const std::string& directory);

struct GenerateOptions {
  Category category = Category::Chair;
  std::size_t count = 10;
  std::uint64_t seed = 0;
  NoiseConfig noise;
  int jobs = 1;
};
/// Record i uses seed `seed * 1000003 + i`.
Dataset generate_dataset(const std::string& directory, const GenerateOptions& options);

struct ImportReport {
  std::vector<std::string> imported;
  std::vector<std::pair<std::string, std::string>> skipped;  // (shape, reason)
  std::vector<std::string> notes;
};

/// Cloud: one "x y z" line per point. Annotation:
/// {"parts": [{"label": str, "points": [int, ...]}, ...]}. Every point must be
/// annotated exactly once and labels must exist in the taxonomy.
ShapeRecord import_partnet(const std::string& cloud_file, const std::string& annotation_file,
                           const Taxonomy& taxonomy);

/// Imports every "<name>.pts" with a sibling "<name>.json" from `source` into
/// a dataset at `out`; invalid shapes are skipped and reported.
ImportReport import_directory(const std::string& source, const std::string& out, const Taxonomy& taxonomy,
                              const std::string& category);

}  // namespace sseg

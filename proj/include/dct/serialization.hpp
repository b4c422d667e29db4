#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dct/causal_forest.hpp"
#include "dct/leaf_estimation.hpp"
#include "dct/regression_forest.hpp"
#include "dct/tree.hpp"

namespace dct {

/// Major version of every JSON document written by this library. Readers
/// reject documents with a different major version.
inline constexpr int kSchemaVersion = 1;

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Seed and full row count of the distillation split a teacher was fit on.
struct SplitRecord {
  std::uint64_t seed = 0;
  std::size_t rows = 0;

  bool operator==(const SplitRecord&) const = default;
};

struct CausalForestDocument {
  CausalForest forest;
  std::vector<std::string> feature_names;
  std::optional<SplitRecord> split;
};

/// Distilled tree with its estimates plus free-form run metadata (mode,
/// depth, seeds, ...), written in key order.
struct TreeDocument {
  EstimatedTree tree;
  std::vector<std::string> feature_names;
  std::map<std::string, std::string> metadata;
};

std::string to_json(const CausalForestDocument& doc);
CausalForestDocument causal_forest_from_json(const std::string& text);

std::string to_json(const TreeDocument& doc);
TreeDocument tree_document_from_json(const std::string& text);

std::string to_json(const RegressionForest& forest);
RegressionForest regression_forest_from_json(const std::string& text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace dct

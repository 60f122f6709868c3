#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace volcano {

enum class TaskKind { classification, regression };
enum class FeatureKind { continuous, discrete, categorical };

// Tabular data. Categorical columns are one-hot expanded into `x` at load
// time; `column_kinds` describes the original columns.
struct Dataset {
  Eigen::MatrixXd x;
  std::vector<double> y;  // class index for classification
  std::vector<std::string> column_names;
  std::vector<FeatureKind> column_kinds;
  std::vector<std::string> class_labels;
  TaskKind task = TaskKind::classification;

  std::size_t rows() const { return y.size(); }
  std::size_t features() const { return static_cast<std::size_t>(x.cols()); }
  std::size_t class_count() const { return task == TaskKind::classification ? class_labels.size() : 0; }

  Dataset take(std::span<const std::size_t> indices) const;
};

Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_csv_dataset(std::istream& in, const std::string& source = "<stream>");

struct Splits {
  Dataset train;
  Dataset valid;
  Dataset test;
  bool stratified = true;
};

// 4/5 search + 1/5 test; the search part split 3/4 train + 1/4 validation.
// Stratified by class when every class has at least 3 rows.
Splits split_train_valid_test(const Dataset& dataset, std::uint64_t seed);

// ceil(fraction * n) rows, stratified for classification.
Dataset subsample(const Dataset& dataset, double fraction, std::uint64_t seed);

// Rows of both inputs stacked (same columns).
Dataset concat_rows(const Dataset& a, const Dataset& b);

}  // namespace volcano

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gfsvi/numerics.hpp"
#include "gfsvi/objective.hpp"
#include "gfsvi/random.hpp"

namespace gfsvi {

struct Dataset {
  Matrix features;          // N x d
  Vector targets;           // regression
  std::vector<int> labels;  // classification
  int num_classes = 0;      // 0 for regression
  std::vector<std::string> feature_names;
  std::vector<bool> one_hot;  // per feature column
  std::string target_name = "y";

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
  bool classification() const { return num_classes > 0; }

  Batch batch() const { return Batch{features, targets, labels}; }
  Dataset subset(const std::vector<Eigen::Index>& rows) const;
};

/// y = sin(2 pi x) + noise with x uniform on [-1, -0.5] U [0.5, 1].
Dataset gen_sin(Eigen::Index n, double noise, Rng& rng);

/// Two interleaved half circles; class 0 is the upper unit half circle and
/// class 1 the lower one shifted by (1, -0.5). Class 0 gets ceil(n / 2)
/// points. Rows are shuffled.
Dataset gen_two_moons(Eigen::Index n, double noise, Rng& rng);

struct CsvOptions {
  std::string target_column;
  std::vector<std::string> categorical;  // one-hot expanded
  bool classification = false;           // integer labels in the target column
};

/// Reads a comma-separated file with a header row. Categorical columns
/// expand to one column per level (levels sorted) named "column=level".
Dataset load_csv(const std::string& path, const CsvOptions& options);
Dataset parse_csv(std::istream& in, const CsvOptions& options);

/// Writes features then the target, shortest round-trip decimal form.
void save_csv(const Dataset& data, const std::string& path);
void write_csv(const Dataset& data, std::ostream& out);

struct Standardization {
  Vector feature_mean;
  Vector feature_std;  // 0 marks a constant column, mapped to 0
  double target_mean = 0.0;
  double target_std = 1.0;
};

Standardization fit_standardization(const Dataset& train);
Dataset apply_standardization(const Dataset& data, const Standardization& stats);
Dataset invert_standardization(const Dataset& data, const Standardization& stats);

/// Fits statistics on `train` only and applies them to every split. One-hot
/// columns are left as they are; regression targets are standardized too.
std::pair<Standardization, std::vector<Dataset>> standardize_fit_apply(
    const Dataset& train, const std::vector<Dataset>& others);

struct SplitPlan {
  int n_folds = 5;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct Fold {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> val;
  std::vector<Eigen::Index> test;
};

/// Shuffles indices, cuts them into n_folds contiguous test blocks and takes
/// the validation rows from the front of each remaining portion.
std::vector<Fold> kfold(Eigen::Index n, const SplitPlan& plan);

/// Returns `id` and a same-shaped set drawn uniformly from the ID feature box
/// shifted by three ranges in every dimension.
std::pair<Dataset, Dataset> gen_ood_pair(const Dataset& id, Rng& rng);

}  // namespace gfsvi

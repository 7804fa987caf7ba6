#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gfsvi/data.hpp"
#include "gfsvi/kernels.hpp"
#include "gfsvi/network.hpp"
#include "gfsvi/objective.hpp"
#include "gfsvi/trainer.hpp"

namespace gfsvi {

using Json = nlohmann::json;

inline constexpr int kConfigVersion = 1;

enum class Method { GFSVI, MFVI, TFSVI, GP };

std::string to_string(Method method);
Method method_from_string(const std::string& name);
LossKind loss_kind(Method method);

struct DataConfig {
  std::string generator;  // "sin", "two_moons"; empty when reading a CSV
  Eigen::Index n = 100;
  Eigen::Index test_n = 1000;
  double noise = 0.1;
  std::string csv;  // absolute path once loaded
  CsvOptions csv_options;
  double val_fraction = 0.0;
  bool standardize = false;
};

struct ExperimentConfig {
  int version = kConfigVersion;
  Method method = Method::GFSVI;
  std::uint64_t seed = 0;
  DataConfig data;
  std::vector<int> hidden{30, 30};
  Activation activation = Activation::Tanh;
  PriorSpec function_prior;  // gfsvi, gp
  bool fit_prior = false;
  PriorFitConfig prior_fit;
  WeightPrior weight_prior;  // mfvi, tfsvi
  std::optional<LikelihoodKind> likelihood;  // defaults from the data
  std::optional<double> noise;               // defaults to the prior's observation noise
  bool learn_noise = true;
  int mc_samples = 5;
  std::optional<Eigen::Index> measurement_count;  // 100 for 1-D inputs, else 500
  std::optional<Vector> sampler_lower;            // inflated training box by default
  std::optional<Vector> sampler_upper;
  TrainerConfig trainer;
  RegKLConfig reg_kl;
  SplitPlan cv;
  std::string out_dir = "out";
};

/// Parses a config object. Unknown keys and missing required fields raise
/// Error(Config) naming the field. Relative CSV paths resolve against
/// `base_dir`.
ExperimentConfig parse_config(const Json& j, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

/// Every field with its value, suitable for parse_config.
Json to_json(const ExperimentConfig& config);

Json to_json(const PriorSpec& prior);
PriorSpec prior_from_json(const Json& j, const std::string& path);
Json to_json(const Architecture& arch);
Architecture architecture_from_json(const Json& j, const std::string& path);

}  // namespace gfsvi

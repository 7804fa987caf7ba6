#include "gfsvi/commands.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "gfsvi/error.hpp"
#include "gfsvi/gp.hpp"

namespace fs = std::filesystem;

namespace gfsvi {

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

namespace {

Json vector_json(const Vector& v) { return Json(std::vector<double>(v.begin(), v.end())); }

Vector json_vector(const Json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_json(m.row(i).transpose()));
  return rows;
}

Matrix json_matrix(const Json& j, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = json_vector(j[i]).transpose();
  return m;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Config, "cannot write \"" + path.string() + "\"");
  out << text;
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open \"" + path + "\"");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Config, path + ": " + e.what());
  }
}

GPPosterior gp_of(const Checkpoint& ck) { return gp_fit(ck.function_prior, ck.train_x, ck.train_y); }

Dataset standardized(const Checkpoint& ck, const Dataset& raw) {
  if (raw.dim() != ck.arch.input_dim) {
    throw Error(ErrorKind::DimensionMismatch, "data has " + std::to_string(raw.dim()) +
                                                  " features, model expects " +
                                                  std::to_string(ck.arch.input_dim));
  }
  return ck.standardization ? apply_standardization(raw, *ck.standardization) : raw;
}

}  // namespace

Json to_json(const Checkpoint& ck) {
  Json j;
  j["format"] = "gfsvi-checkpoint";
  j["version"] = 1;
  j["method"] = to_string(ck.method);
  j["architecture"] = to_json(ck.arch);
  j["likelihood"] = Json{{"kind", to_string(ck.likelihood.kind)},
                         {"raw_noise", ck.likelihood.gaussian_raw_noise},
                         {"noise", ck.likelihood.noise()},
                         {"mc_samples", ck.likelihood.mc_samples}};
  j["function_prior"] = to_json(ck.function_prior);
  j["weight_prior"] = Json{{"scale", ck.weight_prior.scale}};
  j["feature_names"] = ck.feature_names;
  j["one_hot"] = ck.one_hot;
  if (ck.standardization) {
    const auto& s = *ck.standardization;
    j["standardization"] = Json{{"feature_mean", vector_json(s.feature_mean)},
                                {"feature_std", vector_json(s.feature_std)},
                                {"target_mean", s.target_mean},
                                {"target_std", s.target_std},
                                {"one_hot_standardized", false}};
  } else {
    j["standardization"] = nullptr;
  }
  if (ck.method == Method::GP) {
    j["train_x"] = matrix_json(ck.train_x);
    j["train_y"] = vector_json(ck.train_y);
  } else {
    j["best_step"] = ck.best_step;
    j["mean"] = vector_json(ck.q.mean);
    j["raw_scale"] = vector_json(ck.q.raw_scale);
  }
  return j;
}

Checkpoint checkpoint_from_json(const Json& j) {
  try {
    if (j.value("format", "") != "gfsvi-checkpoint") {
      throw Error(ErrorKind::Config, "not a checkpoint (missing format marker)");
    }
    Checkpoint ck;
    ck.method = method_from_string(j.at("method").get<std::string>());
    ck.arch = architecture_from_json(j.at("architecture"), "architecture");
    const Json& l = j.at("likelihood");
    ck.likelihood.kind = likelihood_kind_from_string(l.at("kind").get<std::string>());
    ck.likelihood.gaussian_raw_noise = l.at("raw_noise").get<double>();
    ck.likelihood.mc_samples = l.at("mc_samples").get<int>();
    ck.function_prior = prior_from_json(j.at("function_prior"), "function_prior");
    ck.weight_prior.scale = j.at("weight_prior").at("scale").get<double>();
    ck.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    ck.one_hot = j.at("one_hot").get<std::vector<bool>>();
    if (!j.at("standardization").is_null()) {
      const Json& s = j.at("standardization");
      Standardization st;
      st.feature_mean = json_vector(s.at("feature_mean"));
      st.feature_std = json_vector(s.at("feature_std"));
      st.target_mean = s.at("target_mean").get<double>();
      st.target_std = s.at("target_std").get<double>();
      ck.standardization = st;
    }
    if (ck.method == Method::GP) {
      ck.train_x = json_matrix(j.at("train_x"), ck.arch.input_dim);
      ck.train_y = json_vector(j.at("train_y"));
    } else {
      ck.best_step = j.at("best_step").get<long>();
      ck.q.mean = json_vector(j.at("mean"));
      ck.q.raw_scale = json_vector(j.at("raw_scale"));
      if (ck.q.mean.size() != ck.arch.num_weights() || ck.q.raw_scale.size() != ck.q.mean.size()) {
        throw Error(ErrorKind::Config, "checkpoint weights do not match its architecture");
      }
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("malformed checkpoint: ") + e.what());
  }
}

Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_json(read_json(path)); }

PredictiveSummary predict(const Checkpoint& ck, const Matrix& xs, Rng& rng) {
  switch (ck.method) {
    case Method::GP: return predict_gp(gp_of(ck), xs);
    case Method::MFVI: return predict_sampled(ck.arch, ck.q, ck.likelihood, xs, rng);
    default: return predict_linearized(ck.arch, ck.q, ck.likelihood, xs, rng);
  }
}

Matrix function_samples(const Checkpoint& ck, const Matrix& xs, Rng& rng, Eigen::Index count) {
  switch (ck.method) {
    case Method::GP: {
      const GaussianMarginal m = gp_predict(gp_of(ck), xs);
      return mvn_sample(m.mean, m.cov, rng, count);
    }
    case Method::MFVI: return function_samples_sampled(ck.arch, ck.q, xs, rng, count);
    default: return function_samples_linearized(ck.arch, ck.q, xs, rng, count);
  }
}

Dataset load_dataset(const ExperimentConfig& c) {
  if (!c.data.csv.empty()) return load_csv(c.data.csv, c.data.csv_options);
  Rng rng(derive_seed(c.seed, "data"));
  return c.data.generator == "sin" ? gen_sin(c.data.n, c.data.noise, rng)
                                   : gen_two_moons(c.data.n, c.data.noise, rng);
}

Dataset load_test_dataset(const ExperimentConfig& c) {
  if (!c.data.csv.empty()) return load_csv(c.data.csv, c.data.csv_options);
  Rng rng(derive_seed(c.seed, "test-data"));
  return c.data.generator == "sin" ? gen_sin(c.data.test_n, c.data.noise, rng)
                                   : gen_two_moons(c.data.test_n, c.data.noise, rng);
}

FitOutcome fit_model(const ExperimentConfig& config, const Dataset& train_raw,
                     const Dataset& val_raw, std::uint64_t seed) {
  FitOutcome outcome;
  outcome.resolved = config;
  ExperimentConfig& rc = outcome.resolved;
  Checkpoint& ck = outcome.checkpoint;
  ck.method = config.method;

  Dataset train = train_raw;
  Dataset val = val_raw;
  if (config.data.standardize) {
    const Standardization stats = fit_standardization(train_raw);
    train = apply_standardization(train_raw, stats);
    if (val_raw.size() > 0) val = apply_standardization(val_raw, stats);
    ck.standardization = stats;
  }
  ck.feature_names = train.feature_names;
  ck.one_hot = train.one_hot;

  const bool classification = train.classification();
  const LikelihoodKind kind =
      config.likelihood.value_or(classification ? LikelihoodKind::Categorical : LikelihoodKind::Gaussian);
  if ((kind == LikelihoodKind::Categorical) != classification) {
    throw Error(ErrorKind::Config, "field \"likelihood.kind\": " + to_string(kind) +
                                       " likelihood does not match the data");
  }
  rc.likelihood = kind;
  ck.arch = Architecture{static_cast<int>(train.dim()), config.hidden,
                         classification ? train.num_classes : 1, config.activation};
  ck.arch.validate();

  const bool function_prior = config.method == Method::GFSVI || config.method == Method::GP;
  PriorSpec prior = config.function_prior;
  if (function_prior) {
    if (prior.kernel.lengthscale.size() != 1 && prior.kernel.lengthscale.size() != train.dim()) {
      throw Error(ErrorKind::Config, "field \"prior.lengthscale\": expected 1 or " +
                                         std::to_string(train.dim()) + " entries");
    }
    if (config.fit_prior) {
      if (classification) {
        throw Error(ErrorKind::Config, "field \"prior.fit\": marginal-likelihood fitting needs regression targets");
      }
      Rng fit_rng(derive_seed(seed, "prior-fit"));
      prior = fit_prior_minibatch(prior, train.features, train.targets, config.prior_fit, fit_rng);
    }
  }
  ck.function_prior = prior;
  ck.weight_prior = config.weight_prior;
  ck.likelihood.kind = kind;
  ck.likelihood.mc_samples = config.mc_samples;
  const double noise = config.noise.value_or(function_prior ? prior.observation_noise : 0.1);
  ck.likelihood.gaussian_raw_noise = inverse_softplus(noise);
  if (kind == LikelihoodKind::Gaussian) rc.noise = noise;

  if (config.method == Method::GP) {
    if (classification) throw Error(ErrorKind::Config, "field \"method\": gp supports regression only");
    ck.train_x = train.features;
    ck.train_y = train.targets;
    gp_of(ck);  // fail early on infeasible sizes
    return outcome;
  }

  MeasurementSampler sampler;
  sampler.count = config.measurement_count.value_or(train.dim() == 1 ? 100 : 500);
  if (config.sampler_lower) {
    if (config.sampler_lower->size() != train.dim()) {
      throw Error(ErrorKind::Config, "field \"sampler.lower\": expected " +
                                         std::to_string(train.dim()) + " entries");
    }
    sampler.lower = *config.sampler_lower;
    sampler.upper = *config.sampler_upper;
  } else {
    sampler = MeasurementSampler::inflated_box(train.features, sampler.count);
  }
  rc.measurement_count = sampler.count;
  rc.sampler_lower = sampler.lower;
  rc.sampler_upper = sampler.upper;

  Rng init_rng(derive_seed(seed, "init"));
  Model model{ck.arch, VariationalPosterior::initialize(ck.arch, init_rng), prior,
              config.weight_prior, ck.likelihood};
  TrainerConfig tc = config.trainer;
  tc.seed = derive_seed(seed, "trainer");
  tc.learn_noise = config.learn_noise;
  const TrainResult result =
      gfsvi::train(model, train.batch(), val.batch(), tc, sampler, config.reg_kl, loss_kind(config.method));
  ck.q = result.model.q;
  ck.likelihood = result.model.likelihood;
  ck.best_step = result.best_step;
  outcome.trace = result.trace;
  return outcome;
}

Json evaluate(const Checkpoint& ck, const Dataset& test_raw, const std::string& protocol,
              std::uint64_t seed, const std::optional<GaussianMarginal>& reference,
              const std::optional<Matrix>& grid) {
  const Dataset test = standardized(ck, test_raw);
  Rng rng(derive_seed(seed, "eval"));
  const bool classification = ck.likelihood.kind == LikelihoodKind::Categorical;
  Json m;
  if (protocol == "regression") {
    if (classification) throw Error(ErrorKind::Config, "regression protocol needs a regression model");
    const PredictiveSummary s = predict(ck, test.features, rng);
    const double sy = ck.method == Method::GP ? ck.function_prior.observation_noise : ck.likelihood.noise();
    m["expected_ll"] = test_expected_ll(s, test.targets, sy);
    m["mse"] = mse(s, test.targets);
  } else if (protocol == "classification") {
    if (!classification) throw Error(ErrorKind::Config, "classification protocol needs a classifier");
    const PredictiveSummary s = predict(ck, test.features, rng);
    m["accuracy"] = accuracy(s.class_probs, test.labels);
    m["ece"] = ece(s.class_probs, test.labels);
    m["expected_ll"] = test_expected_ll(s, test.labels);
    m["mean_entropy"] = predictive_entropy(s.class_probs).mean();
  } else if (protocol == "ood") {
    Rng ood_rng(derive_seed(seed, "ood"));
    const auto [id, ood] = gen_ood_pair(test, ood_rng);
    const PredictiveSummary si = predict(ck, id.features, rng);
    const PredictiveSummary so = predict(ck, ood.features, rng);
    const auto uncertainty = [&](const PredictiveSummary& s) -> Vector {
      if (classification) return predictive_entropy(s.class_probs);
      return s.epistemic_std.col(0).cwiseAbs2();
    };
    const StumpResult r = ood_stump_accuracy(uncertainty(si), uncertainty(so));
    m["threshold"] = r.threshold;
    m["accuracy"] = r.accuracy;
  } else if (protocol == "w2") {
    if (!reference) throw Error(ErrorKind::Config, "w2 protocol requires a GP reference (--reference)");
    if (classification) throw Error(ErrorKind::Config, "w2 protocol needs a regression model");
    const Matrix& xs = grid ? *grid : test.features;
    if (reference->dim() != xs.rows()) throw Error(ErrorKind::ShapeMismatch, "reference and grid differ");
    m["w2"] = pointwise_w2(predict(ck, xs, rng), *reference);
  } else {
    throw Error(ErrorKind::Config, "unknown protocol '" + protocol + "'");
  }
  return m;
}

Json aggregate(const Json& per_fold) {
  Json out = Json::object();
  if (per_fold.empty()) return out;
  for (const auto& item : per_fold.front().at("metrics").items()) {
    std::vector<double> values;
    for (const auto& fold : per_fold) {
      const auto it = fold.at("metrics").find(item.key());
      if (it != fold.at("metrics").end() && it->is_number()) values.push_back(it->get<double>());
    }
    if (values.size() != per_fold.size()) continue;
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double se = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
    out[item.key()] = Json{{"mean", mean}, {"se", se}};
  }
  return out;
}

Matrix parse_grid(const std::string& spec) {
  std::vector<Vector> axes;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    double lo = 0.0;
    double hi = 0.0;
    long n = 0;
    char c1 = 0;
    char c2 = 0;
    std::stringstream ps(part);
    if (!(ps >> lo >> c1 >> hi >> c2 >> n) || c1 != ':' || c2 != ':' || !(ps >> std::ws).eof()) {
      throw Error(ErrorKind::Config, "grid axis \"" + part + "\" is not lo:hi:n");
    }
    if (n < 1) throw Error(ErrorKind::Config, "grid axis \"" + part + "\" needs n >= 1");
    axes.push_back(n == 1 ? Vector::Constant(1, lo) : Vector(Vector::LinSpaced(n, lo, hi)));
  }
  if (axes.empty() || axes.size() > 2) throw Error(ErrorKind::Config, "grid must have 1 or 2 axes");
  if (axes.size() == 1) return axes[0];
  Matrix out(axes[0].size() * axes[1].size(), 2);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < axes[0].size(); ++i) {
    for (Eigen::Index j = 0; j < axes[1].size(); ++j) out.row(r++) << axes[0][i], axes[1][j];
  }
  return out;
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
  std::ostringstream out;
  out << "step,train_loss,val_loss\n";
  for (const auto& row : trace) {
    out << row.step << ',' << format_double(row.train_loss) << ',' << format_double(row.val_loss) << '\n';
  }
  write_text(path, out.str());
}

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

ExperimentConfig load_with_overrides(const Common& common) {
  ExperimentConfig c = load_config(common.config);
  if (common.seed) c.seed = *common.seed;
  if (!common.out.empty()) c.out_dir = common.out;
  return c;
}

/// Splits rows into (train, val) with the given validation fraction.
std::pair<Dataset, Dataset> split_validation(const Dataset& data, double fraction, std::uint64_t seed) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  if (n_val == 0) return {data, data.subset({})};
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::vector<Eigen::Index> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  const std::vector<Eigen::Index> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  return {data.subset(train), data.subset(val)};
}

int cmd_train(const Common& common, std::ostream& out) {
  const ExperimentConfig c = load_with_overrides(common);
  const Dataset data = load_dataset(c);
  const auto [train, val] = split_validation(data, c.data.val_fraction, derive_seed(c.seed, "split"));
  const FitOutcome fit = fit_model(c, train, val, c.seed);
  const fs::path dir(c.out_dir);
  write_json(dir / "config.resolved.json", to_json(fit.resolved));
  write_json(dir / "checkpoint.json", to_json(fit.checkpoint));
  if (c.method != Method::GP) write_trace_csv(fit.trace, (dir / "trace.csv").string());
  out << "wrote " << dir.string() << "\n";
  return 0;
}

std::string protocol_for(const Checkpoint& ck) {
  return ck.likelihood.kind == LikelihoodKind::Categorical ? "classification" : "regression";
}

int cmd_eval(const Common& common, const std::vector<std::string>& checkpoints,
             std::string protocol, const std::string& reference_path, const std::string& grid_spec,
             std::ostream& out) {
  const ExperimentConfig c = load_with_overrides(common);
  const Dataset test_raw = load_test_dataset(c);
  std::optional<Checkpoint> reference;
  if (!reference_path.empty()) {
    const Json j = read_json(reference_path);
    if (j.contains("format")) {
      reference = checkpoint_from_json(j);
    } else {
      ExperimentConfig rc = parse_config(j, fs::path(reference_path).parent_path().string());
      const Dataset data = load_dataset(rc);
      const auto [train, val] = split_validation(data, rc.data.val_fraction, derive_seed(rc.seed, "split"));
      reference = fit_model(rc, train, val, rc.seed).checkpoint;
    }
    if (reference->method != Method::GP) throw Error(ErrorKind::Config, "reference must be a gp model");
  }
  if (protocol == "w2" && !reference) {
    throw Error(ErrorKind::Config, "w2 protocol requires a GP reference (--reference)");
  }
  const std::optional<Matrix> grid =
      grid_spec.empty() ? std::nullopt : std::optional<Matrix>(parse_grid(grid_spec));

  Json per_fold = Json::array();
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    const Checkpoint ck = load_checkpoint(checkpoints[i]);
    const std::string proto = protocol.empty() ? protocol_for(ck) : protocol;
    std::optional<GaussianMarginal> ref;
    if (proto == "w2") {
      const bool same_units = ck.standardization.has_value() == reference->standardization.has_value();
      if (!same_units || ck.standardization) {
        throw Error(ErrorKind::Config, "w2 protocol needs unstandardized model and reference");
      }
      ref = gp_predict(gp_of(*reference), grid ? *grid : standardized(ck, test_raw).features);
    }
    per_fold.push_back(Json{{"fold", i},
                            {"checkpoint", checkpoints[i]},
                            {"method", to_string(ck.method)},
                            {"metrics", evaluate(ck, test_raw, proto, c.seed, ref, grid)}});
    if (protocol.empty()) protocol = proto;
  }
  const Json report{{"protocol", protocol}, {"per_fold", per_fold}, {"aggregate", aggregate(per_fold)}};
  const fs::path dir(c.out_dir);
  write_json(dir / "report.json", report);
  out << report.dump(2) << "\n";
  return 0;
}

std::string report_csv(const Json& per_fold, const Json& agg) {
  std::vector<std::string> keys;
  for (const auto& item : agg.items()) keys.push_back(item.key());
  std::ostringstream out;
  out << "fold";
  for (const auto& k : keys) out << ',' << k;
  out << '\n';
  for (const auto& fold : per_fold) {
    out << fold.at("fold").get<int>();
    for (const auto& k : keys) out << ',' << format_double(fold.at("metrics").at(k).get<double>());
    out << '\n';
  }
  for (const char* stat : {"mean", "se"}) {
    out << stat;
    for (const auto& k : keys) out << ',' << format_double(agg.at(k).at(stat).get<double>());
    out << '\n';
  }
  return out.str();
}

int cmd_cv(const Common& common, std::optional<int> n_folds, std::ostream& out) {
  ExperimentConfig c = load_with_overrides(common);
  if (n_folds) {
    if (*n_folds < 2) throw Error(ErrorKind::Config, "field \"cv.n_folds\": must be >= 2");
    c.cv.n_folds = *n_folds;
  }
  const Dataset data = load_dataset(c);
  SplitPlan plan = c.cv;
  plan.seed = derive_seed(c.seed, "cv");
  const std::vector<Fold> folds = kfold(data.size(), plan);
  const fs::path dir(c.out_dir);

  struct FoldResult {
    Json entry;
    std::exception_ptr error;
  };
  std::vector<FoldResult> results(folds.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t f = next++; f < folds.size(); f = next++) {
      try {
        const Dataset train = data.subset(folds[f].train);
        const Dataset val = data.subset(folds[f].val);
        const Dataset test = data.subset(folds[f].test);
        const FitOutcome fit = fit_model(c, train, val, derive_seed(c.seed, "fold", f));
        const fs::path fold_dir = dir / "folds" / ("fold_" + std::to_string(f));
        write_json(fold_dir / "checkpoint.json", to_json(fit.checkpoint));
        if (c.method != Method::GP) write_trace_csv(fit.trace, (fold_dir / "trace.csv").string());
        results[f].entry = Json{{"fold", f},
                                {"n_train", train.size()},
                                {"n_val", val.size()},
                                {"n_test", test.size()},
                                {"best_step", fit.checkpoint.best_step},
                                {"metrics", evaluate(fit.checkpoint, test, protocol_for(fit.checkpoint),
                                                     derive_seed(c.seed, "fold-eval", f))}};
      } catch (...) {
        results[f].error = std::current_exception();
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(common.jobs, static_cast<int>(folds.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t f = 0; f < results.size(); ++f) {
    if (!results[f].error) continue;
    try {
      std::rethrow_exception(results[f].error);
    } catch (const NonFiniteLossError& e) {
      throw NonFiniteLossError(e.step(), "fold " + std::to_string(f) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.kind(), "fold " + std::to_string(f) + ": " + e.what());
    }
  }
  Json per_fold = Json::array();
  for (auto& r : results) per_fold.push_back(r.entry);
  const Json agg = aggregate(per_fold);
  ExperimentConfig echo = c;
  const Json report{{"protocol", data.classification() ? "classification" : "regression"},
                    {"method", to_string(c.method)},
                    {"n_folds", c.cv.n_folds},
                    {"n_rows", data.size()},
                    {"per_fold", per_fold},
                    {"aggregate", agg}};
  write_json(dir / "config.resolved.json", to_json(echo));
  write_json(dir / "report.json", report);
  write_text(dir / "report.csv", report_csv(per_fold, agg));
  out << "wrote " << dir.string() << "\n";
  return 0;
}

int cmd_posterior_grid(const std::string& checkpoint_path, const std::string& grid_spec,
                       int samples, std::uint64_t seed, const std::string& out_dir,
                       const std::string& name, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const Matrix grid = parse_grid(grid_spec);
  if (grid.cols() != ck.arch.input_dim) {
    throw Error(ErrorKind::DimensionMismatch, "grid has " + std::to_string(grid.cols()) +
                                                  " dimensions, model expects " +
                                                  std::to_string(ck.arch.input_dim));
  }
  if (samples < 0) throw Error(ErrorKind::Config, "samples must be >= 0");
  Matrix xs = grid;
  double y_mean = 0.0;
  double y_std = 1.0;
  if (ck.standardization) {
    const auto& s = *ck.standardization;
    for (Eigen::Index j = 0; j < xs.cols(); ++j) {
      xs.col(j) = s.feature_std[j] > 0.0 ? Vector((grid.col(j).array() - s.feature_mean[j]) / s.feature_std[j])
                                         : Vector::Zero(xs.rows());
    }
    y_mean = s.target_mean;
    y_std = s.target_std;
  }
  Rng rng(derive_seed(seed, "posterior-grid"));
  Vector mean;
  Vector stddev;
  Matrix draws(xs.rows(), samples);
  if (ck.likelihood.kind == LikelihoodKind::Gaussian) {
    const PredictiveSummary s = predict(ck, xs, rng);
    mean = s.mean.col(0).array() * y_std + y_mean;
    stddev = s.epistemic_std.col(0) * y_std;
    if (samples > 0) draws = function_samples(ck, xs, rng, samples).array() * y_std + y_mean;
  } else {
    // probability of the last class
    const PredictiveSummary s = predict(ck, xs, rng);
    const Eigen::Index c = ck.arch.output_dim - 1;
    Matrix probs(xs.rows(), static_cast<Eigen::Index>(s.logit_draws.size()));
    for (std::size_t k = 0; k < s.logit_draws.size(); ++k) {
      const Matrix& l = s.logit_draws[k];
      for (Eigen::Index i = 0; i < l.rows(); ++i) {
        const double top = l.row(i).maxCoeff();
        probs(i, static_cast<Eigen::Index>(k)) =
            std::exp(l(i, c) - top) / (l.row(i).array() - top).exp().sum();
      }
    }
    mean = s.class_probs.col(c);
    stddev = ((probs.colwise() - mean).cwiseAbs2().rowwise().mean()).cwiseSqrt();
    for (int k = 0; k < samples; ++k) draws.col(k) = probs.col(k % probs.cols());
  }
  std::ostringstream csv;
  for (Eigen::Index j = 0; j < grid.cols(); ++j) csv << (grid.cols() == 1 ? "x" : "x" + std::to_string(j + 1)) << ',';
  csv << "mean,std";
  for (int k = 0; k < samples; ++k) csv << ",sample_" << k + 1;
  csv << '\n';
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    for (Eigen::Index j = 0; j < grid.cols(); ++j) csv << format_double(grid(i, j)) << ',';
    csv << format_double(mean[i]) << ',' << format_double(stddev[i]);
    for (int k = 0; k < samples; ++k) csv << ',' << format_double(draws(i, k));
    csv << '\n';
  }
  const fs::path path = fs::path(out_dir) / "grids" / (name + ".csv");
  write_text(path, csv.str());
  out << "wrote " << path.string() << "\n";
  return 0;
}

int cmd_fit_prior(const Common& common, std::ostream& out) {
  const ExperimentConfig c = load_with_overrides(common);
  if (c.method != Method::GFSVI && c.method != Method::GP) {
    throw Error(ErrorKind::Config, "field \"method\": fit-prior needs a gfsvi or gp config");
  }
  Dataset data = load_dataset(c);
  if (data.classification()) throw Error(ErrorKind::Config, "fit-prior needs regression data");
  if (c.data.standardize) data = apply_standardization(data, fit_standardization(data));
  Rng rng(derive_seed(c.seed, "prior-fit"));
  const PriorSpec fitted = fit_prior_minibatch(c.function_prior, data.features, data.targets, c.prior_fit, rng);
  const Json report{{"initial", to_json(c.function_prior)},
                    {"fitted", to_json(fitted)},
                    {"log_marginal_initial", gp_log_marginal(c.function_prior, data.features, data.targets)},
                    {"log_marginal_fitted", gp_log_marginal(fitted, data.features, data.targets)}};
  write_json(fs::path(c.out_dir) / "prior.json", report);
  out << report.dump(2) << "\n";
  return 0;
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    double v = 0.0;
    std::stringstream ps(part);
    if (!(ps >> v) || !(ps >> std::ws).eof()) {
      throw Error(ErrorKind::Config, std::string(what) + ": cannot parse \"" + part + "\"");
    }
    values.push_back(v);
  }
  if (values.empty()) throw Error(ErrorKind::Config, std::string(what) + ": empty list");
  return values;
}

int cmd_probe_kl(const Common& common, int rank, const std::string& ms_text,
                 const std::string& gammas_text, double naive_jitter, std::ostream& out) {
  const ExperimentConfig c = load_with_overrides(common);
  if (c.method != Method::GFSVI && c.method != Method::GP) {
    throw Error(ErrorKind::Config, "field \"prior\": probe-kl needs a GP prior");
  }
  std::vector<Eigen::Index> ms;
  for (double v : parse_list(ms_text, "--ms")) {
    if (v < 1 || v != std::floor(v)) throw Error(ErrorKind::Config, "--ms: counts must be positive integers");
    ms.push_back(static_cast<Eigen::Index>(v));
  }
  const std::vector<double> gammas = parse_list(gammas_text, "--gammas");
  for (double g : gammas) {
    if (g < 0.0) throw Error(ErrorKind::Config, "--gammas: values must be >= 0");
  }
  const Eigen::Index dim = c.sampler_lower ? c.sampler_lower->size() : c.function_prior.kernel.lengthscale.size();
  const Vector lower = c.sampler_lower.value_or(Vector::Constant(dim, -1.0));
  const Vector upper = c.sampler_upper.value_or(Vector::Constant(dim, 1.0));
  Rng family_rng(derive_seed(c.seed, "probe-posterior"));
  const MarginalFamily posterior = degenerate_relu_family(dim, rank, family_rng);

  std::ostringstream csv;
  csv << "M,gamma,estimate\n";
  for (double g : gammas) {
    Rng point_rng(derive_seed(c.seed, "probe-points"));
    const auto rows = kl_blowup_probe(posterior, c.function_prior, ms, naive_jitter,
                                      g > 0.0 ? g : 1.0, lower, upper, point_rng);
    for (const auto& row : rows) {
      csv << row.m << ',' << format_double(g) << ',' << format_double(g > 0.0 ? row.reg_kl : row.naive_kl) << '\n';
    }
  }
  const fs::path path = fs::path(c.out_dir) / "probe_kl.csv";
  write_text(path, csv.str());
  out << csv.str();
  return 0;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotPositiveDefinite:
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::NegativeVariance:
    case ErrorKind::NotSymmetric:
      return 3;
    default:
      return 2;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Function-space variational inference for Bayesian neural networks", "gfsvi"};
  app.require_subcommand(1);
  Common common;
  const auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", common.config, "experiment config (JSON)");
    if (config_required) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--out", common.out, "output directory (overrides out_dir)");
    sub->add_option("--seed", common.seed, "master seed (overrides the config)");
  };

  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint and trace");
  add_common(train_cmd, true);

  std::vector<std::string> checkpoints;
  std::string protocol;
  std::string reference;
  std::string grid;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate checkpoints on held-out data");
  add_common(eval_cmd, true);
  eval_cmd->add_option("--checkpoint", checkpoints, "checkpoint.json (repeatable)")->required();
  eval_cmd->add_option("--protocol", protocol, "regression, classification, ood or w2")
      ->check(CLI::IsMember({"regression", "classification", "ood", "w2"}));
  eval_cmd->add_option("--reference", reference, "GP config or GP checkpoint for w2");
  eval_cmd->add_option("--grid", grid, "evaluation grid lo:hi:n[,lo:hi:n] for w2");

  std::optional<int> n_folds;
  auto* cv_cmd = app.add_subcommand("cv", "k-fold cross-validation");
  add_common(cv_cmd, true);
  cv_cmd->add_option("--folds", n_folds, "number of folds (overrides cv.n_folds)");
  cv_cmd->add_option("--jobs", common.jobs, "folds trained in parallel")->check(CLI::PositiveNumber);

  std::string checkpoint;
  int samples = 0;
  std::uint64_t grid_seed = 0;
  std::string name = "posterior";
  std::string grid_out = ".";
  auto* grid_cmd = app.add_subcommand("posterior-grid", "posterior mean, std and draws on a grid");
  grid_cmd->add_option("--checkpoint", checkpoint, "checkpoint.json")->required()->check(CLI::ExistingFile);
  grid_cmd->add_option("--grid", grid, "lo:hi:n[,lo:hi:n]")->required();
  grid_cmd->add_option("--samples", samples, "function draws per point");
  grid_cmd->add_option("--seed", grid_seed, "sampling seed");
  grid_cmd->add_option("--out", grid_out, "output directory");
  grid_cmd->add_option("--name", name, "file name under grids/");

  auto* fit_cmd = app.add_subcommand("fit-prior", "fit GP prior hyperparameters");
  add_common(fit_cmd, true);

  int rank = 5;
  std::string ms = "50,100,200,400";
  std::string gammas = "0,1e-4";
  double naive_jitter = 1e-10;
  auto* probe_cmd = app.add_subcommand("probe-kl", "KL estimates for a degenerate posterior");
  add_common(probe_cmd, true);
  probe_cmd->add_option("--rank", rank, "rank of the degenerate posterior")->check(CLI::PositiveNumber);
  probe_cmd->add_option("--ms", ms, "comma-separated measurement counts");
  probe_cmd->add_option("--gammas", gammas, "comma-separated gammas; 0 is the unregularized estimate");
  probe_cmd->add_option("--naive-jitter", naive_jitter, "fixed jitter of the unregularized estimate");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return cmd_train(common, out);
    if (*eval_cmd) return cmd_eval(common, checkpoints, protocol, reference, grid, out);
    if (*cv_cmd) return cmd_cv(common, n_folds, out);
    if (*grid_cmd) return cmd_posterior_grid(checkpoint, grid, samples, grid_seed, grid_out, name, out);
    if (*fit_cmd) return cmd_fit_prior(common, out);
    if (*probe_cmd) return cmd_probe_kl(common, rank, ms, gammas, naive_jitter, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace gfsvi

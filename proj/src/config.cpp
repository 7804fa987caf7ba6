#include "gfsvi/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "gfsvi/error.hpp"

namespace gfsvi {

std::string to_string(Method method) {
  switch (method) {
    case Method::GFSVI: return "gfsvi";
    case Method::MFVI: return "mfvi";
    case Method::TFSVI: return "tfsvi";
    case Method::GP: return "gp";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  if (name == "gfsvi") return Method::GFSVI;
  if (name == "mfvi") return Method::MFVI;
  if (name == "tfsvi") return Method::TFSVI;
  if (name == "gp") return Method::GP;
  throw Error(ErrorKind::Config, "field \"method\": unknown method '" + name + "'");
}

LossKind loss_kind(Method method) {
  switch (method) {
    case Method::GFSVI: return LossKind::GFSVI;
    case Method::MFVI: return LossKind::MFVI;
    case Method::TFSVI: return LossKind::TFSVI;
    case Method::GP: break;
  }
  throw Error(ErrorKind::Config, "field \"method\": gp has no variational objective");
}

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw Error(ErrorKind::Config, "field \"" + field + "\": " + what);
}

/// Reads fields of one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  const Json& require(const std::string& key) {
    const Json* v = find(key);
    if (!v) fail(name(key), "missing required field");
    return *v;
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    const Json* v = find(key);
    return v ? convert<T>(*v, name(key)) : fallback;
  }

  template <typename T>
  std::optional<T> optional(const std::string& key) {
    const Json* v = find(key);
    if (!v) return std::nullopt;
    return convert<T>(*v, name(key));
  }

  template <typename T>
  T required(const std::string& key) {
    return convert<T>(require(key), name(key));
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) fail(name(item.key()), "unknown field");
    }
  }

  template <typename T>
  static T convert(const Json& v, const std::string& field) {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) fail(field, "expected a number");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer()) fail(field, "expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned()) fail(field, "expected a non-negative integer");
        }
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) fail(field, "expected true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) fail(field, "expected a string");
      }
      return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(field, e.what());
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Vector to_vector(const Json& v, const std::string& field) {
  if (v.is_number()) return Vector::Constant(1, v.get<double>());
  if (!v.is_array() || v.empty()) fail(field, "expected a number or a non-empty array of numbers");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) fail(field, "expected numbers");
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

Json vector_json(const Vector& v) { return Json(std::vector<double>(v.begin(), v.end())); }

template <typename Fn>
auto as_config_error(const std::string& field, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    fail(field, e.what());
  }
}

}  // namespace

Json to_json(const PriorSpec& prior) {
  Json j;
  j["mean"] = prior.mean;
  j["kernel"] = to_string(prior.kernel.family);
  j["amplitude"] = prior.kernel.amplitude;
  j["lengthscale"] = vector_json(prior.kernel.lengthscale);
  j["alpha"] = prior.kernel.alpha;
  j["period"] = prior.kernel.period;
  j["observation_noise"] = prior.observation_noise;
  return j;
}

namespace {

PriorSpec read_prior(Fields& f) {
  PriorSpec p;
  p.mean = f.get("mean", 0.0);
  const std::string kernel = f.required<std::string>("kernel");
  p.kernel.family = as_config_error(f.name("kernel"), [&] { return kernel_family_from_string(kernel); });
  p.kernel.amplitude = f.get("amplitude", 1.0);
  if (const Json* ls = f.find("lengthscale")) p.kernel.lengthscale = to_vector(*ls, f.name("lengthscale"));
  p.kernel.alpha = f.get("alpha", 1.0);
  p.kernel.period = f.get("period", 1.0);
  p.observation_noise = f.get("observation_noise", 0.1);
  return p;
}

}  // namespace

PriorSpec prior_from_json(const Json& j, const std::string& path) {
  Fields f(j, path);
  PriorSpec p = read_prior(f);
  f.finish();
  return p;
}

Json to_json(const Architecture& arch) {
  return Json{{"input_dim", arch.input_dim},
              {"hidden", arch.hidden},
              {"output_dim", arch.output_dim},
              {"activation", to_string(arch.activation)}};
}

Architecture architecture_from_json(const Json& j, const std::string& path) {
  Fields f(j, path);
  Architecture a;
  a.input_dim = f.required<int>("input_dim");
  a.hidden = f.required<std::vector<int>>("hidden");
  a.output_dim = f.required<int>("output_dim");
  const auto act = f.required<std::string>("activation");
  a.activation = as_config_error(f.name("activation"), [&] { return activation_from_string(act); });
  f.finish();
  as_config_error(path, [&] { a.validate(); return 0; });
  return a;
}

ExperimentConfig parse_config(const Json& j, const std::string& base_dir) {
  ExperimentConfig c;
  Fields root(j, "");
  c.version = root.required<int>("version");
  if (c.version != kConfigVersion) {
    fail("version", "unsupported version " + std::to_string(c.version));
  }
  c.method = method_from_string(root.required<std::string>("method"));
  c.seed = root.get<std::uint64_t>("seed", 0);
  c.out_dir = root.get<std::string>("out_dir", "out");

  {
    Fields d(root.require("data"), "data");
    c.data.generator = d.get<std::string>("generator", "");
    c.data.csv = d.get<std::string>("csv", "");
    if (c.data.generator.empty() == c.data.csv.empty()) {
      fail("data", "set exactly one of \"generator\" and \"csv\"");
    }
    if (!c.data.generator.empty()) {
      if (c.data.generator != "sin" && c.data.generator != "two_moons") {
        fail("data.generator", "unknown generator '" + c.data.generator + "'");
      }
      c.data.n = d.get<Eigen::Index>("n", 100);
      c.data.test_n = d.get<Eigen::Index>("test_n", 1000);
      c.data.noise = d.get("noise", 0.1);
      c.data.val_fraction = d.get("val_fraction", 0.0);
      c.data.standardize = d.get("standardize", false);
      if (c.data.n < 2) fail("data.n", "must be >= 2");
      if (c.data.test_n < 1) fail("data.test_n", "must be >= 1");
      if (!(c.data.noise >= 0.0)) fail("data.noise", "must be >= 0");
    } else {
      std::filesystem::path p(c.data.csv);
      if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
      if (!std::filesystem::exists(p)) fail("data.csv", "file not found: " + p.string());
      c.data.csv = std::filesystem::weakly_canonical(p).string();
      c.data.csv_options.target_column = d.required<std::string>("target");
      c.data.csv_options.categorical = d.get<std::vector<std::string>>("categorical", {});
      c.data.csv_options.classification = d.get("classification", false);
      c.data.val_fraction = d.get("val_fraction", 0.1);
      c.data.standardize = d.get("standardize", true);
    }
    if (!(c.data.val_fraction >= 0.0 && c.data.val_fraction < 1.0)) {
      fail("data.val_fraction", "must be in [0, 1)");
    }
    d.finish();
  }

  if (const Json* a = root.find("architecture")) {
    Fields f(*a, "architecture");
    c.hidden = f.get<std::vector<int>>("hidden", c.hidden);
    const auto act = f.get<std::string>("activation", "tanh");
    c.activation = as_config_error("architecture.activation", [&] { return activation_from_string(act); });
    for (int h : c.hidden) {
      if (h < 1) fail("architecture.hidden", "layer widths must be >= 1");
    }
    f.finish();
  }

  {
    Fields p(root.require("prior"), "prior");
    if (c.method == Method::GFSVI || c.method == Method::GP) {
      c.function_prior = read_prior(p);
      if (const Json* fit = p.find("fit")) {
        Fields ff(*fit, "prior.fit");
        c.fit_prior = ff.get("enabled", true);
        c.prior_fit.batch_size = ff.get<Eigen::Index>("batch_size", c.prior_fit.batch_size);
        c.prior_fit.steps = ff.get("steps", c.prior_fit.steps);
        c.prior_fit.learning_rate = ff.get("learning_rate", c.prior_fit.learning_rate);
        ff.finish();
      }
      as_config_error("prior", [&] { c.function_prior.validate(c.function_prior.kernel.lengthscale.size()); return 0; });
    } else {
      c.weight_prior.scale = p.required<double>("scale");
      if (!(c.weight_prior.scale > 0.0)) fail("prior.scale", "must be > 0");
    }
    p.finish();
  }

  if (const Json* l = root.find("likelihood")) {
    Fields f(*l, "likelihood");
    if (auto kind = f.optional<std::string>("kind")) {
      c.likelihood = as_config_error("likelihood.kind", [&] { return likelihood_kind_from_string(*kind); });
    }
    c.noise = f.optional<double>("noise");
    if (c.noise && !(*c.noise > 0.0)) fail("likelihood.noise", "must be > 0");
    c.learn_noise = f.get("learn_noise", true);
    c.mc_samples = f.get("mc_samples", 5);
    if (c.mc_samples < 1) fail("likelihood.mc_samples", "must be >= 1");
    f.finish();
  }

  if (const Json* s = root.find("sampler")) {
    Fields f(*s, "sampler");
    c.measurement_count = f.optional<Eigen::Index>("count");
    if (const Json* lo = f.find("lower")) c.sampler_lower = to_vector(*lo, "sampler.lower");
    if (const Json* hi = f.find("upper")) c.sampler_upper = to_vector(*hi, "sampler.upper");
    if (c.sampler_lower.has_value() != c.sampler_upper.has_value()) {
      fail("sampler", "set both \"lower\" and \"upper\" or neither");
    }
    if (c.measurement_count && *c.measurement_count < 1) fail("sampler.count", "must be >= 1");
    f.finish();
  }

  if (const Json* t = root.find("trainer")) {
    Fields f(*t, "trainer");
    auto& tc = c.trainer;
    tc.batch_size = f.get<Eigen::Index>("batch_size", tc.batch_size);
    tc.steps = f.get("steps", tc.steps);
    tc.learning_rate = f.get("learning_rate", tc.learning_rate);
    tc.val_every = f.get("val_every", tc.val_every);
    tc.patience = f.get("patience", tc.patience);
    tc.mfvi_samples = f.get("mfvi_samples", tc.mfvi_samples);
    f.finish();
    as_config_error("trainer", [&] { tc.validate(); return 0; });
  }

  if (const Json* r = root.find("reg_kl")) {
    Fields f(*r, "reg_kl");
    c.reg_kl.gamma = f.get("gamma", c.reg_kl.gamma);
    c.reg_kl.base_jitter = f.get("base_jitter", c.reg_kl.base_jitter);
    c.reg_kl.differentiate_jacobian = f.get("differentiate_jacobian", c.reg_kl.differentiate_jacobian);
    if (!(c.reg_kl.gamma > 0.0)) fail("reg_kl.gamma", "must be > 0");
    f.finish();
  }

  if (const Json* v = root.find("cv")) {
    Fields f(*v, "cv");
    c.cv.n_folds = f.get("n_folds", c.cv.n_folds);
    c.cv.val_fraction = f.get("val_fraction", c.cv.val_fraction);
    if (c.cv.n_folds < 2) fail("cv.n_folds", "must be >= 2");
    f.finish();
  }
  root.finish();
  c.trainer.learn_noise = c.learn_noise;
  c.trainer.seed = c.seed;
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open config file \"" + path + "\"");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Config, path + ": " + e.what());
  }
  const auto dir = std::filesystem::path(path).parent_path();
  return parse_config(j, dir.empty() ? "." : dir.string());
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["version"] = c.version;
  j["method"] = to_string(c.method);
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  Json d;
  if (!c.data.generator.empty()) {
    d["generator"] = c.data.generator;
    d["n"] = c.data.n;
    d["test_n"] = c.data.test_n;
    d["noise"] = c.data.noise;
  } else {
    d["csv"] = c.data.csv;
    d["target"] = c.data.csv_options.target_column;
    d["categorical"] = c.data.csv_options.categorical;
    d["classification"] = c.data.csv_options.classification;
  }
  d["val_fraction"] = c.data.val_fraction;
  d["standardize"] = c.data.standardize;
  j["data"] = d;
  j["architecture"] = Json{{"hidden", c.hidden}, {"activation", to_string(c.activation)}};
  if (c.method == Method::GFSVI || c.method == Method::GP) {
    Json p = to_json(c.function_prior);
    p["fit"] = Json{{"enabled", c.fit_prior},
                    {"batch_size", c.prior_fit.batch_size},
                    {"steps", c.prior_fit.steps},
                    {"learning_rate", c.prior_fit.learning_rate}};
    j["prior"] = p;
  } else {
    j["prior"] = Json{{"scale", c.weight_prior.scale}};
  }
  Json l{{"learn_noise", c.learn_noise}, {"mc_samples", c.mc_samples}};
  if (c.likelihood) l["kind"] = to_string(*c.likelihood);
  if (c.noise) l["noise"] = *c.noise;
  j["likelihood"] = l;
  Json s = Json::object();
  if (c.measurement_count) s["count"] = *c.measurement_count;
  if (c.sampler_lower) {
    s["lower"] = vector_json(*c.sampler_lower);
    s["upper"] = vector_json(*c.sampler_upper);
  }
  j["sampler"] = s;
  j["trainer"] = Json{{"batch_size", c.trainer.batch_size},
                      {"steps", c.trainer.steps},
                      {"learning_rate", c.trainer.learning_rate},
                      {"val_every", c.trainer.val_every},
                      {"patience", c.trainer.patience},
                      {"mfvi_samples", c.trainer.mfvi_samples}};
  j["reg_kl"] = Json{{"gamma", c.reg_kl.gamma},
                     {"base_jitter", c.reg_kl.base_jitter},
                     {"differentiate_jacobian", c.reg_kl.differentiate_jacobian}};
  j["cv"] = Json{{"n_folds", c.cv.n_folds}, {"val_fraction", c.cv.val_fraction}};
  return j;
}

}  // namespace gfsvi

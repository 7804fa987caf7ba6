// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gfsvi/commands.hpp"
#include "gfsvi/config.hpp"
#include "gfsvi/data.hpp"
#include "gfsvi/eval.hpp"
#include "gfsvi/gp.hpp"
#include "gfsvi/kernels.hpp"
#include "gfsvi/objective.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace gfsvi;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

const fs::path kWork = fs::temp_directory_path() / "gfsvi_acceptance";

std::string source(const std::string& rel) { return std::string(GFSVI_SOURCE_DIR) + "/" + rel; }

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

void cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  if (code != 0) throw std::runtime_error("gfsvi " + args.front() + " exited " + std::to_string(code) + ": " + err.str());
}

/// Trains `config` into kWork/name on first use and returns the checkpoint path.
std::string trained(const std::string& config, const std::string& name) {
  const fs::path dir = kWork / name;
  if (!fs::exists(dir / "checkpoint.json")) cli({"train", "--config", source(config), "--out", dir.string()});
  return (dir / "checkpoint.json").string();
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Matrix sin_grid(Eigen::Index n) { return Vector::LinSpaced(n, -2.0, 2.0); }

Outcome estimator_correctness() {
  const auto start = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng() % 40);
    const Matrix c1 = testing_util::random_spd(rng, m);
    const Matrix c2 = testing_util::random_spd(rng, m);
    const Vector m1 = testing_util::random_vector(rng, m);
    const Vector m2 = testing_util::random_vector(rng, m);
    const double exact = testing_util::eigen_kl(m1, c1, m2, c2);
    const double reg = reg_kl_estimate({m1, c1}, {m2, c2}, RegKLConfig{1e-8});
    worst = std::max(worst, std::abs(reg - exact) / exact);
  }
  const double elapsed = seconds_since(start);
  return {worst <= 1e-3 && elapsed < 10.0,
          "max relative error " + fmt(worst) + " over 50 pairs, " + fmt(elapsed) + " s"};
}

Outcome gamma_convergence() {
  Rng rng(102);
  const Matrix xs = standard_normal(rng, 20, 1);
  KernelSpec a;
  a.lengthscale = Vector::Constant(1, 0.7);
  KernelSpec b;
  b.family = KernelFamily::Matern52;
  b.amplitude = 1.3;
  Matrix c1 = gram(a, xs);
  Matrix c2 = gram(b, xs);
  c1.diagonal().array() += 0.1;
  c2.diagonal().array() += 0.1;
  const Vector m1 = testing_util::random_vector(rng, 20);
  const Vector m2 = testing_util::random_vector(rng, 20);
  const double exact = testing_util::eigen_kl(m1, c1, m2, c2);
  std::vector<double> errors;
  std::string detail = "relative errors";
  for (double gamma : {1e-2, 1e-4, 1e-6, 1e-8}) {
    errors.push_back(std::abs(reg_kl_estimate({m1, c1}, {m2, c2}, RegKLConfig{gamma}) - exact) / exact);
    detail += " " + fmt(errors.back());
  }
  bool monotone = true;
  for (std::size_t i = 1; i < errors.size(); ++i) monotone = monotone && errors[i] < errors[i - 1];
  return {monotone && errors.back() <= 1e-3, detail};
}

Outcome infinite_kl() {
  const auto start = Clock::now();
  Rng rng(103);
  PriorSpec prior;
  prior.kernel.lengthscale = Vector::Constant(1, 0.2);
  const auto rows = kl_blowup_probe(degenerate_relu_family(1, 5, rng), prior, {50, 100, 200, 400}, 1e-10, 1e-4,
                                    Vector::Constant(1, -2.0), Vector::Constant(1, 2.0), rng);
  const double naive = rows.back().naive_kl / rows.front().naive_kl;
  const double reg = rows.back().reg_kl / rows.front().reg_kl;
  const double change = std::max(reg, 1.0 / reg);
  const double elapsed = seconds_since(start);
  return {naive >= 10.0 && change <= 2.0 && elapsed < 30.0,
          "naive M=400/M=50 ratio " + fmt(naive) + ", regularized ratio " + fmt(reg) + ", " + fmt(elapsed) + " s"};
}

Outcome gradient_integrity() {
  Rng rng(104);
  Architecture arch;
  arch.hidden = {8};
  VariationalPosterior q = VariationalPosterior::initialize(arch, rng);
  q.mean += 0.5 * standard_normal(rng, q.size(), 1);
  q.raw_scale.array() = -2.0 + 0.3 * standard_normal(rng, q.size(), 1).array();
  const Batch batch{standard_normal(rng, 4, 1), standard_normal(rng, 4, 1), {}};
  const Matrix meas = standard_normal(rng, 5, 1);
  const Matrix noise = standard_normal(rng, q.size(), 1);
  LikelihoodParams lik;
  lik.gaussian_raw_noise = 0.3;
  const RegKLConfig cfg{1e-3};
  const PriorSpec prior;
  const WeightPrior wp{0.8};
  const double g = testing_util::loss_gradient_error(
      [&](const VariationalPosterior& qq, const LikelihoodParams& l, bool want) {
        return gfsvi_loss(arch, qq, prior, batch, meas, l, cfg, 100.0, noise, want);
      },
      q, lik);
  const double m = testing_util::loss_gradient_error(
      [&](const VariationalPosterior& qq, const LikelihoodParams& l, bool want) {
        return mfvi_loss(arch, qq, wp, batch, l, 100.0, noise, want);
      },
      q, lik);
  const double t = testing_util::loss_gradient_error(
      [&](const VariationalPosterior& qq, const LikelihoodParams& l, bool want) {
        return tfsvi_loss(arch, qq, wp, batch, meas, l, cfg, 100.0, noise, want);
      },
      q, lik);
  return {std::max({g, m, t}) <= 1e-4,
          "max relative error gfsvi " + fmt(g) + ", mfvi " + fmt(m) + ", tfsvi " + fmt(t)};
}

Outcome posterior_fidelity() {
  const auto start = Clock::now();
  const std::string g = trained("configs/sin_gfsvi.json", "sin_gfsvi");
  const double gfsvi_seconds = seconds_since(start);
  const std::string m = trained("configs/sin_mfvi.json", "sin_mfvi");
  const std::string gp = trained("configs/sin_gp.json", "sin_gp");
  const Checkpoint reference = load_checkpoint(gp);
  Rng rng(105);
  const GaussianMarginal exact =
      gp_predict(gp_fit(reference.function_prior, reference.train_x, reference.train_y), sin_grid(100));
  const double w_g = pointwise_w2(predict(load_checkpoint(g), sin_grid(100), rng), exact);
  const double w_m = pointwise_w2(predict(load_checkpoint(m), sin_grid(100), rng), exact);
  return {w_g <= 0.5 * w_m && gfsvi_seconds <= 300.0,
          "W2 gfsvi " + fmt(w_g) + ", mfvi " + fmt(w_m) + " (ratio " + fmt(w_g / w_m) + "), gfsvi training " +
              fmt(gfsvi_seconds) + " s"};
}

Outcome prior_adaptation() {
  const Checkpoint rbf = load_checkpoint(trained("configs/sin_gfsvi.json", "sin_gfsvi"));
  const Checkpoint m12 = load_checkpoint(trained("configs/sin_matern12.json", "sin_matern12"));
  const Matrix grid = sin_grid(200);
  const double h = grid(1, 0) - grid(0, 0);
  Rng a(106);
  Rng b(106);
  const double r_rbf = roughness(function_samples(rbf, grid, a, 20), h);
  const double r_m12 = roughness(function_samples(m12, grid, b, 20), h);
  return {r_m12 >= 5.0 * r_rbf,
          "roughness matern12 " + fmt(r_m12) + ", rbf " + fmt(r_rbf) + " (ratio " + fmt(r_m12 / r_rbf) + ")"};
}

Outcome gap_uncertainty() {
  const Checkpoint ck = load_checkpoint(trained("configs/sin_gfsvi.json", "sin_gfsvi"));
  const Checkpoint gp = load_checkpoint(trained("configs/sin_gp.json", "sin_gp"));
  const Matrix grid = sin_grid(200);
  Rng rng(107);
  auto ratio = [&](const Vector& std) {
    double gap = 0.0;
    double band = 0.0;
    int ng = 0;
    int nb = 0;
    for (Eigen::Index i = 0; i < grid.rows(); ++i) {
      const double x = std::abs(grid(i, 0));
      if (x < 0.5) {
        gap += std[i];
        ++ng;
      } else if (x <= 1.0) {
        band += std[i];
        ++nb;
      }
    }
    return (gap / ng) / (band / nb);
  };
  const double r = ratio(predict(ck, grid, rng).epistemic_std.col(0));
  const double r_gp = ratio(predict(gp, grid, rng).epistemic_std.col(0));
  return {r >= 2.0 && r_gp >= 2.0, "gap/band epistemic std ratio gfsvi " + fmt(r) + ", exact gp " + fmt(r_gp)};
}

Outcome closed_form_likelihood() {
  Rng rng(108);
  int inside = 0;
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const double y = 2.0 * rng.normal();
    const double mean = 2.0 * rng.normal();
    const double var = std::exp(rng.uniform(-4.0, 1.0));
    const double sigma = std::exp(rng.uniform(-2.0, 1.0));
    const int n = 100000;
    double s = 0.0;
    double s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double f = mean + std::sqrt(var) * rng.normal();
      const double l = -0.5 * std::log(2 * M_PI * sigma * sigma) - (y - f) * (y - f) / (2 * sigma * sigma);
      s += l;
      s2 += l * l;
    }
    const double mc = s / n;
    const double se = std::sqrt((s2 / n - mc * mc) / (n - 1));
    const double closed =
        expected_ll_gaussian(Vector::Constant(1, y), Vector::Constant(1, mean), Vector::Constant(1, var), sigma);
    const double z = std::abs(closed - mc) / se;
    worst = std::max(worst, z);
    inside += z <= 3.0;
  }
  return {inside == 20, std::to_string(inside) + "/20 within 3 SE, worst " + fmt(worst) + " SE"};
}

Outcome gp_equivalence() {
  Rng rng(109);
  PriorSpec p;
  p.mean = 0.3;
  p.kernel.amplitude = 1.1;
  p.kernel.lengthscale = Vector::Constant(1, 0.8);
  p.observation_noise = 0.2;
  const Matrix x = standard_normal(rng, 5, 1);
  const Vector y = standard_normal(rng, 5, 1);
  const Matrix xt = standard_normal(rng, 3, 1);
  const GaussianMarginal got = gp_predict(gp_fit(p, x, y), xt);
  Matrix k = gram(p.kernel, x);
  k.diagonal().array() += p.observation_noise * p.observation_noise;
  const Matrix kinv = k.inverse();
  const Matrix ks = gram(p.kernel, xt, x);
  const Vector mean = (ks * kinv * (y.array() - p.mean).matrix()).array() + p.mean;
  const Matrix cov = gram(p.kernel, xt) - ks * kinv * ks.transpose();
  const double diff = std::max((got.mean - mean).cwiseAbs().maxCoeff(), (got.cov - cov).cwiseAbs().maxCoeff());

  PriorSpec noiseless = p;
  noiseless.observation_noise = 0.0;
  const GaussianMarginal at_train = gp_predict(gp_fit(noiseless, x, y), x);
  const double var = at_train.cov.diagonal().maxCoeff();
  return {diff <= 1e-8 && var <= 1e-8,
          "max deviation from dense inverse " + fmt(diff) + ", max variance at training inputs " + fmt(var)};
}

Outcome two_moons() {
  const std::string path = trained("configs/two_moons_gfsvi.json", "two_moons");
  const Checkpoint ck = load_checkpoint(path);
  const ExperimentConfig config = load_config(source("configs/two_moons_gfsvi.json"));
  const Dataset test = load_test_dataset(config);
  const Dataset train = load_dataset(config);
  Rng rng(110);
  const double acc = accuracy(predict(ck, test.features, rng).class_probs, test.labels);
  Matrix circle(16, 2);
  for (int i = 0; i < 16; ++i) {
    const double t = 2 * M_PI * i / 16.0;
    circle.row(i) << 3.0 * std::cos(t), 3.0 * std::sin(t);
  }
  const double h_far = predictive_entropy(predict(ck, circle, rng).class_probs).mean();
  const double h_train = predictive_entropy(predict(ck, train.features, rng).class_probs).mean();
  return {acc >= 0.95 && h_far > h_train, "test accuracy " + fmt(acc) + " on " + std::to_string(test.size()) +
                                              " points, mean entropy circle " + fmt(h_far) + " vs train " +
                                              fmt(h_train)};
}

Outcome ood_detection() {
  const std::string path = trained("configs/sin_gfsvi.json", "sin_gfsvi");
  const ExperimentConfig config = load_config(source("configs/sin_gfsvi.json"));
  const Json metrics = evaluate(load_checkpoint(path), load_test_dataset(config), "ood", 111);
  const double acc = metrics["accuracy"];

  Rng rng(112);
  int agree = 0;
  for (int t = 0; t < 10; ++t) {
    const Eigen::Index a = 2 + static_cast<Eigen::Index>(rng() % 6);
    const Eigen::Index b = 2 + static_cast<Eigen::Index>(rng() % 6);
    const Vector id = (3.0 * testing_util::random_vector(rng, a)).array().round() / 3.0;
    const Vector ood = (3.0 * testing_util::random_vector(rng, b)).array().round() / 3.0 + 0.5;
    agree += ood_stump_accuracy(id, ood).accuracy == testing_util::brute_force_stump(id, ood);
  }
  return {acc >= 0.9 && agree == 10,
          "ood accuracy " + fmt(acc) + ", stump matches brute force on " + std::to_string(agree) + "/10"};
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) files[fs::relative(entry.path(), root).string()] = slurp(entry.path());
  }
  return files;
}

Outcome cv_protocol() {
  const fs::path dir = kWork / "cv";
  std::vector<double> times;
  std::vector<std::map<std::string, std::string>> runs;
  for (int run = 0; run < 2; ++run) {
    fs::remove_all(dir);
    const auto start = Clock::now();
    cli({"cv", "--config", source("configs/tabular_cv.json"), "--folds", "5", "--out", dir.string()});
    times.push_back(seconds_since(start));
    runs.push_back(snapshot(dir));
  }
  const Json report = Json::parse(runs[0].at("report.json"));
  bool schema = report["per_fold"].size() == 5;
  for (const auto& [metric, stats] : report["aggregate"].items()) {
    schema = schema && stats.contains("mean") && stats.contains("se");
  }
  std::size_t identical = 0;
  for (const auto& [rel, bytes] : runs[0]) {
    const auto other = runs[1].find(rel);
    identical += other != runs[1].end() && other->second == bytes;
  }
  const bool same = !runs[0].empty() && identical == runs[0].size() && runs[0].size() == runs[1].size();
  const double slowest = std::max(times[0], times[1]);
  return {schema && same && slowest < 900.0,
          "5 folds in " + fmt(times[0]) + " s and " + fmt(times[1]) + " s, " + std::to_string(identical) + "/" +
              std::to_string(runs[0].size()) + " artifacts byte-identical on rerun, report schema " +
              (schema ? "ok" : "bad")};
}

}  // namespace

int main() {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 estimator correctness", estimator_correctness},
      {"2 gamma convergence", gamma_convergence},
      {"3 infinite KL demonstration", infinite_kl},
      {"4 gradient integrity", gradient_integrity},
      {"5 posterior fidelity", posterior_fidelity},
      {"6 prior adaptation", prior_adaptation},
      {"7 gap uncertainty", gap_uncertainty},
      {"8 closed-form vs MC likelihood", closed_form_likelihood},
      {"9 GP oracle equivalence", gp_equivalence},
      {"10 two-moons classification", two_moons},
      {"11 OOD detection", ood_detection},
      {"12 CV protocol and determinism", cv_protocol},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  AC" << name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}

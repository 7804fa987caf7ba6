#include "gfsvi/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "gfsvi/error.hpp"

namespace gfsvi {

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  Dataset out = *this;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), dim());
  if (targets.size() > 0) out.targets.resize(out.features.rows());
  out.labels.clear();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i];
    if (r < 0 || r >= size()) throw Error(ErrorKind::InvalidArgument, "row index out of range");
    const auto row = static_cast<Eigen::Index>(i);
    out.features.row(row) = features.row(r);
    if (targets.size() > 0) out.targets[row] = targets[r];
    if (!labels.empty()) out.labels.push_back(labels[static_cast<std::size_t>(r)]);
  }
  return out;
}

namespace {

Dataset with_default_names(Dataset d) {
  d.feature_names.clear();
  for (Eigen::Index j = 0; j < d.dim(); ++j) d.feature_names.push_back("x" + std::to_string(j + 1));
  d.one_hot.assign(static_cast<std::size_t>(d.dim()), false);
  return d;
}

}  // namespace

Dataset gen_sin(Eigen::Index n, double noise, Rng& rng) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "n must be >= 1");
  if (!(noise >= 0.0)) throw Error(ErrorKind::NegativeScale, "noise must be >= 0");
  Dataset d;
  d.features.resize(n, 1);
  d.targets.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = rng.uniform(0.5, 1.0);
    const double x = rng.uniform() < 0.5 ? -u : u;
    d.features(i, 0) = x;
    d.targets[i] = std::sin(2.0 * std::numbers::pi * x) + (noise > 0.0 ? noise * rng.normal() : 0.0);
  }
  return with_default_names(std::move(d));
}

Dataset gen_two_moons(Eigen::Index n, double noise, Rng& rng) {
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "n must be >= 2");
  if (!(noise >= 0.0)) throw Error(ErrorKind::NegativeScale, "noise must be >= 0");
  const Eigen::Index upper = (n + 1) / 2;
  Dataset d;
  d.features.resize(n, 2);
  d.num_classes = 2;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = rng.uniform(0.0, std::numbers::pi);
    if (i < upper) {
      d.features.row(i) << std::cos(t), std::sin(t);
      d.labels.push_back(0);
    } else {
      d.features.row(i) << 1.0 - std::cos(t), 0.5 - std::sin(t);
      d.labels.push_back(1);
    }
    if (noise > 0.0) {
      d.features(i, 0) += noise * rng.normal();
      d.features(i, 1) += noise * rng.normal();
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  d = with_default_names(std::move(d));
  d.target_name = "label";
  return d.subset(order);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  for (auto& s : cells) {
    const auto first = s.find_first_not_of(" \t");
    const auto last = s.find_last_not_of(" \t");
    s = first == std::string::npos ? std::string() : s.substr(first, last - first + 1);
  }
  return cells;
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "?" || cell == "nan" || cell == "NaN";
}

std::string where(std::size_t data_row, const std::string& column) {
  return "row " + std::to_string(data_row) + ", column \"" + column + "\"";
}

double parse_double(const std::string& cell, std::size_t data_row, const std::string& column) {
  if (is_missing(cell)) throw Error(ErrorKind::MissingValue, "missing value at " + where(data_row, column));
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw Error(ErrorKind::ParseError,
                "cannot parse \"" + cell + "\" as a number at " + where(data_row, column));
  }
  return value;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

Dataset parse_csv(std::istream& in, const CsvOptions& options) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::EmptyInput, "CSV has no header row");
  const std::vector<std::string> header = split_csv_line(line);
  const auto target_it = std::find(header.begin(), header.end(), options.target_column);
  if (target_it == header.end()) {
    throw Error(ErrorKind::Config, "target column \"" + options.target_column + "\" not in header");
  }
  const auto target_col = static_cast<std::size_t>(target_it - header.begin());
  std::set<std::string> categorical(options.categorical.begin(), options.categorical.end());
  for (const auto& name : categorical) {
    if (std::find(header.begin(), header.end(), name) == header.end()) {
      throw Error(ErrorKind::Config, "categorical column \"" + name + "\" not in header");
    }
    if (name == options.target_column) {
      throw Error(ErrorKind::Config, "target column cannot be one-hot encoded");
    }
  }

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorKind::ParseError, "row " + std::to_string(rows.size() + 1) + " has " +
                                             std::to_string(cells.size()) + " cells, header has " +
                                             std::to_string(header.size()));
    }
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw Error(ErrorKind::EmptyInput, "CSV has no data rows");

  // levels per categorical column
  std::map<std::size_t, std::vector<std::string>> levels;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!categorical.count(header[c])) continue;
    std::set<std::string> seen;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (is_missing(rows[r][c])) {
        throw Error(ErrorKind::MissingValue, "missing value at " + where(r + 1, header[c]));
      }
      seen.insert(rows[r][c]);
    }
    levels[c] = std::vector<std::string>(seen.begin(), seen.end());
  }

  Dataset d;
  d.target_name = options.target_column;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == target_col) continue;
    if (levels.count(c)) {
      for (const auto& level : levels[c]) {
        d.feature_names.push_back(header[c] + "=" + level);
        d.one_hot.push_back(true);
      }
    } else {
      d.feature_names.push_back(header[c]);
      d.one_hot.push_back(false);
    }
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  d.features = Matrix::Zero(n, static_cast<Eigen::Index>(d.feature_names.size()));
  if (!options.classification) d.targets.resize(n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    Eigen::Index col = 0;
    for (std::size_t c = 0; c < header.size(); ++c) {
      const std::string& cell = rows[r][c];
      if (c == target_col) {
        if (options.classification) {
          const double v = parse_double(cell, r + 1, header[c]);
          if (v < 0.0 || v != std::floor(v)) {
            throw Error(ErrorKind::ParseError,
                        "label must be a non-negative integer at " + where(r + 1, header[c]));
          }
          d.labels.push_back(static_cast<int>(v));
        } else {
          d.targets[i] = parse_double(cell, r + 1, header[c]);
        }
      } else if (levels.count(c)) {
        const auto& lv = levels[c];
        const auto k = std::lower_bound(lv.begin(), lv.end(), cell) - lv.begin();
        d.features(i, col + k) = 1.0;
        col += static_cast<Eigen::Index>(lv.size());
      } else {
        d.features(i, col++) = parse_double(cell, r + 1, header[c]);
      }
    }
  }
  if (options.classification) d.num_classes = *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  return d;
}

Dataset load_csv(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open CSV file \"" + path + "\"");
  return parse_csv(in, options);
}

void write_csv(const Dataset& data, std::ostream& out) {
  for (Eigen::Index j = 0; j < data.dim(); ++j) {
    out << (static_cast<std::size_t>(j) < data.feature_names.size()
                ? data.feature_names[static_cast<std::size_t>(j)]
                : "x" + std::to_string(j + 1))
        << ',';
  }
  out << data.target_name << '\n';
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) out << format_double(data.features(i, j)) << ',';
    if (data.classification()) {
      out << data.labels[static_cast<std::size_t>(i)];
    } else {
      out << format_double(data.targets[i]);
    }
    out << '\n';
  }
}

void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Config, "cannot write \"" + path + "\"");
  write_csv(data, out);
}

Standardization fit_standardization(const Dataset& train) {
  if (train.size() == 0) throw Error(ErrorKind::EmptyInput, "cannot standardize an empty split");
  Standardization s;
  const double n = static_cast<double>(train.size());
  s.feature_mean = train.features.colwise().mean().transpose();
  s.feature_std.resize(train.dim());
  for (Eigen::Index j = 0; j < train.dim(); ++j) {
    const bool one_hot = static_cast<std::size_t>(j) < train.one_hot.size() &&
                         train.one_hot[static_cast<std::size_t>(j)];
    if (one_hot) {
      s.feature_mean[j] = 0.0;
      s.feature_std[j] = 1.0;
      continue;
    }
    const double var = (train.features.col(j).array() - s.feature_mean[j]).square().sum() / n;
    s.feature_std[j] = std::sqrt(var);
  }
  if (!train.classification() && train.targets.size() > 0) {
    s.target_mean = train.targets.mean();
    const double sd = std::sqrt((train.targets.array() - s.target_mean).square().sum() / n);
    s.target_std = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

Dataset apply_standardization(const Dataset& data, const Standardization& stats) {
  if (stats.feature_mean.size() != data.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "standardization fitted on a different width");
  }
  Dataset out = data;
  for (Eigen::Index j = 0; j < data.dim(); ++j) {
    if (stats.feature_std[j] > 0.0) {
      out.features.col(j) = (data.features.col(j).array() - stats.feature_mean[j]) / stats.feature_std[j];
    } else {
      out.features.col(j).setZero();
    }
  }
  if (!data.classification() && data.targets.size() > 0) {
    out.targets = (data.targets.array() - stats.target_mean) / stats.target_std;
  }
  return out;
}

Dataset invert_standardization(const Dataset& data, const Standardization& stats) {
  if (stats.feature_mean.size() != data.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "standardization fitted on a different width");
  }
  Dataset out = data;
  for (Eigen::Index j = 0; j < data.dim(); ++j) {
    out.features.col(j) = data.features.col(j).array() * stats.feature_std[j] + stats.feature_mean[j];
  }
  if (!data.classification() && data.targets.size() > 0) {
    out.targets = data.targets.array() * stats.target_std + stats.target_mean;
  }
  return out;
}

std::pair<Standardization, std::vector<Dataset>> standardize_fit_apply(
    const Dataset& train, const std::vector<Dataset>& others) {
  Standardization stats = fit_standardization(train);
  std::vector<Dataset> out;
  out.push_back(apply_standardization(train, stats));
  for (const auto& d : others) out.push_back(apply_standardization(d, stats));
  return {stats, out};
}

std::vector<Fold> kfold(Eigen::Index n, const SplitPlan& plan) {
  if (plan.n_folds < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 folds");
  if (n < plan.n_folds) {
    throw Error(ErrorKind::TooFewRows, std::to_string(n) + " rows for " +
                                           std::to_string(plan.n_folds) + " folds");
  }
  if (!(plan.val_fraction >= 0.0 && plan.val_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "val_fraction must be in [0, 1)");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(plan.seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Fold> folds;
  const Eigen::Index base = n / plan.n_folds;
  const Eigen::Index extra = n % plan.n_folds;
  Eigen::Index start = 0;
  for (int f = 0; f < plan.n_folds; ++f) {
    const Eigen::Index len = base + (f < extra ? 1 : 0);
    Fold fold;
    std::vector<Eigen::Index> rest;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto idx = order[static_cast<std::size_t>(i)];
      if (i >= start && i < start + len) {
        fold.test.push_back(idx);
      } else {
        rest.push_back(idx);
      }
    }
    const auto n_val = static_cast<std::size_t>(
        std::llround(plan.val_fraction * static_cast<double>(rest.size())));
    fold.val.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val));
    fold.train.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_val), rest.end());
    folds.push_back(std::move(fold));
    start += len;
  }
  return folds;
}

std::pair<Dataset, Dataset> gen_ood_pair(const Dataset& id, Rng& rng) {
  if (id.size() < 1) throw Error(ErrorKind::EmptyInput, "ID set is empty");
  const Vector lo = id.features.colwise().minCoeff().transpose();
  const Vector hi = id.features.colwise().maxCoeff().transpose();
  Vector range = hi - lo;
  for (Eigen::Index j = 0; j < range.size(); ++j) range[j] = range[j] > 0.0 ? range[j] : 1.0;
  Dataset ood = id;
  for (Eigen::Index i = 0; i < id.size(); ++i)
    for (Eigen::Index j = 0; j < id.dim(); ++j)
      ood.features(i, j) = rng.uniform(lo[j] + 3.0 * range[j], hi[j] + 3.0 * range[j]);
  if (ood.targets.size() > 0) ood.targets.setZero();
  return {id, ood};
}

}  // namespace gfsvi

#include "chaoslab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "chaoslab/csv.hpp"
#include "chaoslab/error.hpp"

namespace chaoslab::dataset {

// MinMaxNormalizer

MinMaxNormalizer MinMaxNormalizer::fit(std::span<const double> rows, std::size_t features) {
  if (features == 0) throw DomainError("normalizer: zero features");
  if (rows.empty() || rows.size() % features != 0) {
    throw DomainError("normalizer: fit needs at least one complete row");
  }
  std::vector<double> mins(features, std::numeric_limits<double>::infinity());
  std::vector<double> maxs(features, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t f = i % features;
    mins[f] = std::min(mins[f], rows[i]);
    maxs[f] = std::max(maxs[f], rows[i]);
  }
  return MinMaxNormalizer(std::move(mins), std::move(maxs));
}

MinMaxNormalizer::MinMaxNormalizer(std::vector<double> mins, std::vector<double> maxs)
    : mins_(std::move(mins)), maxs_(std::move(maxs)) {
  if (mins_.size() != maxs_.size()) throw DomainError("normalizer: mins/maxs length mismatch");
  for (std::size_t i = 0; i < mins_.size(); ++i) {
    if (!std::isfinite(mins_[i]) || !std::isfinite(maxs_[i]) || maxs_[i] < mins_[i]) {
      throw DomainError("normalizer: invalid range for feature " + std::to_string(i));
    }
  }
}

void MinMaxNormalizer::require_fitted(std::size_t length) const {
  if (!fitted()) throw DomainError("normalizer: transform before fit");
  if (length % features() != 0) {
    throw DomainError("normalizer: data length " + std::to_string(length) + " is not a multiple of " +
                      std::to_string(features()) + " features");
  }
}

double MinMaxNormalizer::transform_value(double x, std::size_t f) const {
  const double range = maxs_[f] - mins_[f];
  return range == 0.0 ? 0.0 : (x - mins_[f]) / range;
}

double MinMaxNormalizer::inverse_value(double x, std::size_t f) const {
  return mins_[f] + x * (maxs_[f] - mins_[f]);
}

void MinMaxNormalizer::transform_inplace(std::span<double> rows) const {
  require_fitted(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = transform_value(rows[i], i % features());
}

void MinMaxNormalizer::inverse_transform_inplace(std::span<double> rows) const {
  require_fitted(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = inverse_value(rows[i], i % features());
}

std::vector<double> MinMaxNormalizer::transform(std::span<const double> rows) const {
  std::vector<double> out(rows.begin(), rows.end());
  transform_inplace(out);
  return out;
}

std::vector<double> MinMaxNormalizer::inverse_transform(std::span<const double> rows) const {
  std::vector<double> out(rows.begin(), rows.end());
  inverse_transform_inplace(out);
  return out;
}

nlohmann::json MinMaxNormalizer::to_json() const { return {{"mins", mins_}, {"maxs", maxs_}}; }

MinMaxNormalizer MinMaxNormalizer::from_json(const nlohmann::json& j) {
  try {
    return MinMaxNormalizer(j.at("mins").get<std::vector<double>>(), j.at("maxs").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("normalizer JSON: ") + e.what());
  }
}

// Windowed regime

std::span<const double> WindowedDataset::input(std::size_t k) const {
  return {scaled.data() + (first_pair + k) * dims, window * dims};
}

std::span<const double> WindowedDataset::target(std::size_t k) const {
  return {scaled.data() + (first_pair + k + window) * dims, dims};
}

std::span<const double> WindowedDataset::raw_target(std::size_t k) const {
  return {raw.data() + (first_pair + k + window) * dims, dims};
}

std::size_t WindowedDataset::train_pairs() const noexcept {
  return static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(total_pairs())));
}

WindowedDataset make_windows(std::span<const double> series, std::size_t dims, std::size_t window,
                             double train_fraction) {
  if (dims == 0 || series.size() % dims != 0) throw DomainError("make_windows: ragged series");
  if (window == 0) throw DomainError("make_windows: window must be positive");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw DomainError("make_windows: train fraction must be in (0, 1]");
  }
  const std::size_t rows = series.size() / dims;
  if (rows <= window) {
    throw DomainError("make_windows: series of " + std::to_string(rows) + " rows is too short for window " +
                      std::to_string(window));
  }
  WindowedDataset ds;
  ds.window = window;
  ds.dims = dims;
  ds.raw.assign(series.begin(), series.end());
  ds.train_fraction = train_fraction;
  ds.pair_count = rows - window;
  // Rows touched by training pairs: inputs 0..n_train+W-2 and targets up to n_train+W-1.
  const std::size_t fit_rows = std::max<std::size_t>(1, ds.train_pairs()) + window;
  ds.normalizer = MinMaxNormalizer::fit(std::span<const double>(ds.raw.data(), fit_rows * dims), dims);
  ds.scaled = ds.normalizer.transform(ds.raw);
  return ds;
}

WindowedDataset make_windows(const integrator::Trajectory& traj, std::size_t window, double train_fraction) {
  const auto d = static_cast<std::size_t>(traj.joints());
  std::vector<double> angles;
  angles.reserve(traj.states.size() * d);
  for (const auto& s : traj.states)
    for (int i = 0; i < traj.joints(); ++i) angles.push_back(s.theta(i));
  return make_windows(angles, d, window, train_fraction);
}

std::pair<WindowedDataset, WindowedDataset> split(const WindowedDataset& ds, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("split: fraction must be in (0, 1)");
  if (std::abs(fraction - ds.train_fraction) > 1e-12) {
    throw DomainError("split: fraction differs from the fraction the normalizer was fit on");
  }
  const std::size_t n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(ds.size())));
  WindowedDataset train = ds, test = ds;
  train.pair_count = n_train;
  test.first_pair = ds.first_pair + n_train;
  test.pair_count = ds.size() - n_train;
  return {std::move(train), std::move(test)};
}

// Time-step regime

std::vector<double> TimeStepGroup::features() const {
  const std::size_t cols = 1 + initial_deg.size();
  std::vector<double> out(rows() * cols);
  for (std::size_t r = 0; r < rows(); ++r) {
    out[r * cols] = times[r];
    std::copy(initial_deg.begin(), initial_deg.end(), out.begin() + static_cast<std::ptrdiff_t>(r * cols + 1));
  }
  return out;
}

nlohmann::json TimeStepScaling::to_json() const {
  return {{"features", features.to_json()}, {"targets", targets.to_json()}};
}

TimeStepScaling TimeStepScaling::from_json(const nlohmann::json& j) {
  try {
    return {MinMaxNormalizer::from_json(j.at("features")), MinMaxNormalizer::from_json(j.at("targets"))};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("scaling JSON: ") + e.what());
  }
}

std::size_t TimeStepDataset::rows() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.rows();
  return n;
}

double TimeStepDataset::sample_interval() const {
  for (const auto& g : groups) {
    if (g.rows() >= 2) return g.times[1] - g.times[0];
  }
  throw DomainError("time-step dataset has no group with two rows");
}

double TimeStepDataset::max_time() const {
  double t = 0.0;
  for (const auto& g : groups)
    if (!g.times.empty()) t = std::max(t, g.times.back());
  return t;
}

bool same_condition(std::span<const double> a, std::span<const double> b, double tol) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > tol) return false;
  return true;
}

const TimeStepGroup* TimeStepDataset::find(std::span<const double> initial_deg) const {
  for (const auto& g : groups)
    if (same_condition(g.initial_deg, initial_deg)) return &g;
  return nullptr;
}

TimeStepDataset make_timestep_dataset(std::span<const integrator::Trajectory> trajs, std::size_t samples) {
  if (trajs.empty()) throw DomainError("make_timestep_dataset: no trajectories");
  if (samples == 0) throw DomainError("make_timestep_dataset: samples per trajectory must be positive");
  const auto& first = trajs.front();
  for (const auto& t : trajs) {
    if (t.joints() != first.joints() || t.steps() != first.steps() || std::abs(t.dt - first.dt) > 1e-15) {
      throw DomainError("make_timestep_dataset: trajectories differ in joints, dt or duration");
    }
    if (t.initial_angles_deg.size() != static_cast<std::size_t>(t.joints())) {
      throw DomainError("make_timestep_dataset: trajectory lacks its generating initial angles");
    }
  }
  if (samples > first.steps()) {
    throw DomainError("make_timestep_dataset: " + std::to_string(samples) + " samples exceed " +
                      std::to_string(first.steps()) + " steps");
  }
  const std::size_t stride = first.steps() / samples;

  TimeStepDataset ds;
  ds.joints = first.joints();
  for (const auto& t : trajs) {
    TimeStepGroup g;
    g.initial_deg = t.initial_angles_deg;
    g.times.reserve(samples);
    g.angles.reserve(samples * static_cast<std::size_t>(ds.joints));
    for (std::size_t j = 0; j < samples; ++j) {
      const std::size_t k = j * stride;
      g.times.push_back(t.time(k) - t.t0);
      for (int i = 0; i < ds.joints; ++i) g.angles.push_back(t.states[k].theta(i));
    }
    ds.groups.push_back(std::move(g));
  }
  return ds;
}

std::vector<std::vector<double>> training_angle_grid(double theta1_deg, double varied_start, double varied_end,
                                                     double increment, int joints) {
  if (!(increment > 0.0)) throw DomainError("training_angle_grid: increment must be positive");
  if (varied_end < varied_start) throw DomainError("training_angle_grid: empty range");
  if (joints != 2 && joints != 3) throw DomainError("training_angle_grid: joints must be 2 or 3");
  const auto count = static_cast<std::size_t>(std::floor((varied_end - varied_start) / increment + 1e-9)) + 1;
  std::vector<std::vector<double>> grid;
  grid.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double v = std::round((varied_start + static_cast<double>(k) * increment) * 1e9) / 1e9;
    if (joints == 2) {
      grid.push_back({theta1_deg, v});
    } else {
      grid.push_back({theta1_deg, 0.0, v});
    }
  }
  return grid;
}

TimeStepScaling fit_scaling(const TimeStepDataset& train) {
  if (train.groups.empty()) throw DomainError("fit_scaling: empty dataset");
  const auto joints = static_cast<std::size_t>(train.joints);
  std::vector<double> feats, targets;
  for (const auto& g : train.groups) {
    const auto f = g.features();
    feats.insert(feats.end(), f.begin(), f.end());
    targets.insert(targets.end(), g.angles.begin(), g.angles.end());
  }
  return {MinMaxNormalizer::fit(feats, joints + 1), MinMaxNormalizer::fit(targets, joints)};
}

std::pair<TimeStepDataset, TimeStepDataset> split_holdout(const TimeStepDataset& ds,
                                                          std::span<const std::vector<double>> train_grid,
                                                          std::span<const double> holdout) {
  for (const auto& cond : train_grid) {
    if (same_condition(cond, holdout)) {
      throw DomainError("split_holdout: hold-out condition is part of the training grid");
    }
  }
  TimeStepDataset train, test;
  train.joints = test.joints = ds.joints;
  for (const auto& g : ds.groups) {
    if (same_condition(g.initial_deg, holdout)) {
      test.groups.push_back(g);
      continue;
    }
    const bool in_grid = std::any_of(train_grid.begin(), train_grid.end(),
                                     [&](const std::vector<double>& c) { return same_condition(c, g.initial_deg); });
    if (in_grid) train.groups.push_back(g);
  }
  if (test.groups.empty()) throw DomainError("split_holdout: hold-out condition not present in the dataset");
  if (train.groups.empty()) throw DomainError("split_holdout: no training trajectories matched the grid");
  train.scaling = test.scaling = fit_scaling(train);
  return {std::move(train), std::move(test)};
}

namespace {

std::vector<std::string> timestep_header(int joints) {
  std::vector<std::string> h = {"t"};
  for (int i = 1; i <= joints; ++i) h.push_back("theta" + std::to_string(i) + "_0_deg");
  for (int i = 1; i <= joints; ++i) h.push_back("theta" + std::to_string(i));
  return h;
}

}  // namespace

void write_timestep_csv(const std::string& path, const TimeStepDataset& ds) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path + "'");
  const auto header = timestep_header(ds.joints);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  const auto joints = static_cast<std::size_t>(ds.joints);
  std::string line;
  for (const auto& g : ds.groups) {
    for (std::size_t r = 0; r < g.rows(); ++r) {
      line.clear();
      csv::append_double(line, g.times[r]);
      for (double a : g.initial_deg) {
        line += ',';
        csv::append_double(line, a);
      }
      for (std::size_t i = 0; i < joints; ++i) {
        line += ',';
        csv::append_double(line, g.angles[r * joints + i]);
      }
      line += '\n';
      out << line;
    }
  }
}

TimeStepDataset read_timestep_csv(const std::string& path) {
  const auto table = csv::read_table(path);
  int joints = 0;
  if (table.header == timestep_header(2)) {
    joints = 2;
  } else if (table.header == timestep_header(3)) {
    joints = 3;
  } else {
    throw FormatError(path + ": header is not a time-step dataset header");
  }
  const auto nj = static_cast<std::size_t>(joints);
  TimeStepDataset ds;
  ds.joints = joints;
  std::vector<double> init(nj);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string where = path + ":" + std::to_string(r + 2);
    const auto& row = table.rows[r];
    const double t = csv::parse_double(row[0], where);
    for (std::size_t i = 0; i < nj; ++i) init[i] = csv::parse_double(row[1 + i], where);
    if (ds.groups.empty() || !same_condition(ds.groups.back().initial_deg, init, 0.0)) {
      if (ds.find(init) != nullptr) throw FormatError(where + ": rows of one initial condition are not contiguous");
      ds.groups.push_back(TimeStepGroup{init, {}, {}});
    }
    auto& g = ds.groups.back();
    if (!g.times.empty()) {
      if (!(t > g.times.back())) throw FormatError(where + ": time is not strictly increasing");
      if (g.times.size() >= 2) {
        const double spacing = g.times[1] - g.times[0];
        if (std::abs((t - g.times.back()) - spacing) > 1e-9 * std::max(1.0, std::abs(t))) {
          throw FormatError(where + ": time spacing is not uniform");
        }
      }
    }
    g.times.push_back(t);
    for (std::size_t i = 0; i < nj; ++i) g.angles.push_back(csv::parse_double(row[1 + nj + i], where));
  }
  if (ds.groups.empty()) throw FormatError(path + ": no rows");
  return ds;
}

void write_window_manifest(const std::string& csv_path, std::size_t window, double train_fraction) {
  std::ofstream out(csv_path + ".manifest");
  if (!out) throw FormatError("cannot write '" + csv_path + ".manifest'");
  out << "window=" << window << '\n' << "train_fraction=" << csv::format_double(train_fraction) << '\n';
}

std::pair<std::size_t, double> read_window_manifest(const std::string& csv_path) {
  std::ifstream in(csv_path + ".manifest");
  if (!in) throw FormatError("missing window manifest '" + csv_path + ".manifest'");
  std::size_t window = 0;
  double fraction = kDefaultTrainFraction;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto key = line.substr(0, eq);
    const auto value = line.substr(eq + 1);
    if (key == "window") window = static_cast<std::size_t>(csv::parse_double(value, csv_path + ".manifest"));
    if (key == "train_fraction") fraction = csv::parse_double(value, csv_path + ".manifest");
  }
  if (window == 0) throw FormatError(csv_path + ".manifest: missing window=W line");
  return {window, fraction};
}

}  // namespace chaoslab::dataset

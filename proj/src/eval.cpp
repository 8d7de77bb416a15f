#include "chaoslab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include "chaoslab/csv.hpp"
#include "chaoslab/error.hpp"
#include "chaoslab/models.hpp"

namespace chaoslab::eval {

namespace {

void check_pair(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    throw DomainError("prediction has " + std::to_string(pred.size()) + " values, target has " +
                      std::to_string(target.size()));
  }
  if (pred.empty()) throw DomainError("metrics need at least one value");
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void require_no_comma(const std::string& field, const char* what) {
  if (field.find(',') != std::string::npos) throw DomainError(std::string(what) + " '" + field + "' contains a comma");
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double mse(std::span<const double> pred, std::span<const double> target) {
  check_pair(pred, target);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

double rmse(std::span<const double> pred, std::span<const double> target) { return std::sqrt(mse(pred, target)); }

double r2(std::span<const double> pred, std::span<const double> target, std::size_t dims) {
  check_pair(pred, target);
  if (dims == 0 || pred.size() % dims != 0) throw DomainError("r2: values do not divide into " + std::to_string(dims) + " columns");
  const std::size_t rows = pred.size() / dims;
  double total = 0.0;
  for (std::size_t d = 0; d < dims; ++d) {
    double mean = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mean += target[r * dims + d];
    mean /= static_cast<double>(rows);
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double t = target[r * dims + d];
      ss_res += (pred[r * dims + d] - t) * (pred[r * dims + d] - t);
      ss_tot += (t - mean) * (t - mean);
    }
    if (!(ss_tot > 0.0)) throw DegenerateInputError("r2: target column " + std::to_string(d) + " has zero variance");
    total += 1.0 - ss_res / ss_tot;
  }
  return total / static_cast<double>(dims);
}

std::string Scenario::label() const {
  return system + "/" + (friction ? "friction" : "frictionless") + "/" + protocol + "/" + test_condition;
}

void write_metrics_csv(const std::string& path, std::span<const MetricsRecord> records) {
  std::string text = "model,system,friction,protocol,test_condition,seed,rmse,r2\n";
  for (const auto& r : records) {
    require_no_comma(r.model, "model name");
    require_no_comma(r.scenario.system, "system");
    require_no_comma(r.scenario.protocol, "protocol");
    require_no_comma(r.scenario.test_condition, "test condition");
    text += r.model + ',' + r.scenario.system + ',' + (r.scenario.friction ? "1" : "0") + ',' + r.scenario.protocol +
            ',' + r.scenario.test_condition + ',' + std::to_string(r.seed) + ',';
    csv::append_double(text, r.rmse);
    text += ',';
    csv::append_double(text, r.r2);
    text += '\n';
  }
  write_text(path, text);
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
  const csv::Table t = csv::read_table(path);
  const std::size_t cm = t.column("model"), cs = t.column("system"), cf = t.column("friction"),
                    cp = t.column("protocol"), ct = t.column("test_condition"), cseed = t.column("seed"),
                    crmse = t.column("rmse"), cr2 = t.column("r2");
  std::vector<MetricsRecord> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const std::string where = path + ": data row " + std::to_string(i + 1);
    MetricsRecord r;
    r.model = row[cm];
    r.scenario.system = row[cs];
    if (row[cf] != "0" && row[cf] != "1") throw FormatError(where + ": friction must be 0 or 1");
    r.scenario.friction = row[cf] == "1";
    r.scenario.protocol = row[cp];
    r.scenario.test_condition = row[ct];
    const double seed = csv::parse_double(row[cseed], where);
    if (seed < 0 || seed != std::floor(seed)) throw FormatError(where + ": seed must be a non-negative integer");
    r.seed = static_cast<std::uint64_t>(seed);
    r.rmse = csv::parse_double(row[crmse], where);
    r.r2 = csv::parse_double(row[cr2], where);
    out.push_back(std::move(r));
  }
  return out;
}

void PredictionDump::validate() const {
  if (dims == 0) throw DomainError("prediction dump needs at least one angle column");
  if (actual.size() != times.size() * dims || predicted.size() != times.size() * dims) {
    throw DomainError("prediction dump: " + std::to_string(times.size()) + " times but " +
                      std::to_string(actual.size()) + " actual and " + std::to_string(predicted.size()) +
                      " predicted values for " + std::to_string(dims) + " angles");
  }
}

void write_prediction_csv(const std::string& path, const PredictionDump& dump) {
  dump.validate();
  std::string text = "t";
  for (std::size_t d = 1; d <= dump.dims; ++d) {
    text += ",actual_theta" + std::to_string(d) + ",pred_theta" + std::to_string(d);
  }
  text += '\n';
  for (std::size_t r = 0; r < dump.rows(); ++r) {
    csv::append_double(text, dump.times[r]);
    for (std::size_t d = 0; d < dump.dims; ++d) {
      text += ',';
      csv::append_double(text, dump.actual[r * dump.dims + d]);
      text += ',';
      csv::append_double(text, dump.predicted[r * dump.dims + d]);
    }
    text += '\n';
  }
  write_text(path, text);
}

PredictionDump read_prediction_csv(const std::string& path) {
  const csv::Table t = csv::read_table(path);
  if (t.header.size() < 3 || t.header.size() % 2 != 1 || t.header[0] != "t") {
    throw FormatError(path + ": expected header t,actual_theta1,pred_theta1,...");
  }
  PredictionDump dump;
  dump.dims = (t.header.size() - 1) / 2;
  std::vector<std::size_t> ca, cp;
  for (std::size_t d = 1; d <= dump.dims; ++d) {
    ca.push_back(t.column("actual_theta" + std::to_string(d)));
    cp.push_back(t.column("pred_theta" + std::to_string(d)));
  }
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::string where = path + ": data row " + std::to_string(i + 1);
    dump.times.push_back(csv::parse_double(t.rows[i][0], where));
    for (std::size_t d = 0; d < dump.dims; ++d) {
      dump.actual.push_back(csv::parse_double(t.rows[i][ca[d]], where));
      dump.predicted.push_back(csv::parse_double(t.rows[i][cp[d]], where));
    }
  }
  if (dump.times.empty()) throw FormatError(path + ": no prediction rows");
  return dump;
}

MetricsRecord metrics_from_predictions(const std::string& path, std::string model, Scenario scenario,
                                       std::uint64_t seed) {
  const PredictionDump dump = read_prediction_csv(path);
  MetricsRecord r;
  r.model = std::move(model);
  r.scenario = std::move(scenario);
  r.seed = seed;
  r.rmse = rmse(dump.predicted, dump.actual);
  r.r2 = r2(dump.predicted, dump.actual, dump.dims);
  return r;
}

Heatmap rmse_heatmap(std::span<const MetricsRecord> records) {
  std::set<std::tuple<std::string, std::string, std::uint64_t>> seen;
  std::vector<std::string> unknown_models;
  Heatmap map;
  for (const auto& r : records) {
    const std::string label = r.scenario.label();
    if (!seen.emplace(r.model, label, r.seed).second) {
      throw DomainError("duplicate metrics row for " + r.model + " / " + label + " / seed " + std::to_string(r.seed));
    }
    if (std::find(map.columns.begin(), map.columns.end(), label) == map.columns.end()) map.columns.push_back(label);
  }
  std::set<std::string> present;
  for (const auto& r : records) present.insert(r.model);
  for (models::ModelKind k : models::kAllKinds) {
    const std::string name(models::display_name(k));
    if (present.erase(name) != 0) map.rows.push_back(name);
  }
  for (const auto& r : records) {
    if (present.erase(r.model) != 0) map.rows.push_back(r.model);
  }
  map.cells.resize(map.rows.size() * map.columns.size());
  for (std::size_t i = 0; i < map.rows.size(); ++i) {
    for (std::size_t j = 0; j < map.columns.size(); ++j) {
      std::vector<double> values;
      for (const auto& r : records) {
        if (r.model == map.rows[i] && r.scenario.label() == map.columns[j]) values.push_back(r.rmse);
      }
      if (!values.empty()) map.cells[i * map.columns.size() + j] = median(std::move(values));
    }
  }
  return map;
}

void write_heatmap_csv(const std::string& path, const Heatmap& map) {
  std::string text = "model";
  for (const auto& c : map.columns) text += "," + c;
  text += '\n';
  for (std::size_t i = 0; i < map.rows.size(); ++i) {
    text += map.rows[i];
    for (std::size_t j = 0; j < map.columns.size(); ++j) {
      text += ',';
      if (const auto v = map.at(i, j)) {
        csv::append_double(text, *v);
      } else {
        text += "NA";
      }
    }
    text += '\n';
  }
  write_text(path, text);
}

std::string heatmap_svg(const Heatmap& map, const std::string& title) {
  const double cell_w = 150, cell_h = 34, left = 90, top = 70;
  const double width = left + cell_w * static_cast<double>(std::max<std::size_t>(map.columns.size(), 1)) + 20;
  const double height = top + cell_h * static_cast<double>(map.rows.size()) + 20;

  double lo = INFINITY, hi = -INFINITY;
  bool all_positive = true;
  for (const auto& c : map.cells) {
    if (!c) continue;
    lo = std::min(lo, *c);
    hi = std::max(hi, *c);
    all_positive = all_positive && *c > 0.0;
  }
  auto shade = [&](double v) {
    if (!(hi > lo)) return 0.5;
    if (all_positive) return (std::log(v) - std::log(lo)) / (std::log(hi) - std::log(lo));
    return (v - lo) / (hi - lo);
  };

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", width) + "\" height=\"" +
                  fmt("%.0f", height) + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + fmt("%.0f", width) + "\" height=\"" + fmt("%.0f", height) +
       "\" fill=\"white\"/>\n";
  s += "<text x=\"10\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\">" + xml_escape(title) + "</text>\n";
  for (std::size_t j = 0; j < map.columns.size(); ++j) {
    const double x = left + cell_w * static_cast<double>(j) + cell_w / 2;
    s += "<text x=\"" + fmt("%.1f", x) + "\" y=\"" + fmt("%.1f", top - 10) +
         "\" font-family=\"sans-serif\" font-size=\"9\" text-anchor=\"middle\">" + xml_escape(map.columns[j]) +
         "</text>\n";
  }
  for (std::size_t i = 0; i < map.rows.size(); ++i) {
    const double y = top + cell_h * static_cast<double>(i);
    s += "<text x=\"" + fmt("%.1f", left - 8) + "\" y=\"" + fmt("%.1f", y + cell_h / 2 + 4) +
         "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">" + xml_escape(map.rows[i]) + "</text>\n";
    for (std::size_t j = 0; j < map.columns.size(); ++j) {
      const double x = left + cell_w * static_cast<double>(j);
      const auto v = map.at(i, j);
      std::string fill = "#dddddd", label = "NA", ink = "black";
      if (v) {
        // Low values dark navy, high values pale.
        const double t = std::clamp(shade(*v), 0.0, 1.0);
        const int r = static_cast<int>(std::lround(20 + t * 215)), g = static_cast<int>(std::lround(30 + t * 210)),
                  b = static_cast<int>(std::lround(90 + t * 160));
        char buf[16];
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
        fill = buf;
        label = fmt("%.3e", *v);
        ink = t < 0.5 ? "white" : "black";
      }
      s += "<rect x=\"" + fmt("%.1f", x) + "\" y=\"" + fmt("%.1f", y) + "\" width=\"" + fmt("%.1f", cell_w) +
           "\" height=\"" + fmt("%.1f", cell_h) + "\" fill=\"" + fill + "\" stroke=\"white\"/>\n";
      s += "<text x=\"" + fmt("%.1f", x + cell_w / 2) + "\" y=\"" + fmt("%.1f", y + cell_h / 2 + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" fill=\"" + ink + "\">" + label +
           "</text>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

std::string trajectory_svg(const PredictionDump& dump, const PlotLabels& labels) {
  dump.validate();
  if (dump.rows() == 0) throw DomainError("trajectory plot needs at least one sample");
  const double width = 900, panel_h = 240, left = 70, right = 20, top = 60, gap = 50;
  const double plot_w = width - left - right, plot_h = panel_h - gap;
  const double height = top + panel_h * static_cast<double>(dump.dims) + 10;
  const double t0 = dump.times.front(), t1 = dump.times.back();
  const double tspan = t1 > t0 ? t1 - t0 : 1.0;

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", width) + "\" height=\"" +
                  fmt("%.0f", height) + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + fmt("%.0f", width) + "\" height=\"" + fmt("%.0f", height) +
       "\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt("%.1f", left) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">" +
       xml_escape(labels.title) + "</text>\n";
  // Legend
  s += "<rect x=\"" + fmt("%.1f", width - 250) + "\" y=\"14\" width=\"14\" height=\"4\" fill=\"red\"/>\n";
  s += "<text x=\"" + fmt("%.1f", width - 230) + "\" y=\"20\" font-family=\"sans-serif\" font-size=\"12\">actual</text>\n";
  s += "<rect x=\"" + fmt("%.1f", width - 160) + "\" y=\"14\" width=\"14\" height=\"4\" fill=\"blue\"/>\n";
  s += "<text x=\"" + fmt("%.1f", width - 140) + "\" y=\"20\" font-family=\"sans-serif\" font-size=\"12\">predicted</text>\n";

  for (std::size_t d = 0; d < dump.dims; ++d) {
    const double y0 = top + panel_h * static_cast<double>(d);
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t r = 0; r < dump.rows(); ++r) {
      for (double v : {dump.actual[r * dump.dims + d], dump.predicted[r * dump.dims + d]}) {
        if (std::isfinite(v)) {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
    }
    if (!(hi > lo)) {
      lo = std::isfinite(lo) ? lo - 1.0 : -1.0;
      hi = lo + 2.0;
    }
    auto px = [&](double t) { return left + (t - t0) / tspan * plot_w; };
    auto py = [&](double v) { return y0 + plot_h - (v - lo) / (hi - lo) * plot_h; };

    s += "<path d=\"M" + fmt("%.1f", left) + "," + fmt("%.1f", y0) + " L" + fmt("%.1f", left) + "," +
         fmt("%.1f", y0 + plot_h) + " L" + fmt("%.1f", left + plot_w) + "," + fmt("%.1f", y0 + plot_h) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
    s += "<text x=\"" + fmt("%.1f", left - 6) + "\" y=\"" + fmt("%.1f", y0 + 10) +
         "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" + fmt("%.3g", hi) + "</text>\n";
    s += "<text x=\"" + fmt("%.1f", left - 6) + "\" y=\"" + fmt("%.1f", y0 + plot_h) +
         "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" + fmt("%.3g", lo) + "</text>\n";
    s += "<text x=\"" + fmt("%.1f", left) + "\" y=\"" + fmt("%.1f", y0 + plot_h + 16) +
         "\" font-family=\"sans-serif\" font-size=\"10\">" + fmt("%.3g", t0) + "</text>\n";
    s += "<text x=\"" + fmt("%.1f", left + plot_w) + "\" y=\"" + fmt("%.1f", y0 + plot_h + 16) +
         "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" + fmt("%.3g", t1) + "</text>\n";
    s += "<text x=\"" + fmt("%.1f", left + plot_w / 2) + "\" y=\"" + fmt("%.1f", y0 + plot_h + 30) +
         "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" + xml_escape(labels.x) + "</text>\n";
    s += "<text x=\"14\" y=\"" + fmt("%.1f", y0 + plot_h / 2) + "\" font-family=\"sans-serif\" font-size=\"11\">" +
         xml_escape(labels.y) + " " + std::to_string(d + 1) + "</text>\n";

    for (int series = 0; series < 2; ++series) {
      const auto& v = series == 0 ? dump.actual : dump.predicted;
      std::string path;
      path.reserve(dump.rows() * 16);
      for (std::size_t r = 0; r < dump.rows(); ++r) {
        const double val = std::isfinite(v[r * dump.dims + d]) ? v[r * dump.dims + d] : lo;
        path += (r == 0 ? "M" : " L") + fmt("%.2f", px(dump.times[r])) + "," + fmt("%.2f", py(val));
      }
      s += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + (series == 0 ? "red" : "blue") +
           "\" stroke-width=\"1.2\"/>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out << text;
  if (!out) throw FormatError("write failed for '" + path + "'");
}

}  // namespace chaoslab::eval

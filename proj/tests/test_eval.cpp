#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>

#include "chaoslab/error.hpp"
#include "chaoslab/eval.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace chaoslab;
using namespace chaoslab::eval;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "chaoslab_test_eval";
  std::filesystem::create_directories(dir);
  return dir;
}

MetricsRecord record(std::string model, std::string condition, std::uint64_t seed, double rmse_value) {
  MetricsRecord r;
  r.model = std::move(model);
  r.scenario.test_condition = std::move(condition);
  r.seed = seed;
  r.rmse = rmse_value;
  r.r2 = 0.5;
  return r;
}

std::size_t count(const std::string& s, const std::string& what) {
  std::size_t n = 0;
  for (std::size_t i = s.find(what); i != std::string::npos; i = s.find(what, i + 1)) ++n;
  return n;
}

const std::set<std::string> kSvgSubset{"svg", "rect", "path", "text"};

}  // namespace

TEST_CASE("rmse hand examples") {
  const std::vector<double> a{1, 2, 3}, b{2, 2, 2};
  CHECK(rmse(a, a) == 0.0);
  CHECK(rmse(a, b) == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));
  CHECK(rmse(a, b) * rmse(a, b) == doctest::Approx(mse(a, b)).epsilon(1e-15));
  CHECK(rmse(a, b) == rmse(b, a));
  CHECK_THROWS_AS(rmse(a, std::vector<double>{1, 2}), DomainError);
  CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), DomainError);
}

TEST_CASE("r2 hand examples") {
  const std::vector<double> target{1, 2, 3}, zeros{0, 0, 0}, mean{2, 2, 2};
  CHECK(r2(target, target) == 1.0);
  CHECK(r2(mean, target) == doctest::Approx(0.0));
  CHECK(r2(zeros, target) == doctest::Approx(-6.0));
  // Not symmetric: the zero vector has no variance to explain.
  CHECK_THROWS_AS(r2(target, zeros), DegenerateInputError);
  CHECK(r2(std::vector<double>{1, 2, 3}, std::vector<double>{1.5, 2, 2.5}) != r2(std::vector<double>{1.5, 2, 2.5}, std::vector<double>{1, 2, 3}));
}

TEST_CASE("r2 averages per-dimension scores") {
  // Column 0 perfect (1), column 1 predicted by its mean (0).
  const std::vector<double> target{1, 10, 2, 20, 3, 30};
  const std::vector<double> pred{1, 20, 2, 20, 3, 20};
  CHECK(r2(pred, target, 2) == doctest::Approx(0.5));
  CHECK_THROWS_AS(r2(pred, target, 4), DomainError);
  CHECK_THROWS_AS(r2(std::vector<double>{1, 2}, std::vector<double>{5, 5}, 1), DegenerateInputError);
}

TEST_CASE("metric scale behaviour") {
  const std::vector<double> pred{0.3, -1.2, 2.5, 0.7}, target{0.1, -1.0, 2.0, 1.1};
  std::vector<double> sp, st;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sp.push_back(3.0 * pred[i] + 5.0);
    st.push_back(3.0 * target[i] + 5.0);
  }
  CHECK(rmse(sp, st) == doctest::Approx(3.0 * rmse(pred, target)).epsilon(1e-13));
  CHECK(r2(sp, st) == doctest::Approx(r2(pred, target)).epsilon(1e-13));
}

TEST_CASE("metrics CSV round-trip") {
  std::vector<MetricsRecord> recs{record("LSTM", "120;2.05", 0, 0.015), record("AR", "120;2.05", 1, 0.3)};
  recs[1].scenario.friction = false;
  recs[1].r2 = -6.0;
  const auto path = (temp_dir() / "metrics.csv").string();
  write_metrics_csv(path, recs);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "model,system,friction,protocol,test_condition,seed,rmse,r2");
  const auto back = read_metrics_csv(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].model == "LSTM");
  CHECK(back[0].rmse == 0.015);
  CHECK(back[1].scenario == recs[1].scenario);
  CHECK(back[1].r2 == -6.0);
  recs[0].scenario.test_condition = "120,2.05";
  CHECK_THROWS_AS(write_metrics_csv(path, recs), DomainError);
}

TEST_CASE("prediction CSV round-trip and recomputed metrics") {
  PredictionDump dump;
  dump.dims = 2;
  for (int r = 0; r < 5; ++r) {
    dump.times.push_back(0.005 * r);
    dump.actual.push_back(std::sin(r));
    dump.actual.push_back(std::cos(r));
    dump.predicted.push_back(std::sin(r) + 0.01);
    dump.predicted.push_back(std::cos(r) - 0.02);
  }
  const auto path = (temp_dir() / "pred.csv").string();
  write_prediction_csv(path, dump);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,actual_theta1,pred_theta1,actual_theta2,pred_theta2");
  const auto back = read_prediction_csv(path);
  CHECK(back.times == dump.times);
  CHECK(back.actual == dump.actual);
  CHECK(back.predicted == dump.predicted);
  const auto m = metrics_from_predictions(path, "GRU", Scenario{}, 3);
  CHECK(m.rmse == doctest::Approx(std::sqrt((0.0001 + 0.0004) / 2)).epsilon(1e-12));
  CHECK(m.r2 == r2(dump.predicted, dump.actual, 2));

  dump.predicted.pop_back();
  CHECK_THROWS_AS(write_prediction_csv(path, dump), DomainError);
}

TEST_CASE("heatmap matrix shape, ordering and medians") {
  std::vector<MetricsRecord> recs;
  const char* models[] = {"STRNN", "AR", "LSTM", "GRU", "FFNN", "LINSGD", "BIRNN", "VRNN"};
  const char* scenarios[] = {"a", "b", "c", "d"};
  for (const char* m : models)
    for (const char* s : scenarios) recs.push_back(record(m, s, 0, 1.0));
  auto map = rmse_heatmap(recs);
  CHECK(map.rows.size() == 8);
  CHECK(map.columns.size() == 4);
  CHECK(map.cells.size() == 32);
  CHECK(map.rows == std::vector<std::string>{"AR", "LINSGD", "FFNN", "VRNN", "LSTM", "GRU", "BIRNN", "STRNN"});
  CHECK(std::all_of(map.cells.begin(), map.cells.end(), [](const auto& c) { return c && *c == 1.0; }));

  // All-equal values share one fill colour.
  const std::string svg = heatmap_svg(map, "uniform");
  std::set<std::string> fills;
  const std::regex fill_re("<rect [^>]*fill=\"(#[0-9a-f]{6})\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), fill_re); it != std::sregex_iterator(); ++it)
    fills.insert((*it)[1]);
  CHECK(fills.size() == 1);
  CHECK(oracle::check_xml(svg, kSvgSubset).empty());

  // Median over seeds, and a missing cell.
  std::vector<MetricsRecord> seeds{record("LSTM", "a", 0, 0.3), record("LSTM", "a", 1, 0.1),
                                   record("LSTM", "a", 2, 0.2), record("AR", "b", 0, 0.9)};
  map = rmse_heatmap(seeds);
  CHECK(map.rows == std::vector<std::string>{"AR", "LSTM"});
  CHECK(*map.at(1, 0) == 0.2);
  CHECK_FALSE(map.at(0, 0).has_value());
  CHECK(count(heatmap_svg(map, "t"), ">NA<") == 2);

  seeds.push_back(record("LSTM", "a", 1, 0.5));
  CHECK_THROWS_AS(rmse_heatmap(seeds), DomainError);
}

TEST_CASE("heatmap darker means lower") {
  const std::vector<MetricsRecord> recs{record("AR", "a", 0, 1.0), record("LSTM", "a", 0, 0.01)};
  const std::string svg = heatmap_svg(rmse_heatmap(recs), "x");
  const std::regex fill_re("<rect [^>]*fill=\"#([0-9a-f]{2})([0-9a-f]{2})([0-9a-f]{2})\"");
  std::vector<int> brightness;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), fill_re); it != std::sregex_iterator(); ++it) {
    brightness.push_back(std::stoi((*it)[1], nullptr, 16) + std::stoi((*it)[2], nullptr, 16) +
                         std::stoi((*it)[3], nullptr, 16));
  }
  REQUIRE(brightness.size() == 2);  // AR row first, then LSTM
  CHECK(brightness[1] < brightness[0]);
}

TEST_CASE("heatmap CSV") {
  const std::vector<MetricsRecord> recs{record("AR", "a", 0, 0.5), record("LSTM", "b", 0, 0.25)};
  const auto path = (temp_dir() / "heat.csv").string();
  write_heatmap_csv(path, rmse_heatmap(recs));
  std::ifstream in(path);
  std::string l1, l2, l3;
  std::getline(in, l1);
  std::getline(in, l2);
  std::getline(in, l3);
  CHECK(l1 == "model,double/friction/timestep/a,double/friction/timestep/b");
  CHECK(l2 == "AR,0.5,NA");
  CHECK(l3 == "LSTM,NA,0.25");
}

TEST_CASE("trajectory plot structure") {
  PredictionDump dump;
  dump.dims = 2;
  for (int r = 0; r < 2000; ++r) {
    dump.times.push_back(0.005 * r);
    dump.actual.push_back(std::sin(0.01 * r));
    dump.actual.push_back(std::cos(0.02 * r));
  }
  dump.predicted = dump.actual;
  const std::string svg = trajectory_svg(dump, {"LSTM <double> [120,2.05]"});
  CHECK(oracle::check_xml(svg, kSvgSubset).empty());
  CHECK(svg.find("&lt;double&gt;") != std::string::npos);
  CHECK(count(svg, "stroke=\"red\"") == 2);
  CHECK(count(svg, "stroke=\"blue\"") == 2);

  // Identical series give identical path data, 2000 points each.
  std::vector<std::string> data;
  for (std::size_t i = svg.find("<path d=\""); i != std::string::npos; i = svg.find("<path d=\"", i + 1)) {
    const std::size_t start = i + 9, end = svg.find('"', start);
    if (svg.compare(end, 28, "\" fill=\"none\" stroke=\"black\"") == 0) continue;  // axes
    data.push_back(svg.substr(start, end - start));
  }
  REQUIRE(data.size() == 4);
  CHECK(data[0] == data[1]);
  CHECK(data[2] == data[3]);
  CHECK(count(data[0], "L") == 1999);
  CHECK(svg.find("t (s)") != std::string::npos);
  CHECK(svg.find("theta (rad)") != std::string::npos);
  CHECK(svg.find(">actual<") != std::string::npos);
  CHECK(svg.find(">predicted<") != std::string::npos);

  dump.predicted.resize(10);
  CHECK_THROWS_AS(trajectory_svg(dump, {}), DomainError);
}

TEST_CASE("xml checker rejects malformed documents") {
  CHECK_FALSE(oracle::check_xml("<svg><rect></svg>", kSvgSubset).empty());
  CHECK_FALSE(oracle::check_xml("<svg><circle/></svg>", kSvgSubset).empty());
  CHECK(oracle::check_xml("<svg><rect x=\"1\"/><text>a</text></svg>", kSvgSubset).empty());
}

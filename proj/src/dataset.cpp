// SPDX-License-Identifier: Apache-2.0
#include "psl/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "psl/error.hpp"
#include "psl/fileio.hpp"
#include "psl/random.hpp"

namespace psl {

double point_radius(const Point& p) { return std::hypot(p[0], p[1]); }
double point_angle(const Point& p) { return std::atan2(p[1], p[0]); }

Point centroid(std::span<const Point> points) {
  Point c{0.0, 0.0};
  if (points.empty()) return c;
  for (const auto& p : points) {
    c[0] += p[0];
    c[1] += p[1];
  }
  c[0] /= static_cast<double>(points.size());
  c[1] /= static_cast<double>(points.size());
  return c;
}

void ToyDataset::recompute_attributes() {
  attributes.resize(points.size());
  const Point c = centroid(points);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    attributes[i] = {point_radius(p), point_angle(p), std::hypot(p[0] - c[0], p[1] - c[1])};
  }
}

std::vector<std::string> toy_tokens() {
  return {std::string(kNullToken), "point", "large_radius", "small_radius", "left", "right", "wide_spread"};
}

Vocabulary toy_vocabulary(std::size_t dim) { return Vocabulary(toy_tokens(), dim); }

ToyDataset make_toy_dataset(const ToyDataConfig& config) {
  constexpr double kPi = std::numbers::pi;
  Rng rng = make_rng(config.seed, 0xda7a);
  ToyDataset data;
  data.points.reserve(config.count);
  data.captions.reserve(config.count);
  for (std::size_t i = 0; i < config.count; ++i) {
    PromptSpec caption;
    caption.entries.push_back({"point", 1.0});

    double r = 0.0;
    switch (uniform_index(rng, 3)) {
      case 0:
        r = 0.4 + 0.05 * standard_normal(rng);
        caption.entries.push_back({"small_radius", 1.0});
        break;
      case 1: r = 1.0 + 0.08 * standard_normal(rng); break;
      default:
        r = 2.0 + 0.1 * standard_normal(rng);
        caption.entries.push_back({"large_radius", 1.0});
        break;
    }
    double theta = 0.0;
    switch (uniform_index(rng, 3)) {
      case 0:
        theta = uniform(rng, 0.2, 0.8);
        caption.entries.push_back({"right", 1.0});
        break;
      case 1: theta = uniform(rng, kPi / 2 - 0.3, kPi / 2 + 0.3); break;
      default:
        theta = uniform(rng, kPi - 0.8, kPi - 0.2);
        caption.entries.push_back({"left", 1.0});
        break;
    }
    Point p{r * std::cos(theta), r * std::sin(theta)};
    if (uniform(rng, 0.0, 1.0) < config.wide_fraction) {
      p[0] += 0.25 * standard_normal(rng);
      p[1] += 0.25 * standard_normal(rng);
      caption.entries.push_back({"wide_spread", 1.0});
    }
    data.points.push_back(p);
    data.captions.push_back(std::move(caption));
  }
  data.recompute_attributes();
  return data;
}

void save_dataset_csv(const ToyDataset& data, const std::filesystem::path& path) {
  std::string out = "x,y,caption\n";
  char buf[64];
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,", data.points[i][0], data.points[i][1]);
    out += buf;
    out += data.captions[i].to_string();
    out += '\n';
  }
  write_file_atomic(path, out);
}

namespace {
double parse_double(const std::string& field, std::size_t line_no) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != field.size())
    throw ConfigError("dataset line " + std::to_string(line_no) + ": bad number '" + field + "'");
  return v;
}
}  // namespace

ToyDataset load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("dataset '" + path.string() + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,y,caption") throw ConfigError("dataset header must be 'x,y,caption', got '" + line + "'");
  ToyDataset data;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos) throw ConfigError("dataset line " + std::to_string(line_no) + ": expected 3 fields");
    data.points.push_back({parse_double(line.substr(0, c1), line_no), parse_double(line.substr(c1 + 1, c2 - c1 - 1), line_no)});
    data.captions.push_back(PromptSpec::parse(line.substr(c2 + 1)));
  }
  data.recompute_attributes();
  return data;
}

AttributePairs split_by_radius(const ToyDataset& data, double high, double low) {
  AttributePairs pairs;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.attributes[i].radius > high) pairs.high.push_back(data.points[i]);
    if (data.attributes[i].radius < low) pairs.low.push_back(data.points[i]);
  }
  return pairs;
}

Tensor points_tensor(std::span<const Point> points) {
  std::vector<double> v;
  v.reserve(points.size() * 2);
  for (const auto& p : points) {
    v.push_back(p[0]);
    v.push_back(p[1]);
  }
  return Tensor::from({points.size(), 2}, std::move(v));
}

std::vector<Point> tensor_points(const Tensor& t) {
  if (t.rank() != 2 || t.cols() != 2) throw DimensionError("expected [B, 2] tensor, got " + shape_to_string(t.shape()));
  std::vector<Point> out(t.rows());
  const auto v = t.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {v[2 * i], v[2 * i + 1]};
  return out;
}

}  // namespace psl

// SPDX-License-Identifier: Apache-2.0
//
// Synthetic 2-D data standing in for image latents. Each point carries a
// radius class (small / medium / large), an angular sector (right / center /
// left, all in the upper half-plane) and an optional wide jitter; captions
// name the non-default classes.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "psl/encoder.hpp"

namespace psl {

using Point = std::array<double, 2>;

struct PointAttributes {
  double radius = 0.0;  // |p|
  double angle = 0.0;   // atan2(y, x)
  double spread = 0.0;  // distance to the dataset centroid
};

struct ToyDataset {
  std::vector<Point> points;
  std::vector<PromptSpec> captions;
  std::vector<PointAttributes> attributes;

  std::size_t size() const { return points.size(); }
  /// Recomputes every attribute from the points.
  void recompute_attributes();
};

double point_radius(const Point& p);
double point_angle(const Point& p);
Point centroid(std::span<const Point> points);

/// Tokens used by the toy captions, "<null>" first.
std::vector<std::string> toy_tokens();
Vocabulary toy_vocabulary(std::size_t dim = 32);

struct ToyDataConfig {
  std::size_t count = 4000;
  std::uint64_t seed = 0;
  double wide_fraction = 0.2;
};

ToyDataset make_toy_dataset(const ToyDataConfig& config = {});

/// CSV with header "x,y,caption"; caption tokens are space separated.
void save_dataset_csv(const ToyDataset& data, const std::filesystem::path& path);
ToyDataset load_dataset_csv(const std::filesystem::path& path);

/// Points whose radius is above `high` (A) and below `low` (B).
struct AttributePairs {
  std::vector<Point> high;
  std::vector<Point> low;
};
AttributePairs split_by_radius(const ToyDataset& data, double high, double low);

/// Flat tensor [B, 2] from points.
Tensor points_tensor(std::span<const Point> points);
std::vector<Point> tensor_points(const Tensor& t);

}  // namespace psl

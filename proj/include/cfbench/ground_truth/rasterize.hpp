#pragma once

#include "cfbench/core.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace cfbench::ground_truth {

inline constexpr int kCanvasSide = 600;
inline constexpr double kDefaultPenRadius = 10.0;

enum class Tool { Draw, Erase, Reset };

std::string to_string(Tool t);
Tool tool_from_string(const std::string& s);

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// One pointer gesture in canvas coordinates. A single point paints a disk;
/// consecutive points paint the capsule between them. RESET ignores points.
struct Stroke {
  Tool tool = Tool::Draw;
  std::vector<Point> points;
  double radius = kDefaultPenRadius;
  std::string timestamp;

  /// Throws unless every point lies in [0, 600] and the radius is positive.
  void validate() const;
};

nlohmann::json to_json(const Stroke& s);
Stroke stroke_from_json(const nlohmann::json& j);

/// Replays strokes on the 600x600 canvas above the up-sampled original and
/// block-averages back to 28x28 using exact fractional coverage.
///
/// Canvas pixel p spans [28p, 28p+28) and image pixel c spans [600c, 600c+600)
/// in units of 1/28 canvas pixel, so every overlap weight is an integer. An
/// image pixel whose region holds no painted canvas pixel is returned
/// unchanged.
Image rasterize_edits(const Image& original, const std::vector<Stroke>& strokes);

}  // namespace cfbench::ground_truth

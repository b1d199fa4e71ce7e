#include "cfbench/ground_truth/rasterize.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace cfbench::ground_truth {

std::string to_string(Tool t) {
  switch (t) {
    case Tool::Draw: return "DRAW";
    case Tool::Erase: return "ERASE";
    case Tool::Reset: return "RESET";
  }
  return "UNKNOWN";
}

Tool tool_from_string(const std::string& s) {
  if (s == "DRAW") return Tool::Draw;
  if (s == "ERASE") return Tool::Erase;
  if (s == "RESET") return Tool::Reset;
  throw Error("unknown stroke tool '" + s + "' (expected DRAW, ERASE or RESET)");
}

void Stroke::validate() const {
  if (tool == Tool::Reset) return;
  if (!(radius > 0.0) || !std::isfinite(radius)) throw Error("stroke: pen radius must be positive");
  if (points.empty()) throw Error("stroke: DRAW and ERASE need at least one point");
  for (const Point& p : points)
    if (!(p.x >= 0.0 && p.x <= kCanvasSide && p.y >= 0.0 && p.y <= kCanvasSide))
      throw Error("stroke: point outside the 600x600 canvas");
}

nlohmann::json to_json(const Stroke& s) {
  nlohmann::json pts = nlohmann::json::array();
  for (const Point& p : s.points) pts.push_back({p.x, p.y});
  return {{"tool", to_string(s.tool)}, {"points", pts}, {"radius", s.radius}, {"timestamp", s.timestamp}};
}

Stroke stroke_from_json(const nlohmann::json& j) {
  Stroke s;
  s.tool = tool_from_string(j.at("tool").get<std::string>());
  if (j.contains("points"))
    for (const auto& p : j.at("points")) {
      if (!p.is_array() || p.size() != 2) throw Error("stroke: each point must be an [x, y] pair");
      s.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
  s.radius = j.value("radius", kDefaultPenRadius);
  s.timestamp = j.value("timestamp", "");
  s.validate();
  return s;
}

namespace {

// Edit layer: 0 untouched, +1 painted at +0.5, -1 painted at -0.5.
using Layer = std::vector<std::int8_t>;

double segment_distance_sq(double px, double py, const Point& a, const Point& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - px, ey = a.y + t * dy - py;
  return ex * ex + ey * ey;
}

void paint_capsule(Layer& layer, const Point& a, const Point& b, double r, std::int8_t value) {
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - r - 1)));
  const int x1 = std::min(kCanvasSide - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + r + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - r - 1)));
  const int y1 = std::min(kCanvasSide - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + r + 1)));
  const double r2 = r * r;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (segment_distance_sq(x + 0.5, y + 0.5, a, b) <= r2)
        layer[static_cast<std::size_t>(y) * kCanvasSide + static_cast<std::size_t>(x)] = value;
}

// overlap[c][k]: length of canvas pixel (start of image pixel c's span + k)
// inside image pixel c, in 1/28 canvas-pixel units.
struct Span {
  int first = 0;
  std::vector<std::int64_t> weight;
};

std::array<Span, kImageSide> spans() {
  std::array<Span, kImageSide> out;
  for (int c = 0; c < kImageSide; ++c) {
    const std::int64_t lo = std::int64_t(kCanvasSide) * c, hi = lo + kCanvasSide;
    const int first = static_cast<int>(lo / kImageSide);
    const int last = static_cast<int>((hi - 1) / kImageSide);
    out[c].first = first;
    for (int p = first; p <= last; ++p) {
      const std::int64_t plo = std::int64_t(kImageSide) * p, phi = plo + kImageSide;
      out[c].weight.push_back(std::min(phi, hi) - std::max(plo, lo));
    }
  }
  return out;
}

}  // namespace

Image rasterize_edits(const Image& original, const std::vector<Stroke>& strokes) {
  Layer layer(static_cast<std::size_t>(kCanvasSide) * kCanvasSide, 0);
  bool any = false;
  for (const Stroke& s : strokes) {
    s.validate();
    if (s.tool == Tool::Reset) {
      std::fill(layer.begin(), layer.end(), std::int8_t{0});
      any = false;
      continue;
    }
    const std::int8_t v = s.tool == Tool::Draw ? 1 : -1;
    if (s.points.size() == 1) paint_capsule(layer, s.points[0], s.points[0], s.radius, v);
    for (std::size_t i = 1; i < s.points.size(); ++i) paint_capsule(layer, s.points[i - 1], s.points[i], s.radius, v);
    any = true;
  }
  if (!any) return original;

  static const auto span = spans();
  constexpr std::int64_t total = std::int64_t(kCanvasSide) * kCanvasSide;
  Image out;
  for (int r = 0; r < kImageSide; ++r) {
    for (int c = 0; c < kImageSide; ++c) {
      std::int64_t painted_w = 0, signed_sum = 0;
      const Span& sy = span[r];
      const Span& sx = span[c];
      for (std::size_t i = 0; i < sy.weight.size(); ++i) {
        const std::size_t row = static_cast<std::size_t>(sy.first + static_cast<int>(i)) * kCanvasSide;
        for (std::size_t j = 0; j < sx.weight.size(); ++j) {
          const std::int8_t v = layer[row + static_cast<std::size_t>(sx.first) + j];
          if (v == 0) continue;
          const std::int64_t w = sy.weight[i] * sx.weight[j];
          painted_w += w;
          signed_sum += w * v;
        }
      }
      if (painted_w == 0) {
        out(r, c) = original(r, c);
      } else if (painted_w == total) {
        out(r, c) = 0.5 * static_cast<double>(signed_sum) / static_cast<double>(total);
      } else {
        out(r, c) = (0.5 * static_cast<double>(signed_sum) + original(r, c) * static_cast<double>(total - painted_w)) /
                    static_cast<double>(total);
      }
    }
  }
  return out;
}

}  // namespace cfbench::ground_truth

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

namespace cfbench::nn {

struct Shape {
  int channels = 1;
  int height = 1;
  int width = 1;

  int size() const { return channels * height * width; }
  bool operator==(const Shape&) const = default;
};

enum class LayerKind { Conv2D, MaxPool2, Dense, ReLU, Dropout, BoundedOutput };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

/// One layer of a sequential network. Parameterised layers own the slice
/// [param_offset, param_offset + param_count) of the network's flat vector,
/// weights first (column-major, out x in) and biases after.
struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  Shape in;
  Shape out;
  int kernel = 0;    // Conv2D
  int padding = 0;   // Conv2D
  double rate = 0.0; // Dropout
  std::size_t param_offset = 0;
  std::size_t param_count = 0;

  std::size_t weight_count() const;
  bool operator==(const LayerSpec&) const = default;
};

/// Sequential layer descriptor built fluently:
///   Architecture(Shape{1, 28, 28}).conv(32, 3).relu().maxpool().dense(10)
class Architecture {
 public:
  Architecture() = default;
  explicit Architecture(Shape input) : input_(input) {}

  Architecture& conv(int out_channels, int kernel, int padding = 0);
  Architecture& maxpool();
  Architecture& dense(int units);
  Architecture& relu();
  Architecture& dropout(double rate);
  /// sigmoid(x) - 0.5, keeping outputs strictly inside the pixel range.
  Architecture& bounded_output();

  const Shape& input() const { return input_; }
  Shape output() const { return layers_.empty() ? input_ : layers_.back().out; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t parameter_count() const { return parameter_count_; }
  bool has_dropout() const;
  /// Copy of this architecture with every dropout rate replaced.
  Architecture with_dropout_rate(double rate) const;

  nlohmann::json to_json() const;
  static Architecture from_json(const nlohmann::json& doc);

  bool operator==(const Architecture&) const = default;

 private:
  LayerSpec& push(LayerKind kind, Shape out, std::size_t params);

  Shape input_;
  std::vector<LayerSpec> layers_;
  std::size_t parameter_count_ = 0;
};

}  // namespace cfbench::nn

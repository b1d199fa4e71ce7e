#include "cfbench/nn/architecture.hpp"

#include "cfbench/core.hpp"

namespace cfbench::nn {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2D: return "conv2d";
    case LayerKind::MaxPool2: return "maxpool2";
    case LayerKind::Dense: return "dense";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::BoundedOutput: return "bounded_output";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (auto k : {LayerKind::Conv2D, LayerKind::MaxPool2, LayerKind::Dense, LayerKind::ReLU, LayerKind::Dropout,
                 LayerKind::BoundedOutput})
    if (to_string(k) == name) return k;
  throw Error("unknown layer kind '" + name + "'");
}

std::size_t LayerSpec::weight_count() const {
  switch (kind) {
    case LayerKind::Conv2D: return std::size_t(out.channels) * in.channels * kernel * kernel;
    case LayerKind::Dense: return std::size_t(out.size()) * in.size();
    default: return 0;
  }
}

LayerSpec& Architecture::push(LayerKind kind, Shape out, std::size_t params) {
  LayerSpec spec;
  spec.kind = kind;
  spec.in = output();
  spec.out = out;
  spec.param_offset = parameter_count_;
  spec.param_count = params;
  parameter_count_ += params;
  layers_.push_back(spec);
  return layers_.back();
}

Architecture& Architecture::conv(int out_channels, int kernel, int padding) {
  const Shape in = output();
  const Shape out{out_channels, in.height + 2 * padding - kernel + 1, in.width + 2 * padding - kernel + 1};
  if (out.height <= 0 || out.width <= 0) throw Error("conv: kernel larger than padded input");
  auto& spec = push(LayerKind::Conv2D, out,
                    std::size_t(out_channels) * in.channels * kernel * kernel + std::size_t(out_channels));
  spec.kernel = kernel;
  spec.padding = padding;
  return *this;
}

Architecture& Architecture::maxpool() {
  const Shape in = output();
  if (in.height < 2 || in.width < 2) throw Error("maxpool: input too small");
  push(LayerKind::MaxPool2, Shape{in.channels, in.height / 2, in.width / 2}, 0);
  return *this;
}

Architecture& Architecture::dense(int units) {
  const Shape in = output();
  push(LayerKind::Dense, Shape{units, 1, 1}, std::size_t(units) * in.size() + std::size_t(units));
  return *this;
}

Architecture& Architecture::relu() {
  push(LayerKind::ReLU, output(), 0);
  return *this;
}

Architecture& Architecture::dropout(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error("dropout: rate must be in [0, 1)");
  push(LayerKind::Dropout, output(), 0).rate = rate;
  return *this;
}

Architecture& Architecture::bounded_output() {
  push(LayerKind::BoundedOutput, output(), 0);
  return *this;
}

bool Architecture::has_dropout() const {
  for (const auto& l : layers_)
    if (l.kind == LayerKind::Dropout) return true;
  return false;
}

Architecture Architecture::with_dropout_rate(double rate) const {
  Architecture copy = *this;
  for (auto& l : copy.layers_)
    if (l.kind == LayerKind::Dropout) l.rate = rate;
  return copy;
}

nlohmann::json Architecture::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : layers_) {
    nlohmann::json j{{"kind", to_string(l.kind)},
                     {"in", {l.in.channels, l.in.height, l.in.width}},
                     {"out", {l.out.channels, l.out.height, l.out.width}},
                     {"param_offset", l.param_offset},
                     {"param_count", l.param_count}};
    if (l.kind == LayerKind::Conv2D) {
      j["kernel"] = l.kernel;
      j["padding"] = l.padding;
    }
    if (l.kind == LayerKind::Dropout) j["rate"] = l.rate;
    layers.push_back(std::move(j));
  }
  return {{"input", {input_.channels, input_.height, input_.width}},
          {"parameter_count", parameter_count_},
          {"layers", std::move(layers)}};
}

Architecture Architecture::from_json(const nlohmann::json& doc) {
  const auto in = doc.at("input");
  Architecture arch(Shape{in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()});
  for (const auto& j : doc.at("layers")) {
    switch (layer_kind_from_string(j.at("kind").get<std::string>())) {
      case LayerKind::Conv2D:
        arch.conv(j.at("out").at(0).get<int>(), j.at("kernel").get<int>(), j.at("padding").get<int>());
        break;
      case LayerKind::MaxPool2: arch.maxpool(); break;
      case LayerKind::Dense: arch.dense(j.at("out").at(0).get<int>()); break;
      case LayerKind::ReLU: arch.relu(); break;
      case LayerKind::Dropout: arch.dropout(j.at("rate").get<double>()); break;
      case LayerKind::BoundedOutput: arch.bounded_output(); break;
    }
    const auto& added = arch.layers_.back();
    if (added.param_offset != j.at("param_offset").get<std::size_t>() ||
        added.param_count != j.at("param_count").get<std::size_t>())
      throw Error("architecture: layer map does not match its descriptor");
  }
  if (arch.parameter_count_ != doc.at("parameter_count").get<std::size_t>())
    throw Error("architecture: parameter count mismatch");
  return arch;
}

}  // namespace cfbench::nn

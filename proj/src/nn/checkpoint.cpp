#include "cfbench/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace cfbench::nn {
namespace {

constexpr char kMagic[8] = {'C', 'F', 'B', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>((value >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw ParseError("checkpoint: truncated", pos);
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(T{bytes[pos + i]} << (8 * i));
  pos += sizeof(T);
  return value;
}

}  // namespace

const Network<float>& Checkpoint::get(const std::string& name) const {
  for (const auto& e : networks)
    if (e.name == name) return e.network;
  throw Error("checkpoint: no network named '" + name + "'");
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json doc{{"kind", ckpt.kind}, {"metadata", ckpt.metadata}, {"networks", nlohmann::json::array()}};
  std::uint64_t total = 0;
  for (const auto& e : ckpt.networks) {
    const auto count = static_cast<std::uint64_t>(e.network.parameters().size());
    doc["networks"].push_back(
        {{"name", e.name}, {"architecture", e.network.architecture().to_json()}, {"blob_offset", total}, {"param_count", count}});
    total += count;
  }
  const std::string text = doc.dump();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, Checkpoint::kVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  put_le<std::uint64_t>(out, total);
  out.reserve(out.size() + total * 4);
  for (const auto& e : ckpt.networks)
    for (Eigen::Index i = 0; i < e.network.parameters().size(); ++i)
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(e.network.parameters()[i]));
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw ParseError("checkpoint: bad magic", 0);
  std::size_t pos = sizeof(kMagic);
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != Checkpoint::kVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version), 8);
  const auto json_len = get_le<std::uint64_t>(bytes, pos);
  if (pos + json_len > bytes.size()) throw ParseError("checkpoint: truncated layer map", pos);
  const auto doc = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                         bytes.begin() + static_cast<std::ptrdiff_t>(pos + json_len));
  pos += json_len;
  const auto total = get_le<std::uint64_t>(bytes, pos);
  const std::size_t blob = pos;
  if (blob + total * 4 != bytes.size()) throw ParseError("checkpoint: blob size mismatch", blob);

  Checkpoint ckpt;
  ckpt.kind = doc.at("kind").get<std::string>();
  ckpt.metadata = doc.at("metadata");
  for (const auto& n : doc.at("networks")) {
    auto arch = Architecture::from_json(n.at("architecture"));
    const auto offset = n.at("blob_offset").get<std::uint64_t>();
    const auto count = n.at("param_count").get<std::uint64_t>();
    if (count != arch.parameter_count() || offset + count > total) throw ParseError("checkpoint: bad network entry", blob);
    Vec<float> params(static_cast<Eigen::Index>(count));
    std::size_t p = blob + offset * 4;
    for (std::uint64_t i = 0; i < count; ++i)
      params[static_cast<Eigen::Index>(i)] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, p));
    ckpt.networks.push_back({n.at("name").get<std::string>(), Network<float>(std::move(arch), std::move(params))});
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path);
  std::vector<std::uint8_t> bytes(std::istreambuf_iterator<char>(in), {});
  return decode_checkpoint(bytes);
}

}  // namespace cfbench::nn

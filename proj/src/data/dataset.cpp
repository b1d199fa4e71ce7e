#include "cfbench/data/dataset.hpp"

#include "cfbench/hash.hpp"
#include "cfbench/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>

namespace cfbench::data {

namespace fs = std::filesystem;

double scale_pixel(int raw) {
  if (raw < 0 || raw > 255) throw Error("scale_pixel: raw intensity " + std::to_string(raw) + " outside 0..255");
  return static_cast<double>(raw) / 255.0 - 0.5;
}

int unscale_pixel(double scaled) {
  if (!(scaled >= kPixelMin && scaled <= kPixelMax)) throw Error("unscale_pixel: value outside [-0.5, 0.5]");
  return static_cast<int>(std::lround((scaled + 0.5) * 255.0));
}

Image scaled_image(const RawImages& raw, std::size_t column) {
  Image out;
  const auto col = static_cast<Eigen::Index>(column);
  for (int i = 0; i < kPixels; ++i) out.data()[i] = scale_pixel_as<double>(raw(i, col));
  return out;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) throw ParseError("idx: truncated header", offset);
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

}  // namespace

IdxPayload parse_idx(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic == kIdxImagesMagic) {
    const std::uint32_t n = read_be32(bytes, 4);
    const std::uint32_t rows = read_be32(bytes, 8);
    const std::uint32_t cols = read_be32(bytes, 12);
    if (rows != kImageSide || cols != kImageSide) throw ParseError("idx: only 28x28 images are supported", 8);
    const std::size_t expected = 16 + std::size_t{n} * rows * cols;
    if (bytes.size() < expected) throw ParseError("idx: truncated image payload", bytes.size());
    if (bytes.size() > expected) throw ParseError("idx: trailing bytes after image payload", expected);
    IdxImages out;
    out.rows = static_cast<int>(rows);
    out.cols = static_cast<int>(cols);
    out.pixels.resize(kPixels, n);
    std::copy(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(expected), out.pixels.data());
    return out;
  }
  if (magic == kIdxLabelsMagic) {
    const std::uint32_t n = read_be32(bytes, 4);
    const std::size_t expected = 8 + std::size_t{n};
    if (bytes.size() < expected) throw ParseError("idx: truncated label payload", bytes.size());
    if (bytes.size() > expected) throw ParseError("idx: trailing bytes after label payload", expected);
    return std::vector<std::uint8_t>(bytes.begin() + 8, bytes.begin() + static_cast<std::ptrdiff_t>(expected));
  }
  throw ParseError("idx: unknown magic number", 0);
}

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
  auto payload = parse_idx(bytes);
  if (auto* images = std::get_if<IdxImages>(&payload)) return std::move(*images);
  throw ParseError("idx: expected an image file, found labels", 0);
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  auto payload = parse_idx(bytes);
  if (auto* labels = std::get_if<std::vector<std::uint8_t>>(&payload)) return std::move(*labels);
  throw ParseError("idx: expected a label file, found images", 0);
}

// ---------------------------------------------------------------------------
// npy

namespace {

constexpr std::uint8_t kNpyMagic[] = {0x93, 'N', 'U', 'M', 'P', 'Y'};

}  // namespace

RawImages parse_quickdraw_bitmaps(std::span<const std::uint8_t> bytes, const std::string& class_name) {
  const std::string ctx = "quickdraw[" + class_name + "]: ";
  if (bytes.size() < 10) throw ParseError(ctx + "truncated header", bytes.size());
  if (!std::equal(std::begin(kNpyMagic), std::end(kNpyMagic), bytes.begin())) throw ParseError(ctx + "bad magic", 0);
  if (bytes[6] != 1 || bytes[7] != 0) throw ParseError(ctx + "unsupported container version", 6);
  const std::size_t header_len = std::size_t{bytes[8]} | (std::size_t{bytes[9]} << 8);
  if (10 + header_len > bytes.size()) throw ParseError(ctx + "truncated header dictionary", bytes.size());
  const std::string header(bytes.begin() + 10, bytes.begin() + 10 + static_cast<std::ptrdiff_t>(header_len));

  static const std::regex kDescr(R"('descr'\s*:\s*'([^']*)')");
  static const std::regex kOrder(R"('fortran_order'\s*:\s*(True|False))");
  static const std::regex kShape(R"('shape'\s*:\s*\(\s*(\d+)\s*,\s*(\d+)\s*,?\s*\))");
  std::smatch m;
  if (!std::regex_search(header, m, kDescr) || (m[1] != "|u1" && m[1] != "u1" && m[1] != "<u1"))
    throw ParseError(ctx + "element type must be unsigned 8-bit", 10);
  if (!std::regex_search(header, m, kOrder) || m[1] != "False")
    throw ParseError(ctx + "fortran_order must be False", 10);
  if (!std::regex_search(header, m, kShape)) throw ParseError(ctx + "shape must be two-dimensional", 10);
  const std::size_t n = std::stoull(m[1]);
  const std::size_t width = std::stoull(m[2]);
  if (width != static_cast<std::size_t>(kPixels))
    throw ParseError(ctx + "shape must be N x 784, got N x " + std::to_string(width), 10);

  const std::size_t offset = 10 + header_len;
  const std::size_t expected = offset + n * kPixels;
  if (bytes.size() < expected) throw ParseError(ctx + "truncated payload", bytes.size());
  RawImages out(kPixels, static_cast<Eigen::Index>(n));
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.begin() + static_cast<std::ptrdiff_t>(expected),
            out.data());
  return out;
}

std::vector<std::uint8_t> write_npy_u8(const RawImages& images) {
  std::string header = "{'descr': '|u1', 'fortran_order': False, 'shape': (" + std::to_string(images.cols()) +
                       ", 784), }";
  // Pad so that magic + len + header + '\n' is a multiple of 64.
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');
  std::vector<std::uint8_t> out(std::begin(kNpyMagic), std::end(kNpyMagic));
  out.push_back(1);
  out.push_back(0);
  out.push_back(static_cast<std::uint8_t>(header.size() & 0xff));
  out.push_back(static_cast<std::uint8_t>(header.size() >> 8));
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), images.data(), images.data() + images.size());
  return out;
}

// ---------------------------------------------------------------------------
// Splits

void DatasetSplit::validate() const {
  const int k = num_classes();
  if (k < 2) throw Error(name + ": need at least two classes");
  if (static_cast<std::size_t>(train_images.cols()) != train_labels.size())
    throw Error(name + ": train image/label count mismatch");
  if (static_cast<std::size_t>(test_images.cols()) != test_labels.size())
    throw Error(name + ": test image/label count mismatch");
  auto check = [&](const std::vector<int>& labels) {
    for (int y : labels)
      if (y < 0 || y >= k) throw Error(name + ": label " + std::to_string(y) + " outside [0, K)");
  };
  check(train_labels);
  check(test_labels);
}

std::vector<std::size_t> DatasetSplit::train_indices_of(int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < train_labels.size(); ++i)
    if (train_labels[i] == label) out.push_back(i);
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

namespace {

std::vector<int> widen(const std::vector<std::uint8_t>& labels) { return {labels.begin(), labels.end()}; }

DatasetSplit load_idx_split(const std::string& name, const std::string& train_images, const std::string& train_labels,
                            const std::string& test_images, const std::string& test_labels,
                            std::vector<std::string> class_names) {
  DatasetSplit split;
  split.name = name;
  split.train_images = parse_idx_images(read_file_bytes(train_images)).pixels;
  split.train_labels = widen(parse_idx_labels(read_file_bytes(train_labels)));
  split.test_images = parse_idx_images(read_file_bytes(test_images)).pixels;
  split.test_labels = widen(parse_idx_labels(read_file_bytes(test_labels)));
  split.class_names = std::move(class_names);
  split.validate();
  return split;
}

std::vector<std::string> digit_names() {
  std::vector<std::string> names;
  for (int d = 0; d < 10; ++d) names.push_back(std::to_string(d));
  return names;
}

}  // namespace

DatasetSplit load_mnist(const std::string& dir) {
  const fs::path root(dir);
  return load_idx_split("mnist", (root / "train-images-idx3-ubyte").string(), (root / "train-labels-idx1-ubyte").string(),
                        (root / "t10k-images-idx3-ubyte").string(), (root / "t10k-labels-idx1-ubyte").string(),
                        digit_names());
}

DatasetSplit split_quickdraw(const std::vector<RawImages>& per_class_images, const std::vector<std::string>& classes,
                             std::size_t per_class, double test_fraction) {
  if (per_class_images.size() != classes.size()) throw Error("quickdraw: class/image block count mismatch");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error("quickdraw: test fraction must be in (0, 1)");
  DatasetSplit split;
  split.name = "quickdraw";
  split.class_names = classes;
  std::vector<std::pair<int, Eigen::Index>> train_refs, test_refs;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto available = static_cast<std::size_t>(per_class_images[c].cols());
    if (available < per_class)
      throw Error("quickdraw: class '" + classes[c] + "' has " + std::to_string(available) + " images, need " +
                  std::to_string(per_class));
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(per_class) * test_fraction));
    for (std::size_t i = 0; i < per_class; ++i) {
      auto& dst = i < per_class - n_test ? train_refs : test_refs;
      dst.emplace_back(static_cast<int>(c), static_cast<Eigen::Index>(i));
    }
  }
  auto gather = [&](const auto& refs, RawImages& images, std::vector<int>& labels) {
    images.resize(kPixels, static_cast<Eigen::Index>(refs.size()));
    labels.resize(refs.size());
    for (std::size_t j = 0; j < refs.size(); ++j) {
      images.col(static_cast<Eigen::Index>(j)) = per_class_images[refs[j].first].col(refs[j].second);
      labels[j] = refs[j].first;
    }
  };
  gather(train_refs, split.train_images, split.train_labels);
  gather(test_refs, split.test_images, split.test_labels);
  split.validate();
  return split;
}

DatasetSplit load_quickdraw(const std::string& dir, const std::vector<std::string>& classes, std::size_t per_class,
                            double test_fraction) {
  std::vector<RawImages> blocks;
  for (const auto& c : classes)
    blocks.push_back(parse_quickdraw_bitmaps(read_file_bytes((fs::path(dir) / (c + ".npy")).string()), c));
  return split_quickdraw(blocks, classes, per_class, test_fraction);
}

DatasetSplit load_from_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error("cannot open dataset manifest " + manifest_path);
  const auto doc = nlohmann::json::parse(in);
  const fs::path base = fs::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (base / p).string(); };
  const std::string format = doc.at("format").get<std::string>();
  if (format == "idx") {
    return load_idx_split(doc.value("dataset", std::string("idx")), resolve(doc.at("train_images")),
                          resolve(doc.at("train_labels")), resolve(doc.at("test_images")),
                          resolve(doc.at("test_labels")), doc.at("class_names").get<std::vector<std::string>>());
  }
  if (format == "npy") {
    std::vector<std::string> classes;
    std::vector<RawImages> blocks;
    const auto& files = doc.at("class_files");
    const auto names = doc.contains("class_names") ? doc.at("class_names").get<std::vector<std::string>>()
                                                   : quickdraw_default_classes();
    for (const auto& c : names) {
      classes.push_back(c);
      blocks.push_back(parse_quickdraw_bitmaps(read_file_bytes(resolve(files.at(c).get<std::string>())), c));
    }
    auto split = split_quickdraw(blocks, classes, doc.value("per_class", std::size_t{7000}),
                                 doc.value("test_fraction", 0.1));
    split.name = doc.value("dataset", std::string("quickdraw"));
    return split;
  }
  throw ConfigError("dataset manifest: unknown format '" + format + "'");
}

std::string data_root_from_env() {
  const char* env = std::getenv("CFBENCH_DATA_DIR");
  return env ? std::string(env) : std::string("data");
}

DatasetSplit load_dataset(const std::string& dataset_id, const std::string& data_root) {
  const fs::path root = data_root.empty() ? fs::path(data_root_from_env()) : fs::path(data_root);
  const fs::path manifest = root / dataset_id / "manifest.json";
  if (fs::exists(manifest)) return load_from_manifest(manifest.string());
  if (dataset_id == "mnist") return load_mnist((root / "mnist").string());
  if (dataset_id == "quickdraw") return load_quickdraw((root / "quickdraw").string());
  throw ConfigError("unknown dataset id '" + dataset_id + "'");
}

// ---------------------------------------------------------------------------
// Sampling

std::string item_id_for(const std::string& dataset, std::size_t test_index) {
  return sha256_hex(dataset + ":test:" + std::to_string(test_index)).substr(0, 16);
}

std::vector<std::size_t> misclassified_pool(const DatasetSplit& split, std::span<const int> predicted_test_labels) {
  if (predicted_test_labels.size() != split.test_labels.size())
    throw Error("misclassified_pool: prediction count does not match test set");
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < predicted_test_labels.size(); ++i)
    if (predicted_test_labels[i] != split.test_labels[i]) pool.push_back(i);
  return pool;
}

std::vector<MisclassifiedItem> sample_misclassifications(const DatasetSplit& split,
                                                         std::span<const int> predicted_test_labels, std::size_t n,
                                                         std::uint64_t seed) {
  auto pool = misclassified_pool(split, predicted_test_labels);
  if (n > pool.size())
    throw Error("sample_misclassifications: requested " + std::to_string(n) + " items but the pool has only " +
                std::to_string(pool.size()));
  Rng rng(seed);
  // Partial Fisher-Yates: the first n positions are a uniform sample.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + uniform_index(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  std::vector<MisclassifiedItem> items;
  items.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = pool[i];
    MisclassifiedItem item;
    item.item_id = item_id_for(split.name, t);
    item.test_index = t;
    item.query = scaled_image(split.test_images, t);
    item.true_label = split.test_labels[t];
    item.predicted_label = predicted_test_labels[t];
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace cfbench::data

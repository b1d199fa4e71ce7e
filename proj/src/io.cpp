#include "cfbench/io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace cfbench {

namespace {

constexpr char kImageMagic[8] = {'C', 'F', 'B', 'I', 'M', 'G', '0', '1'};

static_assert(std::endian::native == std::endian::little, "blob formats assume a little-endian host");

}  // namespace

void write_images(const std::string& path, const std::vector<Image>& images) {
  std::string buf(kImageMagic, 8);
  const std::uint64_t n = images.size();
  buf.append(reinterpret_cast<const char*>(&n), 8);
  for (const Image& im : images) buf.append(reinterpret_cast<const char*>(im.data()), sizeof(double) * kPixels);
  write_text_atomic(path, buf);
}

std::vector<Image> read_images(const std::string& path) {
  const std::string buf = read_text(path);
  if (buf.size() < 16 || std::memcmp(buf.data(), kImageMagic, 8) != 0)
    throw ParseError("image blob " + path + ": bad magic", 0);
  std::uint64_t n = 0;
  std::memcpy(&n, buf.data() + 8, 8);
  const std::size_t expect = 16 + n * sizeof(double) * kPixels;
  if (buf.size() != expect)
    throw ParseError("image blob " + path + ": expected " + std::to_string(expect) + " bytes, found " +
                         std::to_string(buf.size()),
                     std::min(buf.size(), expect));
  std::vector<Image> out(n);
  for (std::uint64_t i = 0; i < n; ++i)
    std::memcpy(out[i].data(), buf.data() + 16 + i * sizeof(double) * kPixels, sizeof(double) * kPixels);
  return out;
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, p);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace cfbench

#include "ccgan/frame_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ccgan/errors.hpp"

namespace ccgan {
namespace {

constexpr std::array<std::uint8_t, 8> kMagic = {'C', 'C', 'G', 'E', 'N', 'V', 0, 1};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kDtypeF32 = 1;

static_assert(std::endian::native == std::endian::little,
              "frame container I/O assumes a little-endian host");

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <class T>
T get(const std::vector<std::uint8_t>& in, std::size_t offset) {
  T v;
  std::memcpy(&v, in.data() + offset, sizeof(T));
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_container(const FrameContainer& c) {
  if (c.planes.empty()) throw DataError("frame container needs at least one plane");
  const auto rows = c.planes.front().rows();
  const auto cols = c.planes.front().cols();
  for (const auto& p : c.planes) {
    if (p.rows() != rows || p.cols() != cols) throw DataError("frame container planes differ in shape");
  }
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  out.reserve(kFrameHeaderBytes + c.planes.size() * rows * cols * sizeof(float));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, kDtypeF32);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.planes.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(rows));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cols));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.domain));
  put<std::uint32_t>(out, c.frame_index);
  put<std::uint32_t>(out, 0);
  put<double>(out, c.axial_spacing);
  put<double>(out, c.lateral_spacing);
  for (const auto& p : c.planes) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(p.data());
    out.insert(out.end(), bytes, bytes + p.size() * sizeof(float));
  }
  return out;
}

FrameContainer decode_container(const std::vector<std::uint8_t>& in) {
  if (in.size() < kFrameHeaderBytes || !std::equal(kMagic.begin(), kMagic.end(), in.begin())) {
    throw DataError("not a frame container (bad magic)");
  }
  if (get<std::uint32_t>(in, 8) != kVersion) throw DataError("unsupported frame container version");
  if (get<std::uint32_t>(in, 12) != kDtypeF32) throw DataError("unsupported frame container dtype");
  const auto planes = get<std::uint32_t>(in, 16);
  const auto rows = get<std::uint32_t>(in, 20);
  const auto cols = get<std::uint32_t>(in, 24);
  const auto domain = get<std::uint32_t>(in, 28);
  if (domain > 2) throw DataError("bad domain tag in frame container");
  const std::size_t plane_bytes = std::size_t{rows} * cols * sizeof(float);
  if (planes == 0 || in.size() != kFrameHeaderBytes + planes * plane_bytes) {
    throw DataError("frame container size does not match its header");
  }
  FrameContainer c;
  c.frame_index = get<std::uint32_t>(in, 32);
  c.domain = static_cast<Domain>(domain);
  c.axial_spacing = get<double>(in, 40);
  c.lateral_spacing = get<double>(in, 48);
  for (std::uint32_t p = 0; p < planes; ++p) {
    Grid<float> g(rows, cols);
    std::memcpy(g.data(), in.data() + kFrameHeaderBytes + p * plane_bytes, plane_bytes);
    c.planes.push_back(std::move(g));
  }
  return c;
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + tmp.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("rename failed for " + path.string() + ": " + ec.message());
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void write_container(const std::filesystem::path& path, const FrameContainer& c) {
  write_file_atomic(path, encode_container(c));
}

FrameContainer read_container(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open frame " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_container(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_frame(const std::filesystem::path& path, const EnvelopeImage& img) {
  FrameContainer c;
  Grid<float> g(img.rows(), img.cols());
  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = static_cast<float>(img.samples.data()[i]);
  c.planes.push_back(std::move(g));
  c.axial_spacing = img.axial_spacing;
  c.lateral_spacing = img.lateral_spacing;
  c.domain = img.domain;
  c.frame_index = img.frame_index;
  write_container(path, c);
}

EnvelopeImage read_frame(const std::filesystem::path& path) {
  auto c = read_container(path);
  if (c.planes.size() != 1) throw DataError(path.string() + ": expected a single-plane envelope frame");
  const auto& g = c.planes.front();
  EnvelopeImage img;
  img.samples = Grid<double>(g.rows(), g.cols());
  for (std::size_t i = 0; i < g.size(); ++i) img.samples.data()[i] = g.data()[i];
  img.axial_spacing = c.axial_spacing;
  img.lateral_spacing = c.lateral_spacing;
  img.domain = c.domain;
  img.frame_index = c.frame_index;
  return img;
}

}  // namespace ccgan

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ccgan/envelope_image.hpp"

namespace ccgan {

// Binary frame container, little-endian:
//
//   offset  size  field
//   0       8     magic "CCGENV\0\1"
//   8       4     u32 format version (1)
//   12      4     u32 dtype (1 = float32)
//   16      4     u32 plane count
//   20      4     u32 rows (axial)
//   24      4     u32 cols (lateral)
//   28      4     u32 domain tag (0 phased, 1 linear, 2 generated)
//   32      4     u32 frame index
//   36      4     u32 reserved (0)
//   40      8     f64 axial spacing, mm
//   48      8     f64 lateral spacing, mm
//   56      ...   planes x rows x cols float32, row-major, plane-major
//
// Envelope frames use one plane. Displacement fields use three
// (axial, lateral, correlation).
struct FrameContainer {
  std::vector<Grid<float>> planes;
  double axial_spacing = 1.0;
  double lateral_spacing = 1.0;
  Domain domain = Domain::phased;
  std::uint32_t frame_index = 0;
};

inline constexpr std::size_t kFrameHeaderBytes = 56;

std::vector<std::uint8_t> encode_container(const FrameContainer& c);
FrameContainer decode_container(const std::vector<std::uint8_t>& bytes);

void write_container(const std::filesystem::path& path, const FrameContainer& c);
FrameContainer read_container(const std::filesystem::path& path);

void write_frame(const std::filesystem::path& path, const EnvelopeImage& img);
EnvelopeImage read_frame(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace ccgan

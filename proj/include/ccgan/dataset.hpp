#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ccgan/envelope_image.hpp"

namespace ccgan {

struct ManifestRecord {
  std::filesystem::path path;
  Domain domain = Domain::phased;
  std::uint32_t frame_index = 0;
};

// Plain text, one record per line: "<path> <domain_tag> <frame_index>".
// Blank lines and lines starting with '#' are skipped. Relative paths are
// resolved against the manifest's directory on load.
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

/// Two unpaired collections; index i of one has nothing to do with index i of the other.
struct UnpairedDataset {
  std::vector<EnvelopeImage> domain_a;  // phased
  std::vector<EnvelopeImage> domain_b;  // linear
};

/// Loads every frame of a manifest into the two domain collections, checking
/// that all frames share one shape. Frames tagged "generated" are rejected.
UnpairedDataset load_unpaired(const std::filesystem::path& manifest);

/// Number of frames held out for validation: floor(n * fraction).
std::size_t validation_count(std::size_t n, double fraction);

}  // namespace ccgan

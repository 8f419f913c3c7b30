#include "ccgan/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ccgan/errors.hpp"
#include "ccgan/frame_io.hpp"

namespace ccgan {

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<ManifestRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    std::istringstream ss(line);
    std::string p, tag;
    long long index = -1;
    if (!(ss >> p >> tag >> index) || index < 0) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed manifest record");
    }
    ManifestRecord r;
    r.path = std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base / p;
    r.domain = domain_from_string(tag);
    r.frame_index = static_cast<std::uint32_t>(index);
    out.push_back(std::move(r));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::ostringstream ss;
  ss << "# path domain_tag frame_index\n";
  const auto base = path.parent_path();
  for (const auto& r : records) {
    auto p = r.path;
    if (p.is_absolute() && !base.empty()) p = std::filesystem::relative(p, std::filesystem::absolute(base));
    ss << p.generic_string() << ' ' << to_string(r.domain) << ' ' << r.frame_index << '\n';
  }
  write_text_atomic(path, ss.str());
}

UnpairedDataset load_unpaired(const std::filesystem::path& manifest) {
  UnpairedDataset ds;
  std::size_t rows = 0, cols = 0;
  for (const auto& rec : read_manifest(manifest)) {
    auto img = read_frame(rec.path);
    if (rows == 0) {
      rows = img.rows();
      cols = img.cols();
    } else if (img.rows() != rows || img.cols() != cols) {
      throw DataError("frame " + rec.path.string() + " does not share the dataset frame shape");
    }
    img.domain = rec.domain;
    img.frame_index = rec.frame_index;
    switch (rec.domain) {
      case Domain::phased:
        ds.domain_a.push_back(std::move(img));
        break;
      case Domain::linear:
        ds.domain_b.push_back(std::move(img));
        break;
      case Domain::generated:
        throw DataError("training manifests may not contain generated frames: " + rec.path.string());
    }
  }
  return ds;
}

std::size_t validation_count(std::size_t n, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("validation_fraction must be in [0, 1)");
  // The small epsilon keeps exact products such as 0.1 * 2130 from flooring low.
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction + 1e-9));
}

}  // namespace ccgan

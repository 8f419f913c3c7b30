#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ccgan/envelope_image.hpp"
#include "ccgan/metrics.hpp"

namespace ccgan {

struct TrackingConfig {
  int kernel_axial = 32;   // samples
  int kernel_lateral = 8;
  int search_axial = 8;    // +/- samples
  int search_lateral = 4;
  int step_axial = 8;      // node spacing
  int step_lateral = 2;
  bool subsample_fit = true;
  int iterations = 1;      // track -> warp passes

  void validate() const;
};

std::string describe(const TrackingConfig& cfg);

/// Node-sampled displacement of `post` relative to `pre`, in samples.
/// Invalid nodes (flat kernel) hold NaN displacements and correlation.
struct DisplacementField {
  double row0 = 0.0, col0 = 0.0;  // sample coordinates of node (0, 0)
  double row_step = 1.0, col_step = 1.0;
  Grid<double> axial;             // samples
  Grid<double> lateral;           // samples
  Grid<double> correlation;
  Grid<std::uint8_t> valid;
  double axial_spacing = 1.0;     // mm per sample of the tracked frames
  double lateral_spacing = 1.0;

  std::size_t node_rows() const { return axial.rows(); }
  std::size_t node_cols() const { return axial.cols(); }
  double node_row(std::size_t i) const { return row0 + row_step * static_cast<double>(i); }
  double node_col(std::size_t j) const { return col0 + col_step * static_cast<double>(j); }
  double axial_mm(std::size_t i, std::size_t j) const { return axial(i, j) * axial_spacing; }
  double lateral_mm(std::size_t i, std::size_t j) const { return lateral(i, j) * lateral_spacing; }
  std::size_t valid_count() const;
  bool same_grid(const DisplacementField& o) const;
};

/// Zero-normalized cross-correlation block matching over integer lags, with
/// optional 1-D parabolic refinement per axis around the best lag. A match
/// with correlation 1 (to rounding) is exact and is not refined.
DisplacementField track(const EnvelopeImage& pre, const EnvelopeImage& post, const TrackingConfig& cfg);

/// Per-sample displacement by bilinear interpolation between nodes, clamped
/// to the node hull. Invalid nodes take the median of the valid ones.
struct DenseField {
  Grid<double> axial, lateral;  // samples
};
DenseField densify(const DisplacementField& field, std::size_t rows, std::size_t cols);

struct CorrectedFrame {
  EnvelopeImage image;
  Grid<std::uint8_t> valid;  // 0 where the warp sampled outside the frame
};

/// corrected(r, c) = post(r + u_axial, c + u_lateral), bilinear.
CorrectedFrame motion_correct(const EnvelopeImage& post, const DisplacementField& field);

/// Tracks, warps, and re-tracks the residual for cfg.iterations passes;
/// returns the accumulated field and the final corrected frame.
struct TrackResult {
  DisplacementField field;
  CorrectedFrame corrected;
};
TrackResult track_and_correct(const EnvelopeImage& pre, const EnvelopeImage& post, const TrackingConfig& cfg);

/// Boolean mask over a frame.
struct RoiMask {
  std::string name;
  Grid<std::uint8_t> mask;
  std::size_t count() const;
};
RoiMask mask_from_rect(const RoiRect& rect, const EnvelopeImage& frame);
RoiMask full_mask(const EnvelopeImage& frame);

/// Root mean squared difference over mask samples where `valid` is set.
/// Throws MetricError if no sample remains.
double rmsd(const EnvelopeImage& pre, const EnvelopeImage& corrected, const RoiMask& mask,
            const Grid<std::uint8_t>* valid = nullptr);
double rmsd(const EnvelopeImage& pre, const CorrectedFrame& corrected, const RoiMask& mask);

struct FieldSsim {
  double axial = 0.0;
  double lateral = 0.0;
};

/// SSIM maps of each displacement component on the node grid, averaged over
/// nodes that lie in the mask and are valid in both fields. The data range
/// is the reference component's range (1 if flat).
FieldSsim field_ssim(const DisplacementField& reference, const DisplacementField& candidate, const RoiMask& mask);

/// Three planes (axial, lateral, correlation) in the frame container with
/// node pitch in mm as spacings, plus "<path>.grid" holding the node layout.
void write_field(const std::filesystem::path& path, const DisplacementField& field, std::uint32_t index = 0);
DisplacementField read_field(const std::filesystem::path& path);

inline constexpr const char* kTrackingColumns =
    "source,pair,mask,valid_nodes,mean_axial_mm,mean_lateral_mm,mean_correlation,rmsd_before,rmsd_after";
inline constexpr const char* kFieldSsimColumns = "source,reference,pair,mask,ssim_axial,ssim_lateral";

}  // namespace ccgan

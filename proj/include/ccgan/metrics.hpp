#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ccgan/envelope_image.hpp"

namespace ccgan {

enum class Direction { axial, lateral };

/// FWHM of a 1-D profile through its unique maximum, in units of `spacing`.
/// The profile is upsampled 10x by linear interpolation and the half-maximum
/// crossings on each side are located by linear interpolation.
/// Throws MetricError "ambiguous peak" or "target clipped by ROI".
double fwhm_profile(std::span<const double> profile, double spacing);

/// FWHM in mm of the profile through the ROI's peak sample.
double fwhm(const EnvelopeImage& roi, Direction direction);

/// Rectangle in mm; axial/lateral give the top-left corner.
struct RoiRect {
  std::string name;
  double axial_mm = 0.0;
  double lateral_mm = 0.0;
  double axial_extent_mm = 0.0;
  double lateral_extent_mm = 0.0;
};

/// One rectangle per line: "name axial_mm lateral_mm axial_extent_mm lateral_extent_mm".
std::vector<RoiRect> read_roi_file(const std::filesystem::path& path);
void write_roi_file(const std::filesystem::path& path, const std::vector<RoiRect>& rois);

/// Sample index range covered by a rectangle, clipped to the frame. Throws
/// MetricError if nothing remains.
struct PixelRect {
  std::size_t r0 = 0, c0 = 0, rows = 0, cols = 0;
};
PixelRect to_pixels(const RoiRect& roi, const EnvelopeImage& frame);
EnvelopeImage crop(const EnvelopeImage& frame, const PixelRect& rect);

struct ResolutionMeasurement {
  std::size_t target_id = 0;
  double axial_fwhm = 0.0;    // mm
  double lateral_fwhm = 0.0;  // mm
  double peak_axial_mm = 0.0;
  double peak_lateral_mm = 0.0;
};

/// Centres a roi_axial x roi_lateral mm window on the nominal target position
/// and measures both FWHMs through the window's peak.
ResolutionMeasurement measure_target(const EnvelopeImage& frame, std::size_t target_id, double axial_mm,
                                     double lateral_mm, double roi_axial_mm = 4.0, double roi_lateral_mm = 4.0);

struct NakagamiEstimate {
  double m = 0.0;
  std::string roi;
  std::size_t samples = 0;
};

inline constexpr std::size_t kNakagamiMinSamples = 100;

/// Moment estimator m = E[R^2]^2 / Var(R^2), population variance.
NakagamiEstimate nakagami_m(std::span<const double> samples, std::string roi = {});
NakagamiEstimate nakagami_m(const EnvelopeImage& frame, const RoiRect& roi);

/// Local SSIM map with an 11x11 Gaussian window (sigma 1.5), C1 = (0.01 L)^2,
/// C2 = (0.03 L)^2, population statistics and mirrored borders.
Grid<double> ssim_map(const Grid<double>& x, const Grid<double>& y, double data_range = 1.0);
/// Mean of the map after dropping a 5-sample border. Frames must be at least 11x11.
double ssim(const Grid<double>& x, const Grid<double>& y, double data_range = 1.0);
double ssim(const EnvelopeImage& x, const EnvelopeImage& y);

/// 10 log10(L^2 / MSE); +infinity when the frames are identical.
double psnr(const Grid<double>& x, const Grid<double>& y, double data_range = 1.0);
double psnr(const EnvelopeImage& x, const EnvelopeImage& y);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
  std::size_t n = 0;
};
MeanStd mean_std(std::span<const double> v);

struct PairedTTest {
  double mean_difference = 0.0;  // mean(a - b)
  double t = 0.0;
  double dof = 0.0;
  double p_two_sided = 1.0;
};
/// Student's paired t-test on equal-length samples (n >= 2).
PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b);

/// CSV cell for a double: %.10g, with "inf"/"-inf"/"nan".
std::string csv_number(double v);

inline constexpr const char* kResolutionColumns =
    "source,frame_index,target_id,depth_mm,axial_fwhm_mm,lateral_fwhm_mm,peak_axial_mm,peak_lateral_mm,status";
inline constexpr const char* kResolutionSummaryColumns =
    "source,target_id,depth_mm,axial_fwhm_mean_mm,axial_fwhm_std_mm,lateral_fwhm_mean_mm,lateral_fwhm_std_mm,frames,failed";
inline constexpr const char* kNakagamiColumns = "source,frame_index,roi,m,samples";
inline constexpr const char* kNakagamiSummaryColumns = "source,roi,m_mean,m_std,frames";
inline constexpr const char* kImageQualityColumns = "source,frame_index,ssim,psnr_db";
inline constexpr const char* kTTestColumns = "metric,group,comparison,mean_difference,t,dof,p_two_sided";

}  // namespace ccgan

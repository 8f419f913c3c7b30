#include "ccgan/metrics.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "ccgan/errors.hpp"
#include "ccgan/frame_io.hpp"

namespace ccgan {

// FWHM ---------------------------------------------------------------------

double fwhm_profile(std::span<const double> profile, double spacing) {
  if (profile.size() < 3) throw MetricError("profile too short for a FWHM");
  if (!(spacing > 0.0)) throw MetricError("FWHM needs a positive sample spacing");
  const auto peak_it = std::max_element(profile.begin(), profile.end());
  const double peak = *peak_it;
  if (!(peak > 0.0) || !std::isfinite(peak)) throw MetricError("profile has no positive peak");
  if (std::count(profile.begin(), profile.end(), peak) > 1) throw MetricError("ambiguous peak");
  const auto p = static_cast<std::size_t>(peak_it - profile.begin());

  constexpr std::size_t kUp = 10;
  const std::size_t n = (profile.size() - 1) * kUp + 1;
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i / kUp;
    const double f = static_cast<double>(i % kUp) / kUp;
    u[i] = f == 0.0 ? profile[k] : std::lerp(profile[k], profile[k + 1], f);
  }
  const double half = 0.5 * peak;
  const std::size_t centre = p * kUp;

  std::size_t i = centre;
  while (i > 0 && u[i] > half) --i;
  if (u[i] > half) throw MetricError("target clipped by ROI");
  const double left = static_cast<double>(i) + (half - u[i]) / (u[i + 1] - u[i]);

  std::size_t j = centre;
  while (j + 1 < n && u[j] > half) ++j;
  if (u[j] > half) throw MetricError("target clipped by ROI");
  const double right = static_cast<double>(j) - (half - u[j]) / (u[j - 1] - u[j]);

  return (right - left) / kUp * spacing;
}

namespace {

struct Peak {
  std::size_t r = 0, c = 0;
};

Peak unique_peak(const Grid<double>& g) {
  if (g.empty()) throw MetricError("empty ROI");
  const auto vals = g.values();
  const auto it = std::max_element(vals.begin(), vals.end());
  if (std::count(vals.begin(), vals.end(), *it) > 1) throw MetricError("ambiguous peak");
  const auto idx = static_cast<std::size_t>(it - vals.begin());
  return {idx / g.cols(), idx % g.cols()};
}

}  // namespace

double fwhm(const EnvelopeImage& roi, Direction direction) {
  const auto pk = unique_peak(roi.samples);
  std::vector<double> profile;
  if (direction == Direction::axial) {
    for (std::size_t r = 0; r < roi.rows(); ++r) profile.push_back(roi.samples(r, pk.c));
    return fwhm_profile(profile, roi.axial_spacing);
  }
  for (std::size_t c = 0; c < roi.cols(); ++c) profile.push_back(roi.samples(pk.r, c));
  return fwhm_profile(profile, roi.lateral_spacing);
}

// ROI files ----------------------------------------------------------------

std::vector<RoiRect> read_roi_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open ROI file " + path.string());
  std::vector<RoiRect> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    RoiRect r;
    if (!(ss >> r.name >> r.axial_mm >> r.lateral_mm >> r.axial_extent_mm >> r.lateral_extent_mm) ||
        !(r.axial_extent_mm > 0.0) || !(r.lateral_extent_mm > 0.0)) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed ROI record");
    }
    out.push_back(std::move(r));
  }
  if (out.empty()) throw DataError("ROI file " + path.string() + " defines no ROI");
  return out;
}

void write_roi_file(const std::filesystem::path& path, const std::vector<RoiRect>& rois) {
  std::ostringstream ss;
  ss.precision(10);
  ss << "# name axial_mm lateral_mm axial_extent_mm lateral_extent_mm\n";
  for (const auto& r : rois) {
    ss << r.name << ' ' << r.axial_mm << ' ' << r.lateral_mm << ' ' << r.axial_extent_mm << ' '
       << r.lateral_extent_mm << '\n';
  }
  write_text_atomic(path, ss.str());
}

PixelRect to_pixels(const RoiRect& roi, const EnvelopeImage& frame) {
  const double eps = 1e-9;
  const long rows = static_cast<long>(frame.rows());
  const long cols = static_cast<long>(frame.cols());
  const long r0 = std::max(0L, static_cast<long>(std::ceil(roi.axial_mm / frame.axial_spacing - eps)));
  const long c0 = std::max(0L, static_cast<long>(std::ceil(roi.lateral_mm / frame.lateral_spacing - eps)));
  const long r1 = std::min(rows - 1,
                           static_cast<long>(std::floor((roi.axial_mm + roi.axial_extent_mm) / frame.axial_spacing + eps)));
  const long c1 = std::min(cols - 1, static_cast<long>(std::floor(
                                         (roi.lateral_mm + roi.lateral_extent_mm) / frame.lateral_spacing + eps)));
  if (r1 < r0 || c1 < c0) throw MetricError("ROI '" + roi.name + "' does not overlap the frame");
  return {static_cast<std::size_t>(r0), static_cast<std::size_t>(c0), static_cast<std::size_t>(r1 - r0 + 1),
          static_cast<std::size_t>(c1 - c0 + 1)};
}

EnvelopeImage crop(const EnvelopeImage& frame, const PixelRect& rect) {
  EnvelopeImage out = frame;
  out.samples = Grid<double>(rect.rows, rect.cols);
  for (std::size_t r = 0; r < rect.rows; ++r) {
    for (std::size_t c = 0; c < rect.cols; ++c) out.samples(r, c) = frame.samples(rect.r0 + r, rect.c0 + c);
  }
  return out;
}

ResolutionMeasurement measure_target(const EnvelopeImage& frame, std::size_t target_id, double axial_mm,
                                     double lateral_mm, double roi_axial_mm, double roi_lateral_mm) {
  const RoiRect rect{"target" + std::to_string(target_id), axial_mm - roi_axial_mm / 2, lateral_mm - roi_lateral_mm / 2,
                     roi_axial_mm, roi_lateral_mm};
  const auto px = to_pixels(rect, frame);
  const auto roi = crop(frame, px);
  const auto pk = unique_peak(roi.samples);
  ResolutionMeasurement m;
  m.target_id = target_id;
  m.axial_fwhm = fwhm(roi, Direction::axial);
  m.lateral_fwhm = fwhm(roi, Direction::lateral);
  m.peak_axial_mm = static_cast<double>(px.r0 + pk.r) * frame.axial_spacing;
  m.peak_lateral_mm = static_cast<double>(px.c0 + pk.c) * frame.lateral_spacing;
  return m;
}

// Nakagami -----------------------------------------------------------------

NakagamiEstimate nakagami_m(std::span<const double> samples, std::string roi) {
  if (samples.size() < kNakagamiMinSamples) {
    throw MetricError("Nakagami estimate needs at least " + std::to_string(kNakagamiMinSamples) + " samples, got " +
                      std::to_string(samples.size()));
  }
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double r : samples) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw MetricError("Nakagami samples must be finite and non-negative");
    mean += r * r;
  }
  mean /= n;
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  if (*lo == *hi) throw MetricError("constant ROI");
  double var = 0.0;
  for (double r : samples) {
    const double d = r * r - mean;
    var += d * d;
  }
  var /= n;
  if (!(var > 0.0)) throw MetricError("constant ROI");
  return {mean * mean / var, std::move(roi), samples.size()};
}

NakagamiEstimate nakagami_m(const EnvelopeImage& frame, const RoiRect& roi) {
  const auto px = to_pixels(roi, frame);
  std::vector<double> v;
  v.reserve(px.rows * px.cols);
  for (std::size_t r = 0; r < px.rows; ++r) {
    for (std::size_t c = 0; c < px.cols; ++c) v.push_back(frame.samples(px.r0 + r, px.c0 + c));
  }
  return nakagami_m(v, roi.name);
}

// SSIM / PSNR --------------------------------------------------------------

namespace {

constexpr double kSsimSigma = 1.5;
constexpr int kSsimRadius = 5;  // int(3.5 * sigma + 0.5)

std::size_t mirror(long i, long n) {
  // Half-sample symmetric: d c b a | a b c d | d c b a
  const long period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < n ? i : period - 1 - i);
}

std::vector<double> gaussian_taps() {
  std::vector<double> k(2 * kSsimRadius + 1);
  double sum = 0.0;
  for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
    k[static_cast<std::size_t>(i + kSsimRadius)] = std::exp(-0.5 * i * i / (kSsimSigma * kSsimSigma));
    sum += k[static_cast<std::size_t>(i + kSsimRadius)];
  }
  for (auto& v : k) v /= sum;
  return k;
}

Grid<double> blur(const Grid<double>& g) {
  static const auto taps = gaussian_taps();
  const long rows = static_cast<long>(g.rows()), cols = static_cast<long>(g.cols());
  Grid<double> tmp(g.rows(), g.cols()), out(g.rows(), g.cols());
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      double s = 0.0;
      for (int k = -kSsimRadius; k <= kSsimRadius; ++k) {
        s += taps[static_cast<std::size_t>(k + kSsimRadius)] * g(static_cast<std::size_t>(r), mirror(c + k, cols));
      }
      tmp(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = s;
    }
  }
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      double s = 0.0;
      for (int k = -kSsimRadius; k <= kSsimRadius; ++k) {
        s += taps[static_cast<std::size_t>(k + kSsimRadius)] * tmp(mirror(r + k, rows), static_cast<std::size_t>(c));
      }
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = s;
    }
  }
  return out;
}

void require_same(const Grid<double>& x, const Grid<double>& y, const char* what) {
  if (!x.same_shape(y)) throw MetricError(std::string(what) + ": frames differ in shape");
  if (x.empty()) throw MetricError(std::string(what) + ": empty frame");
}

}  // namespace

Grid<double> ssim_map(const Grid<double>& x, const Grid<double>& y, double data_range) {
  require_same(x, y, "ssim");
  if (!(data_range > 0.0)) throw MetricError("ssim: data range must be > 0");
  Grid<double> xx(x.rows(), x.cols()), yy(x.rows(), x.cols()), xy(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx.data()[i] = x.data()[i] * x.data()[i];
    yy.data()[i] = y.data()[i] * y.data()[i];
    xy.data()[i] = x.data()[i] * y.data()[i];
  }
  const auto ux = blur(x), uy = blur(y), uxx = blur(xx), uyy = blur(yy), uxy = blur(xy);
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  Grid<double> s(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double mx = ux.data()[i], my = uy.data()[i];
    const double vx = uxx.data()[i] - mx * mx;
    const double vy = uyy.data()[i] - my * my;
    const double vxy = uxy.data()[i] - mx * my;
    s.data()[i] = ((2 * mx * my + c1) * (2 * vxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  }
  return s;
}

double ssim(const Grid<double>& x, const Grid<double>& y, double data_range) {
  require_same(x, y, "ssim");
  const std::size_t win = 2 * kSsimRadius + 1;
  if (x.rows() < win || x.cols() < win) throw MetricError("ssim: frame smaller than the 11x11 window");
  const auto s = ssim_map(x, y, data_range);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t r = kSsimRadius; r + kSsimRadius < x.rows(); ++r) {
    for (std::size_t c = kSsimRadius; c + kSsimRadius < x.cols(); ++c) {
      sum += s(r, c);
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

double ssim(const EnvelopeImage& x, const EnvelopeImage& y) { return ssim(x.samples, y.samples, 1.0); }

double psnr(const Grid<double>& x, const Grid<double>& y, double data_range) {
  require_same(x, y, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.data()[i] - y.data()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

double psnr(const EnvelopeImage& x, const EnvelopeImage& y) { return psnr(x.samples, y.samples, 1.0); }

// Reporting helpers ---------------------------------------------------------

MeanStd mean_std(std::span<const double> v) {
  MeanStd out;
  out.n = v.size();
  if (v.empty()) return out;
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return out;
}

PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw MetricError("paired t-test needs equal-length samples");
  if (a.size() < 2) throw MetricError("paired t-test needs at least 2 pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const auto ms = mean_std(d);
  PairedTTest out;
  out.mean_difference = ms.mean;
  out.dof = static_cast<double>(a.size() - 1);
  if (ms.std == 0.0) {
    out.t = ms.mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), ms.mean);
    out.p_two_sided = ms.mean == 0.0 ? 1.0 : 0.0;
    return out;
  }
  out.t = ms.mean / (ms.std / std::sqrt(static_cast<double>(a.size())));
  const boost::math::students_t dist(out.dof);
  out.p_two_sided = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t)));
  return out;
}

std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace ccgan

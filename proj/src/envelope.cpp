#include "ccgan/envelope.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <string>

#include "ccgan/errors.hpp"

namespace ccgan {
namespace {

// FFTW planning is not thread-safe; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

struct PlanDeleter {
  void operator()(fftw_plan p) const {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(p);
  }
};
using Plan = std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDeleter>;

Plan make_plan(int n, int howmany, fftw_complex* buf, int sign) {
  std::lock_guard lock(planner_mutex());
  return Plan(fftw_plan_many_dft(1, &n, howmany, buf, nullptr, 1, n, buf, nullptr, 1, n, sign,
                                 FFTW_ESTIMATE));
}

}  // namespace

EnvelopeImage envelope_detect(const Grid<double>& rf, double axial_spacing, double lateral_spacing,
                              Domain domain) {
  const auto n = rf.rows();
  const auto lines = rf.cols();
  if (n < kMinAxialSamples) {
    throw DataError("envelope_detect needs at least " + std::to_string(kMinAxialSamples) +
                    " axial samples per line, got " + std::to_string(n));
  }
  if (lines == 0) throw DataError("envelope_detect: rf has no lines");

  std::unique_ptr<fftw_complex, FftwFree> buf(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n * lines)));
  auto* b = buf.get();
  for (std::size_t j = 0; j < lines; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      b[j * n + i][0] = rf(i, j);
      b[j * n + i][1] = 0.0;
    }
  }
  const auto forward = make_plan(static_cast<int>(n), static_cast<int>(lines), b, FFTW_FORWARD);
  const auto inverse = make_plan(static_cast<int>(n), static_cast<int>(lines), b, FFTW_BACKWARD);
  fftw_execute(forward.get());

  // Spectral weights of the analytic-signal operator; 1/n folds in the
  // unnormalized inverse transform.
  std::vector<double> weight(n, 0.0);
  weight[0] = 1.0;
  const std::size_t half = n / 2;
  if (n % 2 == 0) {
    for (std::size_t k = 1; k < half; ++k) weight[k] = 2.0;
    weight[half] = 1.0;
  } else {
    for (std::size_t k = 1; k <= half; ++k) weight[k] = 2.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < lines; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      b[j * n + k][0] *= weight[k] * inv_n;
      b[j * n + k][1] *= weight[k] * inv_n;
    }
  }
  fftw_execute(inverse.get());

  EnvelopeImage out;
  out.samples = Grid<double>(n, lines);
  for (std::size_t j = 0; j < lines; ++j) {
    for (std::size_t i = 0; i < n; ++i) out.samples(i, j) = std::hypot(b[j * n + i][0], b[j * n + i][1]);
  }
  out.axial_spacing = axial_spacing;
  out.lateral_spacing = lateral_spacing;
  out.domain = domain;
  return out;
}

bool is_valid_envelope(const EnvelopeImage& img) {
  return std::all_of(img.samples.values().begin(), img.samples.values().end(),
                     [](double v) { return std::isfinite(v) && v >= 0.0; });
}

EnvelopeImage normalize(const EnvelopeImage& img) {
  if (img.samples.empty()) throw DataError("normalize: empty frame");
  if (!is_valid_envelope(img)) throw DataError("normalize: envelope samples must be finite and >= 0");
  const double peak = *std::max_element(img.samples.values().begin(), img.samples.values().end());
  if (peak <= 0.0) throw DataError("degenerate frame");
  EnvelopeImage out = img;
  // Already-normalized frames are returned untouched, which keeps the
  // operation exactly idempotent.
  if (peak == 1.0) return out;
  for (auto& v : out.samples.values()) v /= peak;
  return out;
}

EnvelopeImage resample_to_model_grid(const EnvelopeImage& img, std::size_t target_rows,
                                     std::size_t target_cols) {
  if (!(img.axial_spacing > 0.0) || !(img.lateral_spacing > 0.0)) {
    throw DataError("resample_to_model_grid: spacings must be positive");
  }
  if (img.rows() < 16 || img.cols() < 16) {
    throw DataError("resample_to_model_grid: frame must be at least 16x16");
  }
  if (target_rows < 2 || target_cols < 2) throw DataError("resample_to_model_grid: target too small");
  if (img.rows() == target_rows && img.cols() == target_cols) return img;

  const auto src_rows = img.rows();
  const auto src_cols = img.cols();
  const double row_step = static_cast<double>(src_rows - 1) / static_cast<double>(target_rows - 1);
  const double col_step = static_cast<double>(src_cols - 1) / static_cast<double>(target_cols - 1);

  EnvelopeImage out;
  out.samples = Grid<double>(target_rows, target_cols);
  for (std::size_t r = 0; r < target_rows; ++r) {
    const double y = std::min(static_cast<double>(r) * row_step, static_cast<double>(src_rows - 1));
    const auto y0 = std::min(static_cast<std::size_t>(y), src_rows - 2);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < target_cols; ++c) {
      const double x = std::min(static_cast<double>(c) * col_step, static_cast<double>(src_cols - 1));
      const auto x0 = std::min(static_cast<std::size_t>(x), src_cols - 2);
      const double fx = x - static_cast<double>(x0);
      const double top = std::lerp(img.samples(y0, x0), img.samples(y0, x0 + 1), fx);
      const double bottom = std::lerp(img.samples(y0 + 1, x0), img.samples(y0 + 1, x0 + 1), fx);
      out.samples(r, c) = std::lerp(top, bottom, fy);
    }
  }
  out.axial_spacing = img.axial_spacing * row_step;
  out.lateral_spacing = img.lateral_spacing * col_step;
  out.domain = img.domain;
  out.frame_index = img.frame_index;
  return out;
}

}  // namespace ccgan

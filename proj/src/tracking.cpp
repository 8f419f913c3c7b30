#include "ccgan/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "ccgan/errors.hpp"
#include "ccgan/frame_io.hpp"

namespace ccgan {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kExactMatch = 1.0 - 1e-10;

double parabolic_offset(double cm, double c0, double cp) {
  const double denom = cm - 2.0 * c0 + cp;
  if (!(denom < 0.0)) return 0.0;
  return std::clamp(0.5 * (cm - cp) / denom, -0.5, 0.5);
}

double median_of_valid(const Grid<double>& g, const Grid<std::uint8_t>& valid) {
  std::vector<double> v;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (valid.data()[i]) v.push_back(g.data()[i]);
  }
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2) return *mid;
  const double hi = *mid;
  return 0.5 * (hi + *std::max_element(v.begin(), mid));
}

Grid<double> filled(const Grid<double>& g, const Grid<std::uint8_t>& valid) {
  const double fill = median_of_valid(g, valid);
  Grid<double> out = g;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!valid.data()[i]) out.data()[i] = fill;
  }
  return out;
}

}  // namespace

void TrackingConfig::validate() const {
  if (kernel_axial < 2 || kernel_lateral < 2) throw ConfigError("tracking kernel must be at least 2x2");
  if (search_axial < 0 || search_lateral < 0) throw ConfigError("tracking search range must be >= 0");
  if (step_axial < 1 || step_lateral < 1) throw ConfigError("tracking node spacing must be >= 1");
  if (iterations < 1) throw ConfigError("tracking iterations must be >= 1");
}

std::string describe(const TrackingConfig& c) {
  std::ostringstream ss;
  ss << "kernel_axial = " << c.kernel_axial << "\nkernel_lateral = " << c.kernel_lateral
     << "\nsearch_axial = " << c.search_axial << "\nsearch_lateral = " << c.search_lateral
     << "\nstep_axial = " << c.step_axial << "\nstep_lateral = " << c.step_lateral
     << "\nsubsample_fit = " << (c.subsample_fit ? "on" : "off") << "\niterations = " << c.iterations << "\n";
  return ss.str();
}

std::size_t DisplacementField::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.values().begin(), valid.values().end(), std::uint8_t{1}));
}

bool DisplacementField::same_grid(const DisplacementField& o) const {
  return axial.same_shape(o.axial) && row0 == o.row0 && col0 == o.col0 && row_step == o.row_step &&
         col_step == o.col_step;
}

DisplacementField track(const EnvelopeImage& pre, const EnvelopeImage& post, const TrackingConfig& cfg) {
  cfg.validate();
  if (!pre.samples.same_shape(post.samples)) throw DataError("track: frames differ in shape");
  const int rows = static_cast<int>(pre.rows()), cols = static_cast<int>(pre.cols());
  const int ka = cfg.kernel_axial, kl = cfg.kernel_lateral, sa = cfg.search_axial, sl = cfg.search_lateral;
  const int last_r = rows - ka - sa, last_c = cols - kl - sl;
  if (last_r < sa || last_c < sl) {
    throw ConfigError("tracking kernel plus search range does not fit the " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " frame");
  }
  const auto n_r = static_cast<std::size_t>((last_r - sa) / cfg.step_axial + 1);
  const auto n_c = static_cast<std::size_t>((last_c - sl) / cfg.step_lateral + 1);

  DisplacementField f;
  f.row0 = sa + (ka - 1) / 2.0;
  f.col0 = sl + (kl - 1) / 2.0;
  f.row_step = cfg.step_axial;
  f.col_step = cfg.step_lateral;
  f.axial = Grid<double>(n_r, n_c, kNaN);
  f.lateral = Grid<double>(n_r, n_c, kNaN);
  f.correlation = Grid<double>(n_r, n_c, kNaN);
  f.valid = Grid<std::uint8_t>(n_r, n_c, 0);
  f.axial_spacing = pre.axial_spacing;
  f.lateral_spacing = pre.lateral_spacing;

  const std::size_t kn = static_cast<std::size_t>(ka) * static_cast<std::size_t>(kl);
  std::vector<double> kc(kn), w(kn);
  Grid<double> cmap(static_cast<std::size_t>(2 * sa + 1), static_cast<std::size_t>(2 * sl + 1));

  for (std::size_t i = 0; i < n_r; ++i) {
    for (std::size_t j = 0; j < n_c; ++j) {
      const int r0 = sa + static_cast<int>(i) * cfg.step_axial;
      const int c0 = sl + static_cast<int>(j) * cfg.step_lateral;
      double km = 0.0;
      for (int r = 0; r < ka; ++r) {
        for (int c = 0; c < kl; ++c) km += pre.samples(r0 + r, c0 + c);
      }
      km /= static_cast<double>(kn);
      double kss = 0.0;
      for (int r = 0; r < ka; ++r) {
        for (int c = 0; c < kl; ++c) {
          const double d = pre.samples(r0 + r, c0 + c) - km;
          kc[static_cast<std::size_t>(r * kl + c)] = d;
          kss += d * d;
        }
      }
      if (!(kss > 0.0)) continue;
      const double knorm = std::sqrt(kss);

      double best = -std::numeric_limits<double>::infinity();
      int bdr = 0, bdc = 0;
      for (int dr = -sa; dr <= sa; ++dr) {
        for (int dc = -sl; dc <= sl; ++dc) {
          double wm = 0.0;
          for (int r = 0; r < ka; ++r) {
            for (int c = 0; c < kl; ++c) {
              const double v = post.samples(r0 + dr + r, c0 + dc + c);
              w[static_cast<std::size_t>(r * kl + c)] = v;
              wm += v;
            }
          }
          wm /= static_cast<double>(kn);
          double wss = 0.0, dot = 0.0;
          for (std::size_t k = 0; k < kn; ++k) {
            const double d = w[k] - wm;
            wss += d * d;
            dot += kc[k] * d;
          }
          const double cc = wss > 0.0 ? std::min(1.0, dot / (knorm * std::sqrt(wss))) : 0.0;
          cmap(static_cast<std::size_t>(dr + sa), static_cast<std::size_t>(dc + sl)) = cc;
          if (cc > best) {
            best = cc;
            bdr = dr;
            bdc = dc;
          }
        }
      }
      double da = bdr, dl = bdc;
      if (cfg.subsample_fit && best < kExactMatch) {
        const auto pr = static_cast<std::size_t>(bdr + sa), pc = static_cast<std::size_t>(bdc + sl);
        if (bdr > -sa && bdr < sa) da += parabolic_offset(cmap(pr - 1, pc), best, cmap(pr + 1, pc));
        if (bdc > -sl && bdc < sl) dl += parabolic_offset(cmap(pr, pc - 1), best, cmap(pr, pc + 1));
      }
      f.axial(i, j) = da;
      f.lateral(i, j) = dl;
      f.correlation(i, j) = best;
      f.valid(i, j) = 1;
    }
  }
  return f;
}

DenseField densify(const DisplacementField& field, std::size_t rows, std::size_t cols) {
  const auto ax = filled(field.axial, field.valid);
  const auto la = filled(field.lateral, field.valid);
  const auto nr = field.node_rows(), nc = field.node_cols();
  DenseField d{Grid<double>(rows, cols), Grid<double>(rows, cols)};
  if (nr == 0 || nc == 0) return d;
  auto coord = [](double pos, double origin, double step, std::size_t n, std::size_t& i0, double& f) {
    const double u = std::clamp((pos - origin) / step, 0.0, static_cast<double>(n - 1));
    i0 = std::min(static_cast<std::size_t>(u), n - 1);
    f = u - static_cast<double>(i0);
    if (i0 == n - 1) f = 0.0;
  };
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t i0;
    double fy;
    coord(static_cast<double>(r), field.row0, field.row_step, nr, i0, fy);
    const std::size_t i1 = std::min(i0 + 1, nr - 1);
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t j0;
      double fx;
      coord(static_cast<double>(c), field.col0, field.col_step, nc, j0, fx);
      const std::size_t j1 = std::min(j0 + 1, nc - 1);
      auto interp = [&](const Grid<double>& g) {
        const double top = std::lerp(g(i0, j0), g(i0, j1), fx);
        const double bot = std::lerp(g(i1, j0), g(i1, j1), fx);
        return std::lerp(top, bot, fy);
      };
      d.axial(r, c) = interp(ax);
      d.lateral(r, c) = interp(la);
    }
  }
  return d;
}

CorrectedFrame motion_correct(const EnvelopeImage& post, const DisplacementField& field) {
  const auto rows = post.rows(), cols = post.cols();
  const auto dense = densify(field, rows, cols);
  CorrectedFrame out{post, Grid<std::uint8_t>(rows, cols, 1)};
  const double eps = 1e-9;
  const double max_r = static_cast<double>(rows - 1), max_c = static_cast<double>(cols - 1);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double y = static_cast<double>(r) + dense.axial(r, c);
      double x = static_cast<double>(c) + dense.lateral(r, c);
      if (!(y >= -eps && y <= max_r + eps && x >= -eps && x <= max_c + eps)) {
        out.image.samples(r, c) = 0.0;
        out.valid(r, c) = 0;
        continue;
      }
      y = std::clamp(y, 0.0, max_r);
      x = std::clamp(x, 0.0, max_c);
      const auto r0 = static_cast<std::size_t>(y), c0 = static_cast<std::size_t>(x);
      const std::size_t r1 = std::min(r0 + 1, rows - 1), c1 = std::min(c0 + 1, cols - 1);
      const double fy = y - static_cast<double>(r0), fx = x - static_cast<double>(c0);
      const auto& s = post.samples;
      const double top = fx == 0.0 ? s(r0, c0) : std::lerp(s(r0, c0), s(r0, c1), fx);
      const double bot = fx == 0.0 ? s(r1, c0) : std::lerp(s(r1, c0), s(r1, c1), fx);
      out.image.samples(r, c) = fy == 0.0 ? top : std::lerp(top, bot, fy);
    }
  }
  return out;
}

TrackResult track_and_correct(const EnvelopeImage& pre, const EnvelopeImage& post, const TrackingConfig& cfg) {
  TrackResult res;
  res.field = track(pre, post, cfg);
  res.corrected = motion_correct(post, res.field);
  for (int it = 1; it < cfg.iterations; ++it) {
    const auto residual = track(pre, res.corrected.image, cfg);
    for (std::size_t k = 0; k < res.field.axial.size(); ++k) {
      if (res.field.valid.data()[k] && residual.valid.data()[k]) {
        res.field.axial.data()[k] += residual.axial.data()[k];
        res.field.lateral.data()[k] += residual.lateral.data()[k];
        res.field.correlation.data()[k] = residual.correlation.data()[k];
      }
    }
    res.corrected = motion_correct(post, res.field);
  }
  return res;
}

std::size_t RoiMask::count() const {
  return static_cast<std::size_t>(std::count(mask.values().begin(), mask.values().end(), std::uint8_t{1}));
}

RoiMask mask_from_rect(const RoiRect& rect, const EnvelopeImage& frame) {
  const auto px = to_pixels(rect, frame);
  RoiMask m{rect.name, Grid<std::uint8_t>(frame.rows(), frame.cols(), 0)};
  for (std::size_t r = 0; r < px.rows; ++r) {
    for (std::size_t c = 0; c < px.cols; ++c) m.mask(px.r0 + r, px.c0 + c) = 1;
  }
  return m;
}

RoiMask full_mask(const EnvelopeImage& frame) {
  return {"frame", Grid<std::uint8_t>(frame.rows(), frame.cols(), 1)};
}

double rmsd(const EnvelopeImage& pre, const EnvelopeImage& corrected, const RoiMask& mask,
            const Grid<std::uint8_t>* valid) {
  if (!pre.samples.same_shape(corrected.samples) || !pre.samples.same_shape(mask.mask) ||
      (valid && !pre.samples.same_shape(*valid))) {
    throw DataError("rmsd: frame, mask and validity shapes differ");
  }
  double ss = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pre.samples.size(); ++i) {
    if (!mask.mask.data()[i] || (valid && !valid->data()[i])) continue;
    const double d = pre.samples.data()[i] - corrected.samples.data()[i];
    ss += d * d;
    ++n;
  }
  if (n == 0) throw MetricError("rmsd: mask '" + mask.name + "' has no valid samples");
  return std::sqrt(ss / static_cast<double>(n));
}

double rmsd(const EnvelopeImage& pre, const CorrectedFrame& corrected, const RoiMask& mask) {
  return rmsd(pre, corrected.image, mask, &corrected.valid);
}

FieldSsim field_ssim(const DisplacementField& ref, const DisplacementField& cand, const RoiMask& mask) {
  if (!ref.same_grid(cand)) throw MetricError("field_ssim: node grids differ");
  const auto nr = ref.node_rows(), nc = ref.node_cols();
  Grid<std::uint8_t> use(nr, nc, 0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < nr; ++i) {
    for (std::size_t j = 0; j < nc; ++j) {
      const auto r = static_cast<std::size_t>(std::lround(ref.node_row(i)));
      const auto c = static_cast<std::size_t>(std::lround(ref.node_col(j)));
      const bool inside = r < mask.mask.rows() && c < mask.mask.cols() && mask.mask(r, c);
      if (inside && ref.valid(i, j) && cand.valid(i, j)) {
        use(i, j) = 1;
        ++n;
      }
    }
  }
  if (n == 0) throw MetricError("field_ssim: no valid nodes inside mask '" + mask.name + "'");
  auto component = [&](const Grid<double>& a, const Grid<double>& b) {
    const auto fa = filled(a, ref.valid), fb = filled(b, cand.valid);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (ref.valid.data()[k]) {
        lo = std::min(lo, a.data()[k]);
        hi = std::max(hi, a.data()[k]);
      }
    }
    const double range = hi > lo ? hi - lo : 1.0;
    const auto s = ssim_map(fa, fb, range);
    double sum = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (use.data()[k]) sum += s.data()[k];
    }
    return sum / static_cast<double>(n);
  };
  return {component(ref.axial, cand.axial), component(ref.lateral, cand.lateral)};
}

void write_field(const std::filesystem::path& path, const DisplacementField& field, std::uint32_t index) {
  FrameContainer c;
  for (const auto* g : {&field.axial, &field.lateral, &field.correlation}) {
    Grid<float> p(g->rows(), g->cols());
    for (std::size_t k = 0; k < g->size(); ++k) p.data()[k] = static_cast<float>(g->data()[k]);
    c.planes.push_back(std::move(p));
  }
  c.axial_spacing = field.row_step * field.axial_spacing;
  c.lateral_spacing = field.col_step * field.lateral_spacing;
  c.domain = Domain::generated;
  c.frame_index = index;
  write_container(path, c);
  std::ostringstream ss;
  ss.precision(17);
  ss << "row0 = " << field.row0 << "\ncol0 = " << field.col0 << "\nrow_step = " << field.row_step
     << "\ncol_step = " << field.col_step << "\naxial_spacing = " << field.axial_spacing
     << "\nlateral_spacing = " << field.lateral_spacing << "\n";
  auto grid_path = path;
  grid_path += ".grid";
  write_text_atomic(grid_path, ss.str());
}

DisplacementField read_field(const std::filesystem::path& path) {
  const auto c = read_container(path);
  if (c.planes.size() != 3) throw DataError(path.string() + " is not a displacement field (expected 3 planes)");
  auto grid_path = path;
  grid_path += ".grid";
  std::ifstream g(grid_path);
  if (!g) throw DataError("missing node layout " + grid_path.string());
  std::map<std::string, double> kv;
  std::string key, eq;
  double v;
  while (g >> key >> eq >> v) kv[key] = v;
  DisplacementField f;
  try {
    f.row0 = kv.at("row0");
    f.col0 = kv.at("col0");
    f.row_step = kv.at("row_step");
    f.col_step = kv.at("col_step");
    f.axial_spacing = kv.at("axial_spacing");
    f.lateral_spacing = kv.at("lateral_spacing");
  } catch (const std::out_of_range&) {
    throw DataError("incomplete node layout " + grid_path.string());
  }
  Grid<double>* planes[3] = {&f.axial, &f.lateral, &f.correlation};
  for (int p = 0; p < 3; ++p) {
    *planes[p] = Grid<double>(c.planes[p].rows(), c.planes[p].cols());
    for (std::size_t k = 0; k < c.planes[p].size(); ++k) planes[p]->data()[k] = c.planes[p].data()[k];
  }
  f.valid = Grid<std::uint8_t>(f.axial.rows(), f.axial.cols(), 0);
  for (std::size_t k = 0; k < f.axial.size(); ++k) f.valid.data()[k] = std::isfinite(f.axial.data()[k]) ? 1 : 0;
  return f;
}

}  // namespace ccgan

#include "ccgan/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "ccgan/dataset.hpp"
#include "ccgan/envelope.hpp"
#include "ccgan/errors.hpp"
#include "ccgan/frame_io.hpp"

namespace ccgan {
namespace {

constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)
constexpr double kSupportSigmas = 4.0;

std::uint64_t mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return mix(mix(mix(seed) ^ stream) ^ index);
}

}  // namespace

double PsfModel::lateral_fwhm(double depth_mm) const { return kFwhmPerSigma * lateral_sigma(depth_mm); }
double PsfModel::axial_fwhm() const { return kFwhmPerSigma * axial_sigma; }

void PsfModel::validate() const {
  if (!(axial_sigma > 0.0) || !(lateral_sigma_at_surface > 0.0)) throw ConfigError("PSF sigmas must be > 0");
  if (!(lateral_growth >= 0.0)) throw ConfigError("PSF lateral_growth must be >= 0");
  if (!(carrier_wavelength > 0.0)) throw ConfigError("PSF carrier_wavelength must be > 0");
}

double db_to_amplitude(double db) { return std::pow(10.0, db / 20.0); }

double PhantomSpec::resolved_guard() const {
  if (guard_mm > 0.0) return guard_mm;
  return kSupportSigmas * std::max(psf.axial_sigma, psf.lateral_sigma(depth_mm()));
}

void PhantomSpec::validate() const {
  psf.validate();
  if (rows < 2 || cols < 2) throw ConfigError("phantom grid must be at least 2x2");
  if (!(axial_spacing > 0.0) || !(lateral_spacing > 0.0)) throw ConfigError("phantom spacings must be > 0");
  if (!(scatterer_density >= 0.0) || !std::isfinite(scatterer_density)) {
    throw ConfigError("scatterer_density must be finite and >= 0");
  }
  if (scatterer_density == 0.0 && point_targets.empty()) {
    throw ConfigError("scatterer_density must be > 0 unless point targets are given");
  }
  for (const auto& t : point_targets) {
    if (t.axial_mm < 0.0 || t.axial_mm > depth_mm() || t.lateral_mm < 0.0 || t.lateral_mm > width_mm()) {
      throw ConfigError("point target lies outside the grid");
    }
    if (!(t.amplitude_multiplier > 0.0)) throw ConfigError("point target amplitude must be > 0");
  }
}

std::vector<std::string> phantom_warnings(const PhantomSpec& spec) {
  std::vector<std::string> w;
  if (spec.scatterer_density > 0.0 && spec.scatterer_density < 1.0) {
    std::ostringstream ss;
    ss << "scatterer density " << spec.scatterer_density
       << " per resolution cell is below 1; speckle will be pre-Rayleigh";
    w.push_back(ss.str());
  }
  return w;
}

std::vector<Scatterer> draw_scatterers(const PhantomSpec& spec) {
  spec.validate();
  const double guard = spec.resolved_guard();
  const double z0 = -guard, z1 = spec.depth_mm() + guard;
  const double x0 = -guard, x1 = spec.width_mm() + guard;
  // One scatterer per stratum of area cell / density, uniformly placed
  // inside it. Stratifying removes the Poisson clumping of scatterer counts
  // that would otherwise modulate the local speckle power.
  std::vector<Scatterer> out;
  std::mt19937_64 rng(spec.rng_seed);
  if (spec.scatterer_density > 0.0) {
    const double scale = std::sqrt(std::numbers::pi / spec.scatterer_density);
    const auto nz = static_cast<std::size_t>(std::ceil((z1 - z0) / (spec.psf.axial_sigma * scale)));
    const auto nx = static_cast<std::size_t>(std::ceil((x1 - x0) / (spec.psf.lateral_sigma_at_surface * scale)));
    const double hz = (z1 - z0) / static_cast<double>(nz);
    const double hx = (x1 - x0) / static_cast<double>(nx);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
    out.reserve(nz * nx + spec.point_targets.size());
    for (std::size_t i = 0; i < nz; ++i) {
      for (std::size_t j = 0; j < nx; ++j) {
        Scatterer s;
        s.axial_mm = z0 + (static_cast<double>(i) + unit(rng)) * hz;
        s.lateral_mm = x0 + (static_cast<double>(j) + unit(rng)) * hx;
        const double re = gauss(rng);
        const double im = gauss(rng);
        s.amplitude = {re, im};
        out.push_back(s);
      }
    }
  }
  // Background RMS amplitude is sqrt(density) by construction.
  const double reference = spec.scatterer_density > 0.0 ? std::sqrt(spec.scatterer_density) : 1.0;
  for (const auto& t : spec.point_targets) {
    out.push_back({t.axial_mm, t.lateral_mm, {t.amplitude_multiplier * reference, 0.0}});
  }
  return out;
}

EnvelopeImage render_scatterers(const std::vector<Scatterer>& scatterers, const PhantomSpec& geometry,
                                const PsfModel& psf) {
  psf.validate();
  const auto rows = geometry.rows;
  const auto cols = geometry.cols;
  const double dz = geometry.axial_spacing;
  const double dx = geometry.lateral_spacing;
  std::vector<std::complex<double>> field(rows * cols);
  std::vector<std::complex<double>> axial;
  std::vector<double> lateral;
  const double sa = psf.axial_sigma;
  const double k = 4.0 * std::numbers::pi / psf.carrier_wavelength;

  for (const auto& s : scatterers) {
    const double sl = psf.lateral_sigma(std::max(0.0, s.axial_mm));
    const long r0 = std::max(0L, static_cast<long>(std::ceil((s.axial_mm - kSupportSigmas * sa) / dz)));
    const long r1 = std::min(static_cast<long>(rows) - 1, static_cast<long>(std::floor((s.axial_mm + kSupportSigmas * sa) / dz)));
    const long c0 = std::max(0L, static_cast<long>(std::ceil((s.lateral_mm - kSupportSigmas * sl) / dx)));
    const long c1 = std::min(static_cast<long>(cols) - 1, static_cast<long>(std::floor((s.lateral_mm + kSupportSigmas * sl) / dx)));
    if (r0 > r1 || c0 > c1) continue;
    const double gain = std::sqrt(psf.lateral_sigma_at_surface / sl);
    axial.resize(static_cast<std::size_t>(r1 - r0 + 1));
    for (long r = r0; r <= r1; ++r) {
      const double d = static_cast<double>(r) * dz - s.axial_mm;
      axial[static_cast<std::size_t>(r - r0)] =
          s.amplitude * gain * std::exp(-0.5 * d * d / (sa * sa)) * std::polar(1.0, k * d);
    }
    lateral.resize(static_cast<std::size_t>(c1 - c0 + 1));
    for (long c = c0; c <= c1; ++c) {
      const double d = static_cast<double>(c) * dx - s.lateral_mm;
      lateral[static_cast<std::size_t>(c - c0)] = std::exp(-0.5 * d * d / (sl * sl));
    }
    for (long r = r0; r <= r1; ++r) {
      const auto a = axial[static_cast<std::size_t>(r - r0)];
      auto* row = field.data() + static_cast<std::size_t>(r) * cols;
      for (long c = c0; c <= c1; ++c) row[c] += a * lateral[static_cast<std::size_t>(c - c0)];
    }
  }

  EnvelopeImage img;
  img.samples = Grid<double>(rows, cols);
  for (std::size_t i = 0; i < field.size(); ++i) img.samples.data()[i] = std::abs(field[i]);
  img.axial_spacing = dz;
  img.lateral_spacing = dx;
  img.domain = geometry.domain;
  return img;
}

EnvelopeImage render_phantom(const PhantomSpec& spec) {
  return render_scatterers(draw_scatterers(spec), spec, spec.psf);
}

bool AffineMotion::is_zero() const {
  return axial0 == 0.0 && axial_per_axial == 0.0 && axial_per_lateral == 0.0 && lateral0 == 0.0 &&
         lateral_per_axial == 0.0 && lateral_per_lateral == 0.0;
}

std::vector<EnvelopeImage> render_many(const std::vector<std::vector<Scatterer>>& scatterers,
                                       const PhantomSpec& geometry, const PsfModel& psf, unsigned workers) {
  std::vector<EnvelopeImage> out(scatterers.size());
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(scatterers.size())));
  if (workers <= 1) {
    for (std::size_t i = 0; i < scatterers.size(); ++i) out[i] = render_scatterers(scatterers[i], geometry, psf);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < scatterers.size(); i += workers) {
          out[i] = render_scatterers(scatterers[i], geometry, psf);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

RenderedSequence render_sequence(const PhantomSpec& spec, const AffineMotion& motion, std::size_t n_frames,
                                 unsigned workers) {
  if (n_frames < 2) throw ConfigError("render_sequence needs at least 2 frames");
  spec.validate();
  const double guard = spec.resolved_guard();

  // Frame corners bound the affine motion of every point inside the frame.
  for (double z : {0.0, spec.depth_mm()}) {
    for (double x : {0.0, spec.width_mm()}) {
      double cz = z, cx = x;
      for (std::size_t f = 1; f < n_frames; ++f) {
        const double uz = motion.axial(cz, cx), ux = motion.lateral(cz, cx);
        cz += uz;
        cx += ux;
        if (std::abs(cz - z) > guard || std::abs(cx - x) > guard) {
          throw DataError("motion moves scatterers outside the guard band (" + std::to_string(guard) + " mm)");
        }
      }
    }
  }

  RenderedSequence seq;
  seq.scatterers.push_back(draw_scatterers(spec));
  seq.truth.push_back({spec.point_targets});
  for (std::size_t f = 1; f < n_frames; ++f) {
    auto next = seq.scatterers.back();
    for (auto& s : next) {
      const double uz = motion.axial(s.axial_mm, s.lateral_mm);
      const double ux = motion.lateral(s.axial_mm, s.lateral_mm);
      s.axial_mm += uz;
      s.lateral_mm += ux;
    }
    auto targets = seq.truth.back().targets;
    for (auto& t : targets) {
      const double uz = motion.axial(t.axial_mm, t.lateral_mm);
      const double ux = motion.lateral(t.axial_mm, t.lateral_mm);
      t.axial_mm += uz;
      t.lateral_mm += ux;
    }
    seq.scatterers.push_back(std::move(next));
    seq.truth.push_back({std::move(targets)});
  }
  seq.frames = render_many(seq.scatterers, spec, spec.psf, workers);
  for (std::size_t f = 0; f < seq.frames.size(); ++f) seq.frames[f].frame_index = static_cast<std::uint32_t>(f);
  return seq;
}

// Presets ------------------------------------------------------------------

PsfModel phased_like_psf() { return {0.25, 0.3, 0.06, 0.3}; }
PsfModel linear_like_psf() { return {0.25, 0.3, 0.0, 0.3}; }

SynthPreset desk_preset() {
  SynthPreset p;
  p.name = "desk";
  p.phased = phased_like_psf();
  p.linear = linear_like_psf();
  p.test_targets = {{1.8, 3.2, 0.0}, {4.2, 9.4, 0.0}, {6.6, 3.2, 0.0}, {9.0, 9.4, 0.0}, {11.0, 3.2, 0.0}};
  p.sequence_motion.axial0 = 0.3;
  p.sequence_motion.lateral_per_axial = 0.02;
  return p;
}

SynthPreset tiny_preset() {
  auto p = desk_preset();
  p.name = "tiny";
  p.train_a = 12;
  p.train_b = 10;
  p.test_frames = 3;
  p.sequence_frames = 3;
  return p;
}

SynthPreset preset_by_name(const std::string& name) {
  if (name == "desk") return desk_preset();
  if (name == "tiny") return tiny_preset();
  throw ConfigError("unknown synth preset '" + name + "' (expected desk or tiny)");
}

namespace {

PhantomSpec base_spec(const SynthPreset& p, const PsfModel& psf, Domain domain, std::uint64_t seed) {
  PhantomSpec s;
  s.rows = p.rows;
  s.cols = p.cols;
  s.axial_spacing = p.axial_spacing;
  s.lateral_spacing = p.lateral_spacing;
  s.scatterer_density = p.density;
  s.psf = psf;
  s.domain = domain;
  s.rng_seed = seed;
  return s;
}

std::vector<PointTarget> random_targets(const SynthPreset& p, const PhantomSpec& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count(p.train_targets_min, p.train_targets_max);
  const double margin = 1.0;
  std::uniform_real_distribution<double> z(margin, s.depth_mm() - margin), x(margin, s.width_mm() - margin);
  std::vector<PointTarget> out(static_cast<std::size_t>(count(rng)));
  for (auto& t : out) {
    t.axial_mm = z(rng);
    t.lateral_mm = x(rng);
    t.amplitude_multiplier = db_to_amplitude(p.target_db);
  }
  return out;
}

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu.ccf", i);
  return buf;
}

void write_normalized(const std::filesystem::path& path, EnvelopeImage img, std::size_t index) {
  img.frame_index = static_cast<std::uint32_t>(index);
  write_frame(path, normalize(img));
}

std::string targets_csv(const std::vector<std::vector<PointTarget>>& per_frame) {
  std::ostringstream ss;
  ss.precision(10);
  ss << "frame_index,target_id,axial_mm,lateral_mm\n";
  for (std::size_t f = 0; f < per_frame.size(); ++f) {
    for (std::size_t t = 0; t < per_frame[f].size(); ++t) {
      ss << f << ',' << t << ',' << per_frame[f][t].axial_mm << ',' << per_frame[f][t].lateral_mm << '\n';
    }
  }
  return ss.str();
}

}  // namespace

SynthSummary synthesize_dataset(const SynthPreset& p, std::uint64_t seed, const std::filesystem::path& out,
                                unsigned workers) {
  if (p.train_a == 0 || p.train_b == 0 || p.test_frames == 0) throw ConfigError("synth: zero frames requested");
  if (p.sequence_frames < 2) throw ConfigError("synth: sequence needs at least 2 frames");
  namespace fs = std::filesystem;
  for (const char* d : {"train/phased", "train/linear", "test/phased", "test/linear", "sequence/phased",
                        "sequence/linear"}) {
    fs::create_directories(out / d);
  }
  SynthSummary summary;
  summary.warnings = phantom_warnings(base_spec(p, p.phased, Domain::phased, 0));

  auto render_set = [&](std::size_t n, const PsfModel& psf, Domain domain, std::uint64_t stream, bool targets) {
    std::vector<std::vector<Scatterer>> sc(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto spec = base_spec(p, psf, domain, derive_seed(seed, stream, i));
      if (targets) spec.point_targets = random_targets(p, spec, derive_seed(seed, stream + 100, i));
      sc[i] = draw_scatterers(spec);
    }
    return render_many(sc, base_spec(p, psf, domain, 0), psf, workers);
  };

  std::vector<ManifestRecord> train;
  {
    const auto a = render_set(p.train_a, p.phased, Domain::phased, 1, true);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto path = out / "train/phased" / frame_name(i);
      write_normalized(path, a[i], i);
      train.push_back({fs::path("train/phased") / frame_name(i), Domain::phased, static_cast<std::uint32_t>(i)});
    }
    const auto b = render_set(p.train_b, p.linear, Domain::linear, 2, true);
    for (std::size_t i = 0; i < b.size(); ++i) {
      write_normalized(out / "train/linear" / frame_name(i), b[i], i);
      train.push_back({fs::path("train/linear") / frame_name(i), Domain::linear, static_cast<std::uint32_t>(i)});
    }
  }
  write_manifest(out / "train.manifest", train);
  summary.train_a = p.train_a;
  summary.train_b = p.train_b;

  // Test frames: fixed target layout, rendered with both PSFs from one scatterer draw.
  {
    std::vector<std::vector<Scatterer>> sc(p.test_frames);
    std::vector<std::vector<PointTarget>> layout(p.test_frames);
    for (std::size_t i = 0; i < p.test_frames; ++i) {
      auto spec = base_spec(p, p.phased, Domain::phased, derive_seed(seed, 3, i));
      spec.point_targets = p.test_targets;
      for (auto& t : spec.point_targets) t.amplitude_multiplier = db_to_amplitude(p.target_db);
      layout[i] = spec.point_targets;
      sc[i] = draw_scatterers(spec);
    }
    const auto ph = render_many(sc, base_spec(p, p.phased, Domain::phased, 0), p.phased, workers);
    const auto li = render_many(sc, base_spec(p, p.linear, Domain::linear, 0), p.linear, workers);
    std::vector<ManifestRecord> test, ref;
    for (std::size_t i = 0; i < p.test_frames; ++i) {
      write_normalized(out / "test/phased" / frame_name(i), ph[i], i);
      write_normalized(out / "test/linear" / frame_name(i), li[i], i);
      test.push_back({fs::path("test/phased") / frame_name(i), Domain::phased, static_cast<std::uint32_t>(i)});
      ref.push_back({fs::path("test/linear") / frame_name(i), Domain::linear, static_cast<std::uint32_t>(i)});
    }
    write_manifest(out / "test.manifest", test);
    write_manifest(out / "test_reference.manifest", ref);
    write_text_atomic(out / "test/targets.csv", targets_csv(layout));
    summary.test = p.test_frames;
  }

  // Motion sequence for tracking.
  {
    auto spec = base_spec(p, p.phased, Domain::phased, derive_seed(seed, 4, 0));
    spec.rows = p.sequence_rows;
    spec.cols = p.sequence_cols;
    spec.guard_mm = p.sequence_guard_mm;
    auto seq = render_sequence(spec, p.sequence_motion, p.sequence_frames, workers);
    auto lin_geom = spec;
    lin_geom.domain = Domain::linear;
    const auto lin = render_many(seq.scatterers, lin_geom, p.linear, workers);
    std::vector<ManifestRecord> recs, lin_recs;
    std::vector<std::vector<PointTarget>> targets;
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
      write_normalized(out / "sequence/phased" / frame_name(i), seq.frames[i], i);
      write_normalized(out / "sequence/linear" / frame_name(i), lin[i], i);
      recs.push_back({fs::path("sequence/phased") / frame_name(i), Domain::phased, static_cast<std::uint32_t>(i)});
      lin_recs.push_back({fs::path("sequence/linear") / frame_name(i), Domain::linear, static_cast<std::uint32_t>(i)});
      targets.push_back(seq.truth[i].targets);
    }
    write_manifest(out / "sequence.manifest", recs);
    write_manifest(out / "sequence_reference.manifest", lin_recs);
    write_text_atomic(out / "sequence/targets.csv", targets_csv(targets));
    const auto& m = p.sequence_motion;
    std::ostringstream t;
    t.precision(17);
    t << "# per-frame displacement in mm at position (z, x) mm:\n"
      << "# axial = axial0 + axial_per_axial*z + axial_per_lateral*x\n"
      << "# lateral = lateral0 + lateral_per_axial*z + lateral_per_lateral*x\n"
      << "frames = " << p.sequence_frames << "\n"
      << "axial_spacing = " << spec.axial_spacing << "\nlateral_spacing = " << spec.lateral_spacing << "\n"
      << "axial0 = " << m.axial0 << "\naxial_per_axial = " << m.axial_per_axial
      << "\naxial_per_lateral = " << m.axial_per_lateral << "\nlateral0 = " << m.lateral0
      << "\nlateral_per_axial = " << m.lateral_per_axial << "\nlateral_per_lateral = " << m.lateral_per_lateral
      << "\n";
    write_text_atomic(out / "sequence/truth.txt", t.str());
    // Interior rectangle clear of the tracking margins.
    std::ostringstream mask;
    mask << "# name axial_mm lateral_mm axial_extent_mm lateral_extent_mm\n"
         << "interior 5.0 3.0 " << spec.depth_mm() - 10.0 << ' ' << spec.width_mm() - 6.0 << "\n";
    write_text_atomic(out / "sequence/mask.txt", mask.str());
    summary.sequence = p.sequence_frames;
  }

  write_text_atomic(out / "rois.txt",
                    "# name axial_mm lateral_mm axial_extent_mm lateral_extent_mm\n"
                    "shallow 0.2 7.2 2.6 4.4\n"
                    "middle 5.6 7.2 2.2 4.4\n"
                    "deep 10.4 7.2 2.0 4.4\n");
  std::ostringstream echo;
  echo.precision(17);
  echo << "preset = " << p.name << "\nseed = " << seed << "\nrows = " << p.rows << "\ncols = " << p.cols
       << "\naxial_spacing = " << p.axial_spacing << "\nlateral_spacing = " << p.lateral_spacing
       << "\ndensity = " << p.density << "\ntarget_db = " << p.target_db << "\nphased_lateral_sigma = "
       << p.phased.lateral_sigma_at_surface << "\nphased_lateral_growth = " << p.phased.lateral_growth
       << "\nlinear_lateral_sigma = " << p.linear.lateral_sigma_at_surface << "\naxial_sigma = "
       << p.phased.axial_sigma << "\ncarrier_wavelength = " << p.phased.carrier_wavelength << "\n";
  write_text_atomic(out / "synth.txt", echo.str());
  return summary;
}

}  // namespace ccgan

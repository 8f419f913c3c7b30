#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ccgan/envelope_image.hpp"

namespace ccgan {

/// Separable Gaussian PSF with an axial carrier. Lateral width grows
/// linearly with depth: sigma_l(z) = lateral_sigma_at_surface + lateral_growth * z.
struct PsfModel {
  double axial_sigma = 0.25;               // mm
  double lateral_sigma_at_surface = 0.3;   // mm
  double lateral_growth = 0.0;             // mm of sigma per mm of depth
  double carrier_wavelength = 0.3;         // mm

  double lateral_sigma(double depth_mm) const { return lateral_sigma_at_surface + lateral_growth * depth_mm; }
  /// Envelope FWHM of the lateral profile at a depth: 2 sqrt(2 ln 2) sigma_l.
  double lateral_fwhm(double depth_mm) const;
  double axial_fwhm() const;
  void validate() const;
};

struct PointTarget {
  double axial_mm = 0.0;
  double lateral_mm = 0.0;
  double amplitude_multiplier = 100.0;  // relative to the background RMS amplitude
};

/// Linear amplitude ratio for a level in dB (20 log10).
double db_to_amplitude(double db);

/// Coordinates are mm from the centre of the top-left sample; depth runs down
/// the rows.
struct PhantomSpec {
  std::size_t rows = 64;
  std::size_t cols = 64;
  double axial_spacing = 0.2;
  double lateral_spacing = 0.2;
  double scatterer_density = 10.0;  // per resolution cell (pi * axial_sigma * lateral_sigma_at_surface)
  std::vector<PointTarget> point_targets;
  PsfModel psf;
  std::uint64_t rng_seed = 0;
  Domain domain = Domain::phased;
  double guard_mm = 0.0;  // scatterer margin around the frame; <= 0 picks 4 sigma of the widest PSF

  double depth_mm() const { return static_cast<double>(rows - 1) * axial_spacing; }
  double width_mm() const { return static_cast<double>(cols - 1) * lateral_spacing; }
  double resolved_guard() const;
  void validate() const;
};

/// Non-fatal conditions, e.g. a density too low for fully developed speckle.
std::vector<std::string> phantom_warnings(const PhantomSpec& spec);

struct Scatterer {
  double axial_mm = 0.0;
  double lateral_mm = 0.0;
  std::complex<double> amplitude;
};

/// Background scatterers (uniform positions, circular complex Gaussian
/// amplitudes with unit mean power) over the frame plus guard band, followed
/// by the point targets (real amplitudes).
std::vector<Scatterer> draw_scatterers(const PhantomSpec& spec);

/// Magnitude of the coherent PSF sum. Each scatterer's PSF is scaled by
/// sqrt(sigma_l0 / sigma_l(z)) so diffuse background power does not change with depth.
EnvelopeImage render_scatterers(const std::vector<Scatterer>& scatterers, const PhantomSpec& geometry,
                                const PsfModel& psf);

/// draw_scatterers + render_scatterers. Not normalized.
EnvelopeImage render_phantom(const PhantomSpec& spec);

/// Per-frame displacement, mm, evaluated at a scatterer's current position:
/// u_axial = a0 + a_z z + a_x x, u_lateral = l0 + l_z z + l_x x.
struct AffineMotion {
  double axial0 = 0.0;
  double axial_per_axial = 0.0;
  double axial_per_lateral = 0.0;
  double lateral0 = 0.0;
  double lateral_per_axial = 0.0;
  double lateral_per_lateral = 0.0;

  double axial(double z, double x) const { return axial0 + axial_per_axial * z + axial_per_lateral * x; }
  double lateral(double z, double x) const { return lateral0 + lateral_per_axial * z + lateral_per_lateral * x; }
  bool is_zero() const;
};

struct SequenceFrameTruth {
  std::vector<PointTarget> targets;  // positions in this frame
};

struct RenderedSequence {
  std::vector<EnvelopeImage> frames;
  std::vector<SequenceFrameTruth> truth;
  std::vector<std::vector<Scatterer>> scatterers;  // per frame, for re-rendering with another PSF
};

/// Moves the scatterers (not the pixels) frame by frame and re-renders.
/// Throws DataError if the cumulative motion of any point of the frame
/// exceeds the guard band.
RenderedSequence render_sequence(const PhantomSpec& spec, const AffineMotion& motion, std::size_t n_frames,
                                 unsigned workers = 1);

/// Renders frames of a scatterer list per entry, in parallel.
std::vector<EnvelopeImage> render_many(const std::vector<std::vector<Scatterer>>& scatterers,
                                       const PhantomSpec& geometry, const PsfModel& psf, unsigned workers);

// Presets ------------------------------------------------------------------

/// Sector-like PSF whose lateral width grows with depth.
PsfModel phased_like_psf();
/// Uniform, narrower lateral PSF.
PsfModel linear_like_psf();

struct SynthPreset {
  std::string name;
  std::size_t rows = 64, cols = 64;
  double axial_spacing = 0.2, lateral_spacing = 0.2;
  double density = 10.0;
  PsfModel phased, linear;
  std::size_t train_a = 200, train_b = 200;
  std::size_t test_frames = 20;
  double target_db = 26.0;
  int train_targets_min = 1, train_targets_max = 3;
  std::vector<PointTarget> test_targets;  // fixed layout in every test frame
  std::size_t sequence_rows = 128, sequence_cols = 128;
  std::size_t sequence_frames = 8;
  AffineMotion sequence_motion;
  double sequence_guard_mm = 6.0;
};

SynthPreset desk_preset();
/// Same geometry, a handful of frames; for tests.
SynthPreset tiny_preset();
SynthPreset preset_by_name(const std::string& name);

struct SynthSummary {
  std::size_t train_a = 0, train_b = 0, test = 0, sequence = 0;
  std::vector<std::string> warnings;
};

/// Writes a complete synthetic dataset under out_dir:
///   train.manifest, train/{phased,linear}/      unpaired training frames
///   test.manifest, test/phased/                 frames with the fixed target layout
///   test_reference.manifest, test/linear/       same scatterers, linear-like PSF
///   test/targets.csv                            target positions per frame
///   sequence.manifest, sequence/{phased,linear}/, sequence/truth.txt, sequence/targets.csv
///   rois.txt, sequence/mask.txt, synth.txt
/// Every frame is max-normalized. Output depends only on (preset, seed).
SynthSummary synthesize_dataset(const SynthPreset& preset, std::uint64_t seed, const std::filesystem::path& out_dir,
                                unsigned workers = 1);

}  // namespace ccgan

#include <cmath>
#include <fstream>
#include <sstream>

#include "ccgan/dataset.hpp"
#include "ccgan/errors.hpp"
#include "ccgan/frame_io.hpp"
#include "ccgan/metrics.hpp"
#include "ccgan/phantom.hpp"
#include "ccgan/tracking.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace ccgan;
namespace fs = std::filesystem;

namespace {

PhantomSpec speckle_spec(std::uint64_t seed) {
  PhantomSpec s;
  s.rows = 64;
  s.cols = 64;
  s.rng_seed = seed;
  s.psf = linear_like_psf();
  return s;
}

// Lone target on an empty background at fine sampling.
EnvelopeImage lone_target(const PsfModel& psf, double depth_mm) {
  PhantomSpec s;
  s.rows = 321;
  s.cols = 161;
  s.axial_spacing = 0.05;
  s.lateral_spacing = 0.05;
  s.scatterer_density = 0.0;
  s.psf = psf;
  s.point_targets = {{depth_mm, 4.0, 1.0}};
  return render_phantom(s);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Least-squares slope of y against x.
double slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

double median_valid(const DisplacementField& f, const Grid<double>& g) {
  std::vector<double> v;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (f.valid.data()[i]) v.push_back(g.data()[i]);
  }
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("rendering is deterministic under the seed") {
  const auto a = render_phantom(speckle_spec(3));
  const auto b = render_phantom(speckle_spec(3));
  CHECK(a == b);
  CHECK_FALSE(a == render_phantom(speckle_spec(4)));
  CHECK(a.rows() == 64);
  CHECK(a.axial_spacing == 0.2);
}

TEST_CASE("scatterer amplitudes have unit mean power") {
  PhantomSpec s = speckle_spec(1);
  s.rows = 256;
  s.cols = 256;
  const auto sc = draw_scatterers(s);
  double power = 0;
  for (const auto& p : sc) power += std::norm(p.amplitude);
  CHECK(power / sc.size() == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("background speckle is Rayleigh-like") {
  // One 64 x 64 frame at a fixed seed, then the mean over independent seeds.
  const auto one = nakagami_m(render_phantom(speckle_spec(11)).samples.values());
  CHECK(one.m == doctest::Approx(1.0).epsilon(0.15));
  double sum = 0;
  const int seeds = 12;
  for (int k = 0; k < seeds; ++k) sum += nakagami_m(render_phantom(speckle_spec(100 + k)).samples.values()).m;
  CHECK(sum / seeds == doctest::Approx(1.0).epsilon(0.05));

  auto phased = speckle_spec(5);
  phased.psf = phased_like_psf();
  double phased_sum = 0;
  for (int k = 0; k < seeds; ++k) {
    phased.rng_seed = 200 + k;
    phased_sum += nakagami_m(render_phantom(phased).samples.values()).m;
  }
  CHECK(phased_sum / seeds == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("point-target FWHM follows the PSF model at five depths") {
  const auto psf = phased_like_psf();
  for (double z : {2.0, 5.0, 8.0, 11.0, 14.0}) {
    const auto frame = lone_target(psf, z);
    const auto m = measure_target(frame, 0, z, 4.0, 4.0, 6.0);
    CHECK(m.lateral_fwhm == doctest::Approx(psf.lateral_fwhm(z)).epsilon(0.03));
    CHECK(m.axial_fwhm == doctest::Approx(psf.axial_fwhm()).epsilon(0.03));
    CHECK(std::abs(m.peak_axial_mm - z) <= 0.05);
  }
}

TEST_CASE("lateral FWHM grows with depth only when the PSF does") {
  double prev = 0;
  for (double z : {2.0, 6.0, 10.0, 14.0}) {
    const double w = measure_target(lone_target(phased_like_psf(), z), 0, z, 4.0, 4.0, 6.0).lateral_fwhm;
    CHECK(w > prev);
    prev = w;
  }
  const double shallow = measure_target(lone_target(linear_like_psf(), 2.0), 0, 2.0, 4.0).lateral_fwhm;
  const double deep = measure_target(lone_target(linear_like_psf(), 14.0), 0, 14.0, 4.0).lateral_fwhm;
  CHECK(std::abs(shallow - deep) <= 1e-3);
}

TEST_CASE("PSF helpers") {
  const PsfModel p{0.25, 0.3, 0.06, 0.3};
  CHECK(p.lateral_sigma(10.0) == doctest::Approx(0.9));
  CHECK(p.lateral_fwhm(0.0) == doctest::Approx(2.0 * std::sqrt(2.0 * std::log(2.0)) * 0.3));
  CHECK(db_to_amplitude(20.0) == doctest::Approx(10.0));
  CHECK(db_to_amplitude(26.0) == doctest::Approx(19.9526).epsilon(1e-4));
  CHECK_THROWS_AS((PsfModel{0.0, 0.3, 0.0, 0.3}.validate()), ConfigError);
}

TEST_CASE("spec validation and warnings") {
  PhantomSpec s = speckle_spec(0);
  s.scatterer_density = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.point_targets = {{3.0, 3.0, 1.0}};
  CHECK_NOTHROW(s.validate());
  s = speckle_spec(0);
  s.rows = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = speckle_spec(0);
  s.scatterer_density = 0.5;
  const auto w = phantom_warnings(s);
  REQUIRE(w.size() == 1);
  CHECK(w[0].find("density") != std::string::npos);
  CHECK(phantom_warnings(speckle_spec(0)).empty());
}

TEST_CASE("zero motion leaves every frame bit-identical") {
  auto s = speckle_spec(2);
  const auto seq = render_sequence(s, AffineMotion{}, 3);
  REQUIRE(seq.frames.size() == 3);
  CHECK(seq.frames[0].samples == seq.frames[1].samples);
  CHECK(seq.frames[1].samples == seq.frames[2].samples);
  CHECK(seq.frames[0].samples == render_phantom(s).samples);
  CHECK(seq.frames[2].frame_index == 2);
}

TEST_CASE("rigid lateral translation is recovered by the tracker") {
  auto s = speckle_spec(6);
  s.rows = 128;
  s.cols = 96;
  AffineMotion m;
  m.lateral0 = 0.5;
  const auto seq = render_sequence(s, m, 2);
  CHECK(seq.truth[1].targets.empty());
  const auto field = track(seq.frames[0], seq.frames[1], TrackingConfig{});
  CHECK(median_valid(field, field.lateral) * s.lateral_spacing == doctest::Approx(0.5).epsilon(0.1));
  CHECK(std::abs(median_valid(field, field.axial) * s.axial_spacing) <= 0.05);
}

TEST_CASE("lateral shear shows up as a depth slope of lateral displacement") {
  auto s = speckle_spec(7);
  s.rows = 128;
  s.cols = 96;
  s.guard_mm = 3.0;
  AffineMotion m;
  m.lateral_per_axial = 0.02;
  const auto seq = render_sequence(s, m, 2, 2);
  const auto f = track(seq.frames[0], seq.frames[1], TrackingConfig{});
  std::vector<double> depth, lat;
  for (std::size_t i = 0; i < f.node_rows(); ++i) {
    for (std::size_t j = 0; j < f.node_cols(); ++j) {
      if (!f.valid(i, j)) continue;
      depth.push_back((f.node_row(i) + 16) * s.axial_spacing);  // kernel centre
      lat.push_back(f.lateral(i, j) * s.lateral_spacing);
    }
  }
  CHECK(slope(depth, lat) == doctest::Approx(0.02).epsilon(0.1));
}

TEST_CASE("motion beyond the guard band is rejected") {
  auto s = speckle_spec(8);
  s.guard_mm = 1.0;
  AffineMotion m;
  m.axial0 = 0.4;
  CHECK_NOTHROW(render_sequence(s, m, 3));
  CHECK_THROWS_WITH_AS(render_sequence(s, m, 5), doctest::Contains("guard"), DataError);
}

TEST_CASE("targets move with the tissue") {
  auto s = speckle_spec(9);
  s.point_targets = {{4.0, 5.0, 20.0}};
  AffineMotion m;
  m.axial0 = 0.2;
  m.lateral0 = -0.1;
  const auto seq = render_sequence(s, m, 3);
  CHECK(seq.truth[2].targets[0].axial_mm == doctest::Approx(4.4));
  CHECK(seq.truth[2].targets[0].lateral_mm == doctest::Approx(4.8));
}

TEST_CASE("synthesized dataset census and determinism") {
  const auto dir = testutil::scratch_dir("synth");
  const auto p = tiny_preset();
  const auto summary = synthesize_dataset(p, 21, dir / "a", 2);
  CHECK(summary.train_a == 12);
  CHECK(summary.train_b == 10);
  CHECK(summary.test == 3);
  CHECK(summary.sequence == 3);

  const auto train = read_manifest(dir / "a" / "train.manifest");
  CHECK(train.size() == 22);
  const auto ds = load_unpaired(dir / "a" / "train.manifest");
  CHECK(ds.domain_a.size() == 12);
  CHECK(ds.domain_b.size() == 10);
  for (const auto& f : ds.domain_a) {
    CHECK(f.rows() == 64);
    CHECK(f.cols() == 64);
    CHECK(*std::max_element(f.samples.values().begin(), f.samples.values().end()) == doctest::Approx(1.0));
  }
  for (const char* name : {"test.manifest", "test_reference.manifest", "sequence.manifest",
                           "sequence_reference.manifest", "rois.txt", "synth.txt", "test/targets.csv",
                           "sequence/truth.txt", "sequence/mask.txt", "sequence/targets.csv"}) {
    CHECK_MESSAGE(fs::exists(dir / "a" / name), name);
  }
  CHECK(read_roi_file(dir / "a" / "rois.txt").size() == 3);
  const auto targets = slurp(dir / "a" / "test" / "targets.csv");
  CHECK(targets.rfind("frame_index,target_id,axial_mm,lateral_mm\n", 0) == 0);
  CHECK(std::count(targets.begin(), targets.end(), '\n') == 1 + 3 * 5);

  synthesize_dataset(p, 21, dir / "b", 1);
  for (const auto& entry : fs::recursive_directory_iterator(dir / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir / "a");
    CHECK_MESSAGE(slurp(entry.path()) == slurp(dir / "b" / rel), rel.string());
  }

  auto empty = p;
  empty.train_a = empty.train_b = empty.test_frames = empty.sequence_frames = 0;
  CHECK_THROWS_AS(synthesize_dataset(empty, 1, dir / "c"), ConfigError);
  CHECK_THROWS_AS(preset_by_name("huge"), ConfigError);
}

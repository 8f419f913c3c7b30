#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <random>

#include "ccgan/dataset.hpp"
#include "ccgan/envelope.hpp"
#include "ccgan/errors.hpp"
#include "ccgan/frame_io.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace ccgan;

namespace {

// O(n^2) analytic signal straight from the DFT definition.
std::vector<double> naive_envelope(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> spec(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> s = 0.0;
    for (std::size_t t = 0; t < n; ++t) s += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * t) / double(n));
    spec[k] = s;
  }
  for (std::size_t k = 1; k < n; ++k) {
    if (2 * k < n) spec[k] *= 2.0;
    else if (2 * k > n) spec[k] = 0.0;
  }
  std::vector<double> env(n);
  for (std::size_t t = 0; t < n; ++t) {
    std::complex<double> s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += spec[k] * std::polar(1.0, 2.0 * std::numbers::pi * double(k * t) / double(n));
    env[t] = std::abs(s / double(n));
  }
  return env;
}

Grid<double> band_limited_noise(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Grid<double> raw(rows, cols), rf(rows, cols);
  for (auto& v : raw.values()) v = g(rng);
  // 5-tap moving average per line.
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (int k = -2; k <= 2; ++k) {
        const long rr = static_cast<long>(r) + k;
        if (rr >= 0 && rr < static_cast<long>(rows)) s += raw(static_cast<std::size_t>(rr), c);
      }
      rf(r, c) = s / 5.0;
    }
  }
  return rf;
}

}  // namespace

TEST_CASE("envelope of a pure tone is unit away from the edges") {
  const std::size_t n = 256, lines = 4;
  Grid<double> rf(n, lines);
  for (std::size_t c = 0; c < lines; ++c) {
    for (std::size_t t = 0; t < n; ++t) rf(t, c) = std::cos(2.0 * std::numbers::pi * 0.1237 * double(t));
  }
  const auto env = envelope_detect(rf, 0.05, 0.3);
  for (std::size_t c = 0; c < lines; ++c) {
    for (std::size_t t = n / 10; t < n - n / 10; ++t) CHECK(env.samples(t, c) == doctest::Approx(1.0).epsilon(0.01));
  }
  CHECK(env.axial_spacing == 0.05);
  CHECK(env.lateral_spacing == 0.3);
}

TEST_CASE("envelope of zeros is zero") {
  const auto env = envelope_detect(Grid<double>(32, 3, 0.0));
  for (double v : env.samples.values()) CHECK(v == 0.0);
}

TEST_CASE("envelope matches a naive DFT analytic signal") {
  for (std::size_t n : {64u, 65u}) {
    const auto rf = band_limited_noise(n, 3, 11 + n);
    const auto env = envelope_detect(rf);
    double worst = 0.0;
    for (std::size_t c = 0; c < rf.cols(); ++c) {
      std::vector<double> line(n);
      for (std::size_t t = 0; t < n; ++t) line[t] = rf(t, c);
      const auto ref = naive_envelope(line);
      for (std::size_t t = 0; t < n; ++t) worst = std::max(worst, std::abs(ref[t] - env.samples(t, c)));
    }
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("envelope is invariant under sign flip") {
  auto rf = band_limited_noise(128, 5, 3);
  const auto a = envelope_detect(rf);
  for (auto& v : rf.values()) v = -v;
  const auto b = envelope_detect(rf);
  for (std::size_t i = 0; i < a.samples.size(); ++i) CHECK(std::abs(a.samples.data()[i] - b.samples.data()[i]) <= 1e-12);
}

TEST_CASE("envelope rejects lines shorter than the filter support") {
  CHECK_THROWS_AS(envelope_detect(Grid<double>(7, 4, 1.0)), DataError);
  CHECK_NOTHROW(envelope_detect(Grid<double>(8, 4, 1.0)));
}

TEST_CASE("normalize divides by the maximum") {
  EnvelopeImage img;
  img.samples = Grid<double>(1, 3);
  img.samples(0, 0) = 0;
  img.samples(0, 1) = 2;
  img.samples(0, 2) = 4;
  const auto n = normalize(img);
  CHECK(n.samples(0, 0) == 0.0);
  CHECK(n.samples(0, 1) == 0.5);
  CHECK(n.samples(0, 2) == 1.0);
}

TEST_CASE("normalize is idempotent and preserves ratios") {
  const auto img = testutil::uniform_frame(40, 30, 5, 0.01, 7.0);
  const auto once = normalize(img);
  const auto twice = normalize(once);
  CHECK(once == twice);
  CHECK(*std::max_element(once.samples.values().begin(), once.samples.values().end()) == 1.0);
  for (std::size_t i = 1; i < img.samples.size(); i += 37) {
    const double before = img.samples.data()[i] / img.samples.data()[i - 1];
    const double after = once.samples.data()[i] / once.samples.data()[i - 1];
    CHECK(std::abs(before - after) <= 1e-12 * std::abs(before));
  }
}

TEST_CASE("normalize rejects degenerate and invalid frames") {
  EnvelopeImage zero;
  zero.samples = Grid<double>(4, 4, 0.0);
  CHECK_THROWS_WITH_AS(normalize(zero), doctest::Contains("degenerate frame"), DataError);
  auto neg = testutil::uniform_frame(4, 4, 1);
  neg.samples(1, 1) = -0.5;
  CHECK_THROWS_AS(normalize(neg), DataError);
  CHECK_FALSE(is_valid_envelope(neg));
}

TEST_CASE("resampling a model-sized frame is the identity") {
  auto img = testutil::uniform_frame(256, 256, 9);
  img.axial_spacing = 0.1;
  img.lateral_spacing = 0.3;
  const auto out = resample_to_model_grid(img);
  CHECK(out == img);
}

TEST_CASE("resampling a constant frame keeps the value exactly") {
  EnvelopeImage img;
  img.samples = Grid<double>(128, 128, 0.3718);
  const auto out = resample_to_model_grid(img);
  REQUIRE(out.rows() == 256);
  REQUIRE(out.cols() == 256);
  // Every sample equal to the input value means the frame mean is unchanged.
  for (double v : out.samples.values()) CHECK(v == 0.3718);
}

TEST_CASE("resampling an axial ramp keeps it linear with fixed endpoints") {
  EnvelopeImage img;
  img.samples = Grid<double>(100, 20);
  img.axial_spacing = 0.2;
  img.lateral_spacing = 0.5;
  for (std::size_t r = 0; r < 100; ++r) {
    for (std::size_t c = 0; c < 20; ++c) img.samples(r, c) = 0.25 + 0.5 * double(r) / 99.0;
  }
  const auto out = resample_to_model_grid(img);
  for (std::size_t c = 0; c < 256; ++c) {
    CHECK(std::abs(out.samples(0, c) - 0.25) <= 1e-6);
    CHECK(std::abs(out.samples(255, c) - 0.75) <= 1e-6);
  }
  for (std::size_t r = 0; r < 256; ++r) CHECK(std::abs(out.samples(r, 7) - (0.25 + 0.5 * double(r) / 255.0)) <= 1e-6);
  // Physical extent is preserved.
  CHECK(out.axial_spacing * 255 == doctest::Approx(0.2 * 99));
  CHECK(out.lateral_spacing * 255 == doctest::Approx(0.5 * 19));
}

TEST_CASE("resampling rejects bad inputs") {
  auto small = testutil::uniform_frame(15, 40, 1);
  CHECK_THROWS_AS(resample_to_model_grid(small), DataError);
  auto bad = testutil::uniform_frame(32, 32, 1);
  bad.axial_spacing = 0.0;
  CHECK_THROWS(resample_to_model_grid(bad));
  bad.axial_spacing = 1.0;
  bad.lateral_spacing = -1.0;
  CHECK_THROWS(resample_to_model_grid(bad));
}

TEST_CASE("frame container round trip is bit exact") {
  const auto dir = testutil::scratch_dir("frame_io");
  EnvelopeImage img = testutil::uniform_frame(17, 23, 4);
  for (auto& v : img.samples.values()) v = static_cast<float>(v);
  img.axial_spacing = 0.0771;
  img.lateral_spacing = 0.3;
  img.domain = Domain::linear;
  img.frame_index = 42;
  write_frame(dir / "a.ccf", img);
  CHECK(read_frame(dir / "a.ccf") == img);

  std::ifstream f(dir / "a.ccf", std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  CHECK(bytes.size() == kFrameHeaderBytes + 17 * 23 * 4);
  CHECK(std::string(bytes.data(), 6) == "CCGENV");

  std::vector<std::uint8_t> junk(100, 0);
  CHECK_THROWS_AS(decode_container(junk), DataError);
  auto enc = encode_container({{Grid<float>(2, 2, 1.0f)}, 1.0, 1.0, Domain::phased, 0});
  enc.pop_back();
  CHECK_THROWS_AS(decode_container(enc), DataError);
}

TEST_CASE("manifest round trip and unpaired loading") {
  const auto dir = testutil::scratch_dir("manifest");
  std::vector<ManifestRecord> recs;
  for (std::uint32_t i = 0; i < 3; ++i) {
    auto img = testutil::uniform_frame(16, 16, i);
    img.domain = i < 2 ? Domain::phased : Domain::linear;
    const auto name = "f" + std::to_string(i) + ".ccf";
    write_frame(dir / name, img);
    recs.push_back({name, img.domain, i});
  }
  write_manifest(dir / "m.txt", recs);
  const auto back = read_manifest(dir / "m.txt");
  REQUIRE(back.size() == 3);
  CHECK(back[2].domain == Domain::linear);
  CHECK(back[1].path == dir / "f1.ccf");
  const auto ds = load_unpaired(dir / "m.txt");
  CHECK(ds.domain_a.size() == 2);
  CHECK(ds.domain_b.size() == 1);

  recs.push_back({"f0.ccf", Domain::generated, 9});
  write_manifest(dir / "bad.txt", recs);
  CHECK_THROWS_AS(load_unpaired(dir / "bad.txt"), DataError);

  write_frame(dir / "big.ccf", testutil::uniform_frame(32, 16, 1));
  recs.back() = {"big.ccf", Domain::linear, 9};
  write_manifest(dir / "shape.txt", recs);
  CHECK_THROWS_AS(load_unpaired(dir / "shape.txt"), DataError);
}

TEST_CASE("validation hold-out count") {
  CHECK(validation_count(2135, 0.10) == 213);
  CHECK(validation_count(1100, 0.10) + validation_count(1035, 0.10) == 213);
  CHECK(validation_count(5, 0.0) == 0);
  CHECK_THROWS_AS(validation_count(10, 1.0), ConfigError);
  CHECK_THROWS_AS(validation_count(10, -0.1), ConfigError);
}

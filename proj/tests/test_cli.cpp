#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ccgan/dataset.hpp"
#include "ccgan/errors.hpp"
#include "ccgan/frame_io.hpp"
#include "ccgan/pipeline.hpp"
#include "ccgan/run_config.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace ccgan;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

std::size_t data_lines(const fs::path& p) {
  std::ifstream f(p);
  std::string line;
  std::size_t n = 0;
  bool header = true;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    ++n;
  }
  return n;
}

// Runs the command-line tool and returns its exit status.
int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(CCGAN_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

EnvelopeImage blob(std::size_t n, double z0, double x0, double z1, double x1) {
  EnvelopeImage img;
  img.samples = Grid<double>(n, n, 0.0);
  img.axial_spacing = img.lateral_spacing = 0.1;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double z = r * 0.1, x = c * 0.1;
      img.samples(r, c) = std::exp(-((z - z0) * (z - z0) + (x - x0) * (x - x0)) / 0.05) +
                          std::exp(-((z - z1) * (z - z1) + (x - x1) * (x - x1)) / 0.05);
    }
  }
  return img;
}

const char* kFullConfig = R"(# comment line
version = 1
[synth]
preset = tiny
seed = 9
train_a = 5   ; trailing comment
[train]
epochs = 4
lr_decay_start_epoch = 2
batch_size = 2
lambda3 = 0
discriminator_channels = 8, 16, 1
discriminator_strides = 2,1,1
generator_base_channels = 4
generator_modules = 1
[eval]
roi_lateral_mm = 3.5
rois = rois.txt
[track]
kernel_axial = 16
subsample_fit = off
)";

}  // namespace

TEST_CASE("configuration parsing") {
  const auto c = parse_run_config(kFullConfig, {}, "/data/cfg");
  CHECK(c.synth.preset.name == "tiny");
  CHECK(c.synth.seed == 9);
  CHECK(c.synth.preset.train_a == 5);
  CHECK(c.synth.preset.train_b == 10);
  CHECK(c.train.epochs == 4);
  CHECK(c.train.weights.lambda3 == 0.0);
  CHECK(c.train.weights.lambda2 == 5.0);
  CHECK(c.train.discriminator.channels == std::vector<int>{8, 16, 1});
  CHECK(c.eval.roi_lateral_mm == 3.5);
  CHECK(c.eval.roi_axial_mm == 4.0);
  CHECK(c.eval.rois == fs::path("/data/cfg/rois.txt"));
  CHECK(c.track.tracking.kernel_axial == 16);
  CHECK_FALSE(c.track.tracking.subsample_fit);

  // Preset applies before the other synth keys whatever the order.
  const auto d = parse_run_config("version = 1\n[synth]\ntrain_a = 7\npreset = tiny\n");
  CHECK(d.synth.preset.train_a == 7);

  const auto defaults = parse_run_config("");
  CHECK(defaults.train.epochs == 200);
  CHECK(defaults.synth.preset.name == "desk");
}

TEST_CASE("configuration errors") {
  CHECK_THROWS_WITH_AS(parse_run_config("version = 1\n[train]\nepochs = 3\nlearning_rate = 1\n"),
                       doctest::Contains("line 4: train.learning_rate: unknown key"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("version = 1\n[model]\n"), doctest::Contains("unknown section [model]"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("version = 1\n[train]\nepochs = 3\nepochs = 4\n"),
                       doctest::Contains("duplicate key"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("[train]\nepochs = 3\n"), doctest::Contains("version"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("version = 2\n"), doctest::Contains("unsupported configuration version"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("version = 1\n[train]\nepochs = ten\n"),
                       doctest::Contains("not a valid number"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("version = 1\n[train]\nepochs = 3x\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("version = 1\n[track]\nsubsample_fit = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("version = 1\n[train]\nbatch_size = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("version = 1\n[synth]\npreset = huge\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("version = 1\nepochs = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("version = 1\n[train]\njust words\n"), ConfigError);
}

TEST_CASE("overrides replace file values") {
  const auto c = parse_run_config(kFullConfig, {"train.epochs=9", "synth.seed = 4", "track.iterations=2"});
  CHECK(c.train.epochs == 9);
  CHECK(c.synth.seed == 4);
  CHECK(c.track.tracking.iterations == 2);
  CHECK_THROWS_AS(parse_run_config(kFullConfig, {"train.nope=1"}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(kFullConfig, {"epochs=1"}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(kFullConfig, {"model.x=1"}), ConfigError);
}

TEST_CASE("snapshot parses back to the same configuration") {
  const auto c = parse_run_config(kFullConfig, {"train.adam_eps=3e-9", "train.init_std=0.015"}, "/data/cfg");
  const auto text = snapshot(c);
  const auto back = parse_run_config(text);
  CHECK(snapshot(back) == text);
  CHECK(back.train.adam.eps == 3e-9);
  CHECK(back.train.generator == c.train.generator);
  CHECK(back.train.discriminator == c.train.discriminator);
  CHECK(back.synth.preset.train_a == 5);
  CHECK(back.eval.rois == c.eval.rois);
  CHECK(text.rfind("version = 1\n", 0) == 0);
  // Every training key is echoed, so the snapshot is complete.
  for (const char* key : {"epochs", "lr_initial", "lambda1", "lambda2", "lambda3", "seed", "discriminator_strides",
                          "generator_convs_per_module", "kernel_axial", "subsample_fit", "deep_depth_mm"}) {
    CHECK_MESSAGE(text.find(std::string("\n") + key + " = ") != std::string::npos, key);
  }
}

TEST_CASE("CSV headers are stable") {
  CHECK(std::string(kLossLogColumns) == "step,epoch,adv_g,adv_d,cyc,idt,cc,total");
  CHECK(std::string(kResolutionColumns) ==
        "source,frame_index,target_id,depth_mm,axial_fwhm_mm,lateral_fwhm_mm,peak_axial_mm,peak_lateral_mm,status");
  CHECK(std::string(kResolutionSummaryColumns) ==
        "source,target_id,depth_mm,axial_fwhm_mean_mm,axial_fwhm_std_mm,lateral_fwhm_mean_mm,lateral_fwhm_std_mm,"
        "frames,failed");
  CHECK(std::string(kNakagamiColumns) == "source,frame_index,roi,m,samples");
  CHECK(std::string(kNakagamiSummaryColumns) == "source,roi,m_mean,m_std,frames");
  CHECK(std::string(kImageQualityColumns) == "source,frame_index,ssim,psnr_db");
  CHECK(std::string(kTTestColumns) == "metric,group,comparison,mean_difference,t,dof,p_two_sided");
  CHECK(std::string(kTrackingColumns) ==
        "source,pair,mask,valid_nodes,mean_axial_mm,mean_lateral_mm,mean_correlation,rmsd_before,rmsd_after");
  CHECK(std::string(kFieldSsimColumns) == "source,reference,pair,mask,ssim_axial,ssim_lateral");
  CHECK(std::string(kAblationColumns) ==
        "configuration,seed,lambda1,lambda2,lambda3,axial_fwhm_mean_mm,lateral_fwhm_mean_mm,"
        "deep_lateral_fwhm_mean_mm,nakagami_m_mean,nakagami_m_std,pearson_min,final_total,frames");
  CHECK(std::string(kEpochLossColumns) == "epoch,adv_g,adv_d,cyc,idt,cc,total");

  // Writers emit exactly these headers, even with no rows.
  CHECK(first_line(resolution_csv({})) == kResolutionColumns);
  CHECK(first_line(resolution_summary_csv({})) == kResolutionSummaryColumns);
  CHECK(first_line(nakagami_csv({})) == kNakagamiColumns);
  CHECK(first_line(nakagami_summary_csv({})) == kNakagamiSummaryColumns);
  CHECK(first_line(image_quality_csv({})) == kImageQualityColumns);
  CHECK(first_line(tracking_csv({})) == kTrackingColumns);
  CHECK(first_line(field_ssim_csv({})) == kFieldSsimColumns);
  CHECK(first_line(ablation_csv({})) == kAblationColumns);
}

TEST_CASE("resolution rows keep unmeasurable targets with their status") {
  // Target 0 is a clean blob; target 1 sits between two equal blobs.
  auto f = blob(61, 1.5, 1.5, 4.5, 4.5);
  f.frame_index = 2;
  TargetTable targets{{2, {{0, 1.5, 1.5}, {1, 3.0, 3.0}}}};
  EvalSection eval;
  eval.roi_axial_mm = 2.0;
  eval.roi_lateral_mm = 2.0;
  auto rows = evaluate_resolution("x", {f}, targets, eval);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].ok());
  CHECK(rows[0].m.lateral_fwhm == doctest::Approx(2 * std::sqrt(std::log(2.0) * 0.05)).epsilon(0.02));

  // Two equal peaks inside one window: ambiguous.
  auto twin = blob(61, 3.0, 2.6, 3.0, 3.4);
  twin.samples(30, 26) = twin.samples(30, 34) = 5.0;
  twin.frame_index = 2;
  rows = evaluate_resolution("x", {twin}, TargetTable{{2, {{0, 3.0, 3.0}}}}, eval);
  REQUIRE(rows.size() == 1);
  CHECK_FALSE(rows[0].ok());
  CHECK(rows[0].status == "ambiguous peak");
  CHECK(std::isnan(rows[0].m.lateral_fwhm));
  const auto summary = resolution_summary_csv(rows);
  CHECK(summary.find("x,0,3,nan,nan,nan,nan,0,1\n") != std::string::npos);

  CHECK_THROWS_AS(evaluate_resolution("x", {f}, TargetTable{{7, {}}}, eval), DataError);
}

TEST_CASE("CSV reader and epoch means") {
  const auto dir = testutil::scratch_dir("csv");
  write_text_atomic(dir / "log.csv",
                    "# a comment\nstep,epoch,adv_g,adv_d,cyc,idt,cc,total\n"
                    "1,1,1,2,3,4,5,6\n2,1,3,2,1,0,1,2\n3,2,0.5,0.5,0.5,0.5,0.5,0.5\n");
  const auto t = read_csv(dir / "log.csv");
  CHECK(t.rows.size() == 3);
  CHECK(t.number(1, "adv_g") == 3.0);
  CHECK_THROWS_AS(t.column("nope"), DataError);
  CHECK(epoch_loss_csv(t) == "epoch,adv_g,adv_d,cyc,idt,cc,total\n1,2,2,2,2,3,4\n2,0.5,0.5,0.5,0.5,0.5,0.5\n");

  write_text_atomic(dir / "bad.csv", "a,b\n1\n");
  CHECK_THROWS_AS(read_csv(dir / "bad.csv"), DataError);
  write_text_atomic(dir / "nan.csv", "a,b\nnan,inf\n");
  CHECK(std::isnan(read_csv(dir / "nan.csv").number(0, "a")));
  CHECK(std::isinf(read_csv(dir / "nan.csv").number(0, "b")));
}

TEST_CASE("Pearson correlation helper") {
  const auto a = testutil::uniform_frame(16, 16, 1);
  auto b = a;
  for (auto& v : b.samples.values()) v = 3.0 * v + 1.0;
  CHECK(pearson(a, b) == doctest::Approx(1.0).epsilon(1e-12));
  for (auto& v : b.samples.values()) v = -v;
  CHECK(pearson(a, b) == doctest::Approx(-1.0).epsilon(1e-12));
  EnvelopeImage flat;
  flat.samples = Grid<double>(16, 16, 0.5);
  CHECK_THROWS_AS(pearson(a, flat), MetricError);
}

TEST_CASE("ablation matrix covers the four loss configurations") {
  const auto m = ablation_matrix(LossWeights{});
  REQUIRE(m.size() == 4);
  CHECK(m[0].name == "baseline");
  CHECK(m[0].weights.is_vanilla());
  CHECK(m[1].weights == LossWeights{10, 5, 0});
  CHECK(m[2].weights == LossWeights{10, 0, 5});
  CHECK(m[3].weights == LossWeights{10, 5, 5});
  const auto n = ablation_matrix(LossWeights{8, 0, 2});
  CHECK(n[1].weights == LossWeights{8, 5, 0});
  CHECK(n[3].weights == LossWeights{8, 5, 2});
}

TEST_CASE("command-line pipeline on the tiny preset") {
  const auto dir = testutil::scratch_dir("cli");
  const auto log = dir / "out.txt";
  const std::string cfg = std::string(" --config ") + CCGAN_SOURCE_DIR + "/configs/tiny.conf";
  const auto d = dir / "data";

  REQUIRE(run("synth" + cfg + " --out " + d.string(), log) == 0);
  CHECK(fs::exists(d / "run_config.txt"));
  CHECK(run("synth" + cfg + " --out " + d.string(), log) == 2);
  CHECK(slurp(log).find("--force") != std::string::npos);

  const auto r = dir / "run";
  REQUIRE(run("train" + cfg + " --epochs 1 --data " + d.string() + " --run " + r.string(), log) == 0);
  CHECK(fs::exists(r / "exported" / "G_A.ccw"));
  CHECK(fs::exists(r / "run_config.txt"));
  CHECK(slurp(r / "loss_log.csv").find("# objective: constrained CycleGAN") != std::string::npos);
  CHECK(first_line(slurp(r / "epoch_losses.csv")) == kEpochLossColumns);

  const auto rb = dir / "baseline";
  REQUIRE(run("train" + cfg + " --epochs 1 --set train.lambda2=0 train.lambda3=0 --data " + d.string() + " --run " +
                  rb.string(),
              log) == 0);
  CHECK(slurp(rb / "loss_log.csv").find("# baseline: vanilla CycleGAN") != std::string::npos);

  const auto tr = dir / "translated";
  REQUIRE(run("translate --weights " + (r / "exported" / "G_A.ccw").string() + " --manifest " +
                  (d / "test.manifest").string() + " --out " + tr.string(),
              log) == 0);
  const auto frames = load_frames(tr / "translated.manifest");
  CHECK(frames.size() == 3);
  CHECK(frames[0].domain == Domain::generated);

  // One resolution row per point target per frame.
  const auto e = dir / "eval";
  REQUIRE(run("eval-resolution" + cfg + " --input input=" + (d / "test.manifest").string() + " --input ccgan=" +
                  (tr / "translated.manifest").string() + " --targets " + (d / "test" / "targets.csv").string() +
                  " --out " + e.string(),
              log) == 0);
  CHECK(first_line(slurp(e / "resolution.csv")) == kResolutionColumns);
  CHECK(data_lines(e / "resolution.csv") == 2 * data_lines(d / "test" / "targets.csv"));
  CHECK(data_lines(e / "resolution_summary.csv") == 2 * 5);

  const auto k = dir / "track";
  REQUIRE(run("track --input a=" + (d / "sequence.manifest").string() + " --input b=" +
                  (d / "sequence_reference.manifest").string() + " --reference b --mask " +
                  (d / "sequence" / "mask.txt").string() + " --out " + k.string(),
              log) == 0);
  CHECK(data_lines(k / "tracking.csv") == 4);
  CHECK(data_lines(k / "field_ssim.csv") == 2);
  CHECK(fs::exists(k / "fields" / "a" / "pair_0001.ccf"));

  const auto rep = dir / "report";
  REQUIRE(run("report --resolution " + (e / "resolution.csv").string() + " --loss-log " +
                  (r / "loss_log.csv").string() + " --reference input --out " + rep.string() + " --plots",
              log) == 0);
  CHECK(data_lines(rep / "t_tests.csv") == 2 * 5);
  CHECK(fs::exists(rep / "epoch_losses.svg"));

  // Failure classes map to distinct exit codes.
  CHECK(run("train" + cfg + " --set train.bogus=1 --data " + d.string() + " --run " + (dir / "x1").string(), log) == 2);
  CHECK(run("train" + cfg + " --data " + (dir / "missing").string() + " --run " + (dir / "x2").string(), log) == 3);
  CHECK_FALSE(fs::exists(dir / "x2"));
  write_text_atomic(dir / "tiny_roi.txt", "speck 0 0 0.3 0.3\n");
  CHECK(run("eval-nakagami --input x=" + (d / "test.manifest").string() + " --rois " +
                (dir / "tiny_roi.txt").string() + " --out " + (dir / "x3").string(),
            log) == 5);
  CHECK(run("frobnicate", log) == 2);

  // A non-finite training frame aborts with the divergence code.
  auto bad = read_frame(d / "train" / "phased" / "0000.ccf");
  bad.samples(3, 3) = std::nan("");
  fs::create_directories(dir / "bad");
  write_frame(dir / "bad" / "a.ccf", bad);
  std::vector<ManifestRecord> recs{{dir / "bad" / "a.ccf", Domain::phased, 0}};
  for (std::uint32_t i = 0; i < 4; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04u.ccf", i);
    recs.push_back({d / "train" / "phased" / name, Domain::phased, i + 1});
    recs.push_back({d / "train" / "linear" / name, Domain::linear, i});
  }
  write_manifest(dir / "bad.manifest", recs);
  CHECK(run("train" + cfg + " --set train.validation_fraction=0 --data " + (dir / "bad.manifest").string() +
                " --run " + (dir / "x4").string(),
            log) == 4);
  CHECK(slurp(log).find("diverged") != std::string::npos);
}

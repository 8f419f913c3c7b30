// ccgan: synthesize data, train, translate, evaluate, track and report.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 configuration error, 3 data
// error, 4 training divergence, 5 metric precondition failure.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ccgan/dataset.hpp"
#include "ccgan/errors.hpp"
#include "ccgan/frame_io.hpp"
#include "ccgan/metrics.hpp"
#include "ccgan/nn/weights_io.hpp"
#include "ccgan/phantom.hpp"
#include "ccgan/pipeline.hpp"
#include "ccgan/run_config.hpp"
#include "ccgan/svg_plot.hpp"
#include "ccgan/tracking.hpp"
#include "ccgan/training.hpp"

namespace fs = std::filesystem;
using namespace ccgan;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kDivergence = 4, kMetric = 5 };

struct Common {
  std::optional<fs::path> config;
  std::vector<std::string> set;
  unsigned workers = 1;
  bool force = false;
  bool plots = false;
};

unsigned default_workers() {
  if (const char* env = std::getenv("CCGAN_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("CCGAN_WORKERS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

void add_common(CLI::App* sub, Common& c, bool output_dir) {
  sub->add_option("--config", c.config, "configuration file (version = 1, [synth]/[train]/[eval]/[track])");
  sub->add_option("--set", c.set, "override one configuration value, e.g. --set train.epochs=5");
  sub->add_option("--workers", c.workers, "worker threads (default: $CCGAN_WORKERS or 1)");
  if (output_dir) sub->add_flag("--force", c.force, "write into an existing non-empty output directory");
  sub->add_flag("--plots", c.plots, "also write SVG plots");
}

// "name=path" or a bare path named after its stem.
std::pair<std::string, fs::path> named_input(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) return {fs::path(spec).stem().string(), fs::path(spec)};
  if (eq == 0) throw ConfigError("input '" + spec + "' has an empty name");
  return {spec.substr(0, eq), fs::path(spec.substr(eq + 1))};
}

std::vector<std::pair<std::string, fs::path>> named_inputs(const std::vector<std::string>& specs) {
  std::vector<std::pair<std::string, fs::path>> out;
  std::set<std::string> names;
  for (const auto& s : specs) {
    auto in = named_input(s);
    if (in.first.find(',') != std::string::npos) throw ConfigError("input name '" + in.first + "' contains a comma");
    if (!names.insert(in.first).second) throw ConfigError("input name '" + in.first + "' given twice");
    out.push_back(std::move(in));
  }
  return out;
}

void prepare_output(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw ConfigError(dir.string() + " exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw ConfigError("output directory " + dir.string() + " exists and is not empty (use --force)");
  }
  fs::create_directories(dir);
}

// Resolved configuration plus the command line that produced it.
void write_snapshot(const fs::path& dir, const RunConfig& cfg, const std::vector<std::string>& argv) {
  std::string cmd = "# command:";
  for (const auto& a : argv) cmd += " " + a;
  write_text_atomic(dir / "run_config.txt", cmd + "\n" + snapshot(cfg));
}

RunConfig load(const Common& c, std::vector<std::string> extra = {}) {
  auto overrides = c.set;
  overrides.insert(overrides.end(), extra.begin(), extra.end());
  return load_run_config(c.config, overrides);
}

fs::path pick(const std::optional<fs::path>& flag, const fs::path& from_config, const char* what) {
  if (flag) return *flag;
  if (!from_config.empty()) return from_config;
  throw ConfigError(std::string("no ") + what + " given (flag or configuration)");
}

std::optional<RoiRect> first_rect(const fs::path& path) {
  if (path.empty()) return std::nullopt;
  const auto rects = read_roi_file(path);
  if (rects.empty()) throw DataError(path.string() + ": no rectangles");
  return rects.front();
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  Common c;
  fs::path out;
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a, const std::vector<std::string>& argv) {
  std::vector<std::string> extra;
  if (a.preset) extra.push_back("synth.preset=" + *a.preset);
  if (a.seed) extra.push_back("synth.seed=" + std::to_string(*a.seed));
  const auto cfg = load(a.c, extra);
  prepare_output(a.out, a.c.force);
  const auto s = synthesize_dataset(cfg.synth.preset, cfg.synth.seed, a.out, a.c.workers);
  write_snapshot(a.out, cfg, argv);
  for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "synth: preset " << cfg.synth.preset.name << ", seed " << cfg.synth.seed << ": " << s.train_a
            << " + " << s.train_b << " training, " << s.test << " test, " << s.sequence << " sequence frames -> "
            << a.out.string() << "\n";
  return kOk;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  Common c;
  fs::path data;
  fs::path run;
  std::optional<std::string> resume;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
};

fs::path train_manifest(const fs::path& data) {
  return fs::is_directory(data) ? data / "train.manifest" : data;
}

fs::path latest_checkpoint(const fs::path& run) {
  fs::path best;
  if (fs::is_directory(run / "checkpoints")) {
    for (const auto& e : fs::directory_iterator(run / "checkpoints")) {
      const auto name = e.path().filename().string();
      if (e.is_directory() && name.rfind("epoch_", 0) == 0 && (best.empty() || name > best.filename().string())) {
        best = e.path();
      }
    }
  }
  if (best.empty()) throw DataError("no checkpoint found under " + (run / "checkpoints").string());
  return best;
}

void loss_plot(const fs::path& run) {
  const auto log = read_csv(run / "loss_log.csv");
  svg::Series total{"total", {}, {}}, adv{"adv_g", {}, {}}, cyc{"cyc", {}, {}};
  for (std::size_t r = 0; r < log.rows.size(); ++r) {
    const double step = log.number(r, "step");
    total.x.push_back(step);
    total.y.push_back(log.number(r, "total"));
    adv.x.push_back(step);
    adv.y.push_back(log.number(r, "adv_g"));
    cyc.x.push_back(step);
    cyc.y.push_back(log.number(r, "cyc"));
  }
  write_text_atomic(run / "loss_curve.svg", svg::line_plot("Generator objective", "step", "loss", {total, adv, cyc}));
}

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  std::vector<std::string> extra;
  if (a.epochs) extra.push_back("train.epochs=" + std::to_string(*a.epochs));
  if (a.seed) extra.push_back("train.seed=" + std::to_string(*a.seed));
  const auto cfg = load(a.c, extra);
  const auto dataset = load_unpaired(train_manifest(a.data));
  TrainOptions opts;
  opts.run_dir = a.run;
  if (a.resume) {
    opts.resume_from = *a.resume == "latest" ? latest_checkpoint(a.run) : fs::path(*a.resume);
    if (!fs::is_directory(*opts.resume_from)) throw DataError("checkpoint " + opts.resume_from->string() + " not found");
  } else {
    prepare_output(a.run, a.c.force);
  }
  const auto t0 = std::chrono::steady_clock::now();
  opts.on_epoch = [&](int epoch, const LossReport& m) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "epoch " << epoch << "/" << cfg.train.epochs << "  total " << m.total << "  adv_g " << m.adv_g
              << "  adv_d " << m.adv_d << "  cyc " << m.cyc << "  idt " << m.idt << "  cc " << m.cc << "  ("
              << static_cast<int>(s) << " s)\n";
  };
  const auto result = train<float>(dataset, cfg.train, opts);
  write_snapshot(a.run, cfg, argv);
  write_text_atomic(a.run / "epoch_losses.csv", epoch_loss_csv(read_csv(a.run / "loss_log.csv")));
  if (a.c.plots) loss_plot(a.run);
  std::cout << "train: " << result.train_a << " + " << result.train_b << " frames (" << result.validation_a << " + "
            << result.validation_b << " held out), " << result.epoch_means.size() << " epochs -> "
            << (a.run / "exported").string() << "\n";
  return kOk;
}

// --- translate -------------------------------------------------------------

struct TranslateArgs {
  Common c;
  fs::path weights;
  fs::path manifest;
  fs::path out;
  std::size_t batch = 10;
};

int cmd_translate(const TranslateArgs& a, const std::vector<std::string>& argv) {
  const auto cfg = load(a.c);
  prepare_output(a.out, a.c.force);
  auto g = nn::load_generator<float>(a.weights);
  const auto frames = load_frames(a.manifest);
  const auto out = translate(*g, frames, a.batch);
  write_frame_set(a.out / "frames", out, a.out / "translated.manifest");
  write_snapshot(a.out, cfg, argv);
  std::cout << "translate: " << out.size() << " frames -> " << (a.out / "translated.manifest").string() << "\n";
  return kOk;
}

// --- eval-resolution -------------------------------------------------------

struct EvalArgs {
  Common c;
  std::vector<std::string> inputs;
  std::optional<fs::path> targets;
  std::optional<fs::path> rois;
  std::optional<fs::path> reference;
  fs::path out;
};

int cmd_eval_resolution(const EvalArgs& a, const std::vector<std::string>& argv) {
  const auto cfg = load(a.c);
  const auto targets = read_targets(pick(a.targets, cfg.eval.targets, "point-target file (--targets)"));
  prepare_output(a.out, a.c.force);
  std::vector<ResolutionRow> rows;
  for (const auto& [name, manifest] : named_inputs(a.inputs)) {
    const auto r = evaluate_resolution(name, load_frames(manifest), targets, cfg.eval);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  write_text_atomic(a.out / "resolution.csv", resolution_csv(rows));
  write_text_atomic(a.out / "resolution_summary.csv", resolution_summary_csv(rows));
  write_snapshot(a.out, cfg, argv);
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.ok() ? 0 : 1;
  if (failed) std::cerr << "warning: " << failed << " of " << rows.size() << " targets could not be measured\n";

  if (a.c.plots) {
    const auto summary = read_csv(a.out / "resolution_summary.csv");
    std::vector<std::string> cats;
    std::map<std::string, svg::Series> by_source;
    std::vector<std::string> order;
    for (std::size_t r = 0; r < summary.rows.size(); ++r) {
      const auto& src = summary.text(r, "source");
      const auto label = summary.text(r, "depth_mm") + " mm";
      if (std::find(cats.begin(), cats.end(), label) == cats.end()) cats.push_back(label);
      if (!by_source.count(src)) order.push_back(src);
      auto& s = by_source[src];
      s.name = src;
      s.y.push_back(summary.number(r, "lateral_fwhm_mean_mm"));
    }
    std::vector<svg::Series> series;
    for (const auto& s : order) series.push_back(by_source[s]);
    write_text_atomic(a.out / "lateral_fwhm.svg", svg::bar_chart("Lateral FWHM by target depth", "mm", cats, series));
  }
  std::cout << "eval-resolution: " << rows.size() << " rows -> " << (a.out / "resolution.csv").string() << "\n";
  return kOk;
}

// --- eval-nakagami ---------------------------------------------------------

int cmd_eval_nakagami(const EvalArgs& a, const std::vector<std::string>& argv) {
  const auto cfg = load(a.c);
  const auto rois = read_roi_file(pick(a.rois, cfg.eval.rois, "ROI file (--rois)"));
  prepare_output(a.out, a.c.force);
  std::vector<NakagamiRow> rows;
  for (const auto& [name, manifest] : named_inputs(a.inputs)) {
    const auto r = evaluate_nakagami(name, load_frames(manifest), rois);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  write_text_atomic(a.out / "nakagami.csv", nakagami_csv(rows));
  write_text_atomic(a.out / "nakagami_summary.csv", nakagami_summary_csv(rows));
  write_snapshot(a.out, cfg, argv);
  if (a.c.plots) {
    const auto summary = read_csv(a.out / "nakagami_summary.csv");
    std::vector<std::string> cats;
    std::map<std::string, svg::Series> by_source;
    std::vector<std::string> order;
    for (std::size_t r = 0; r < summary.rows.size(); ++r) {
      const auto& src = summary.text(r, "source");
      const auto& roi = summary.text(r, "roi");
      if (std::find(cats.begin(), cats.end(), roi) == cats.end()) cats.push_back(roi);
      if (!by_source.count(src)) order.push_back(src);
      by_source[src].name = src;
      by_source[src].y.push_back(summary.number(r, "m_mean"));
    }
    std::vector<svg::Series> series;
    for (const auto& s : order) series.push_back(by_source[s]);
    write_text_atomic(a.out / "nakagami_m.svg", svg::bar_chart("Nakagami m by ROI", "m", cats, series));
  }
  std::cout << "eval-nakagami: " << rows.size() << " rows -> " << (a.out / "nakagami.csv").string() << "\n";
  return kOk;
}

// --- eval-image-quality ----------------------------------------------------

int cmd_eval_image_quality(const EvalArgs& a, const std::vector<std::string>& argv) {
  const auto cfg = load(a.c);
  if (!a.reference) throw ConfigError("eval-image-quality needs --reference");
  const auto reference = load_frames(*a.reference);
  prepare_output(a.out, a.c.force);
  std::vector<ImageQualityRow> rows;
  std::vector<svg::Series> ssim_series, psnr_series;
  for (const auto& [name, manifest] : named_inputs(a.inputs)) {
    const auto r = evaluate_image_quality(name, reference, load_frames(manifest));
    svg::Series s{name, {}, {}}, p{name, {}, {}};
    for (const auto& row : r) {
      s.x.push_back(row.frame_index);
      s.y.push_back(row.ssim);
      p.x.push_back(row.frame_index);
      p.y.push_back(row.psnr_db);
    }
    ssim_series.push_back(s);
    psnr_series.push_back(p);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  write_text_atomic(a.out / "image_quality.csv", image_quality_csv(rows));
  write_snapshot(a.out, cfg, argv);
  if (a.c.plots) {
    write_text_atomic(a.out / "ssim_profile.svg", svg::line_plot("SSIM against reference", "frame", "SSIM", ssim_series));
    write_text_atomic(a.out / "psnr_profile.svg", svg::line_plot("PSNR against reference", "frame", "dB", psnr_series));
  }
  std::cout << "eval-image-quality: " << rows.size() << " rows -> " << (a.out / "image_quality.csv").string() << "\n";
  return kOk;
}

// --- track -----------------------------------------------------------------

struct TrackArgs {
  Common c;
  std::vector<std::string> inputs;
  std::optional<fs::path> mask;
  std::optional<std::string> reference;
  fs::path out;
};

int cmd_track(const TrackArgs& a, const std::vector<std::string>& argv) {
  const auto cfg = load(a.c);
  const auto rect = first_rect(a.mask ? *a.mask : cfg.track.mask);
  const auto inputs = named_inputs(a.inputs);
  if (a.reference && std::none_of(inputs.begin(), inputs.end(), [&](const auto& in) { return in.first == *a.reference; })) {
    throw ConfigError("--reference '" + *a.reference + "' is not one of the --input names");
  }
  prepare_output(a.out, a.c.force);
  std::cerr << "tracking parameters:\n" << describe(cfg.track.tracking);

  std::map<std::string, SequenceTracking> results;
  std::optional<EnvelopeImage> geometry;
  std::vector<TrackingRow> rows;
  for (const auto& [name, manifest] : inputs) {
    const auto frames = load_frames(manifest);
    if (!geometry) geometry = frames.front();
    auto t = track_sequence(name, frames, cfg.track.tracking, rect);
    for (std::size_t p = 0; p < t.fields.size(); ++p) {
      char file[32];
      std::snprintf(file, sizeof file, "pair_%04zu.ccf", p);
      fs::create_directories(a.out / "fields" / name);
      write_field(a.out / "fields" / name / file, t.fields[p], static_cast<std::uint32_t>(p));
    }
    rows.insert(rows.end(), t.rows.begin(), t.rows.end());
    results[name] = std::move(t);
  }
  write_text_atomic(a.out / "tracking.csv", tracking_csv(rows));

  if (a.reference) {
    std::vector<FieldSsimRow> ssim_rows;
    std::vector<svg::Series> ax, lat;
    for (const auto& [name, manifest] : inputs) {
      if (name == *a.reference) continue;
      const auto r = compare_fields(name, results[name], *a.reference, results[*a.reference], *geometry, rect);
      svg::Series sa{name, {}, {}}, sl{name, {}, {}};
      for (const auto& row : r) {
        sa.x.push_back(row.pair);
        sa.y.push_back(row.ssim.axial);
        sl.x.push_back(row.pair);
        sl.y.push_back(row.ssim.lateral);
      }
      ax.push_back(sa);
      lat.push_back(sl);
      ssim_rows.insert(ssim_rows.end(), r.begin(), r.end());
    }
    write_text_atomic(a.out / "field_ssim.csv", field_ssim_csv(ssim_rows));
    if (a.c.plots) {
      write_text_atomic(a.out / "field_ssim_axial.svg",
                        svg::line_plot("Axial displacement SSIM vs " + *a.reference, "frame pair", "SSIM", ax));
      write_text_atomic(a.out / "field_ssim_lateral.svg",
                        svg::line_plot("Lateral displacement SSIM vs " + *a.reference, "frame pair", "SSIM", lat));
    }
  }
  if (a.c.plots) {
    std::vector<svg::Series> axial;
    for (const auto& [name, manifest] : inputs) {
      svg::Series s{name, {}, {}};
      for (const auto& r : results[name].rows) {
        s.x.push_back(r.pair);
        s.y.push_back(r.mean_axial_mm);
      }
      axial.push_back(s);
    }
    write_text_atomic(a.out / "mean_axial.svg",
                      svg::line_plot("Mean axial displacement", "frame pair", "mm", axial));
  }
  write_snapshot(a.out, cfg, argv);
  std::cout << "track: " << rows.size() << " pairs -> " << (a.out / "tracking.csv").string() << "\n";
  return kOk;
}

// --- ablate ----------------------------------------------------------------

struct AblateArgs {
  Common c;
  fs::path data;
  fs::path out;
  std::optional<int> epochs;
  std::optional<fs::path> targets;
  std::optional<fs::path> rois;
};

int cmd_ablate(const AblateArgs& a, const std::vector<std::string>& argv) {
  std::vector<std::string> extra;
  if (a.epochs) extra.push_back("train.epochs=" + std::to_string(*a.epochs));
  const auto cfg = load(a.c, extra);
  if (!fs::is_directory(a.data)) throw DataError("--data must be a synthesized dataset directory");
  AblationInputs in;
  in.train_manifest = a.data / "train.manifest";
  in.test_manifest = a.data / "test.manifest";
  in.targets = a.targets ? *a.targets : (cfg.eval.targets.empty() ? a.data / "test" / "targets.csv" : cfg.eval.targets);
  in.rois = a.rois ? *a.rois : (cfg.eval.rois.empty() ? a.data / "rois.txt" : cfg.eval.rois);
  prepare_output(a.out, a.c.force);
  write_snapshot(a.out, cfg, argv);
  const auto rows = run_ablation(in, cfg, a.out, true);
  if (a.c.plots) {
    std::vector<std::string> cats;
    svg::Series lat{"lateral FWHM (mm)", {}, {}}, deep{"deep lateral FWHM (mm)", {}, {}}, m{"Nakagami m", {}, {}};
    for (const auto& r : rows) {
      cats.push_back(r.configuration);
      lat.y.push_back(r.lateral_fwhm_mean_mm);
      deep.y.push_back(r.deep_lateral_fwhm_mean_mm);
      m.y.push_back(r.nakagami_m_mean);
    }
    write_text_atomic(a.out / "ablation.svg", svg::bar_chart("Loss-term ablation", "value", cats, {lat, deep, m}));
  }
  std::cout << "ablate: " << rows.size() << " configurations -> " << (a.out / "ablation.csv").string() << "\n";
  return kOk;
}

// --- report ----------------------------------------------------------------

struct ReportArgs {
  Common c;
  std::optional<fs::path> resolution;
  std::optional<fs::path> nakagami;
  std::optional<fs::path> loss_log;
  std::string reference;
  fs::path out;
};

// Paired t-tests of every source against the reference, grouped by `group`
// and paired by frame index.
void t_tests(const CsvTable& t, const std::string& metric_column, const std::string& group_column,
             const std::string& reference, std::string& out) {
  const bool has_status = std::find(t.columns.begin(), t.columns.end(), "status") != t.columns.end();
  // group -> source -> frame -> value
  std::map<std::string, std::map<std::string, std::map<std::string, double>>> values;
  std::vector<std::string> groups, sources;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (has_status && t.text(r, "status") != "ok") continue;
    const auto& g = t.text(r, group_column);
    const auto& s = t.text(r, "source");
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    if (std::find(sources.begin(), sources.end(), s) == sources.end()) sources.push_back(s);
    values[g][s][t.text(r, "frame_index")] = t.number(r, metric_column);
  }
  if (std::find(sources.begin(), sources.end(), reference) == sources.end()) {
    throw DataError("reference source '" + reference + "' does not appear in the " + metric_column + " table");
  }
  for (const auto& g : groups) {
    for (const auto& s : sources) {
      if (s == reference) continue;
      std::vector<double> a, b;
      for (const auto& [frame, v] : values[g][s]) {
        const auto ref = values[g][reference].find(frame);
        if (ref == values[g][reference].end()) continue;
        a.push_back(v);
        b.push_back(ref->second);
      }
      try {
        const auto tt = paired_t_test(a, b);
        out += metric_column + "," + g + "," + s + "-" + reference + "," + csv_number(tt.mean_difference) + "," +
               csv_number(tt.t) + "," + csv_number(tt.dof) + "," + csv_number(tt.p_two_sided) + "\n";
      } catch (const MetricError& e) {
        std::cerr << "warning: no t-test for " << metric_column << " " << g << " " << s << ": " << e.what() << "\n";
      }
    }
  }
}

int cmd_report(const ReportArgs& a, const std::vector<std::string>& argv) {
  const auto cfg = load(a.c);
  if (!a.resolution && !a.nakagami && !a.loss_log) {
    throw ConfigError("report needs at least one of --resolution, --nakagami, --loss-log");
  }
  prepare_output(a.out, a.c.force);
  std::string tests = std::string(kTTestColumns) + "\n";
  if (a.resolution) {
    const auto t = read_csv(*a.resolution);
    t_tests(t, "lateral_fwhm_mm", "target_id", a.reference, tests);
    t_tests(t, "axial_fwhm_mm", "target_id", a.reference, tests);
  }
  if (a.nakagami) t_tests(read_csv(*a.nakagami), "m", "roi", a.reference, tests);
  if (a.resolution || a.nakagami) write_text_atomic(a.out / "t_tests.csv", tests);
  if (a.loss_log) {
    const auto epochs = epoch_loss_csv(read_csv(*a.loss_log));
    write_text_atomic(a.out / "epoch_losses.csv", epochs);
    if (a.c.plots) {
      const auto t = read_csv(a.out / "epoch_losses.csv");
      std::vector<svg::Series> series;
      for (const char* name : {"total", "adv_g", "adv_d", "cyc", "idt", "cc"}) {
        svg::Series s{name, {}, {}};
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
          s.x.push_back(t.number(r, "epoch"));
          s.y.push_back(t.number(r, name));
        }
        series.push_back(s);
      }
      write_text_atomic(a.out / "epoch_losses.svg", svg::line_plot("Epoch mean losses", "epoch", "loss", series));
    }
  }
  write_snapshot(a.out, cfg, argv);
  std::cout << "report -> " << a.out.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Constrained CycleGAN ultrasound toolkit: synthetic data, training, evaluation and tracking"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 ok, 2 configuration error, 3 data error, 4 divergence, 5 metric precondition failure.\n"
             "CCGAN_WORKERS sets the default worker count.");

  unsigned workers = 1;
  try {
    workers = default_workers();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  }

  SynthArgs synth;
  synth.c.workers = workers;
  auto* s = app.add_subcommand("synth", "render a synthetic phased/linear dataset");
  add_common(s, synth.c, true);
  s->add_option("--out", synth.out, "dataset directory")->required();
  s->add_option("--preset", synth.preset, "desk or tiny");
  s->add_option("--seed", synth.seed, "random seed");

  TrainArgs tr;
  tr.c.workers = workers;
  auto* t = app.add_subcommand("train", "train both generators and discriminators");
  add_common(t, tr.c, true);
  t->add_option("--data", tr.data, "dataset directory or training manifest")->required();
  t->add_option("--run", tr.run, "run directory")->required();
  t->add_option("--resume", tr.resume, "checkpoint directory, or 'latest' in the run directory");
  t->add_option("--epochs", tr.epochs, "shorthand for --set train.epochs=N");
  t->add_option("--seed", tr.seed, "shorthand for --set train.seed=N");

  TranslateArgs tl;
  tl.c.workers = workers;
  auto* x = app.add_subcommand("translate", "run an exported generator over a manifest");
  add_common(x, tl.c, true);
  x->add_option("--weights", tl.weights, "exported generator (.ccw)")->required();
  x->add_option("--manifest", tl.manifest, "input frames")->required();
  x->add_option("--out", tl.out, "output directory")->required();
  x->add_option("--batch", tl.batch, "inference batch size");

  EvalArgs er, en, eq;
  for (auto* e : {&er, &en, &eq}) e->c.workers = workers;
  auto* r = app.add_subcommand("eval-resolution", "axial and lateral FWHM at the point targets");
  add_common(r, er.c, true);
  r->add_option("--input", er.inputs, "NAME=MANIFEST, repeatable")->required();
  r->add_option("--targets", er.targets, "target positions CSV (default: [eval] targets)");
  r->add_option("--out", er.out, "output directory")->required();

  auto* n = app.add_subcommand("eval-nakagami", "Nakagami m in named ROIs");
  add_common(n, en.c, true);
  n->add_option("--input", en.inputs, "NAME=MANIFEST, repeatable")->required();
  n->add_option("--rois", en.rois, "ROI file (default: [eval] rois)");
  n->add_option("--out", en.out, "output directory")->required();

  auto* q = app.add_subcommand("eval-image-quality", "SSIM and PSNR against reference frames");
  add_common(q, eq.c, true);
  q->add_option("--reference", eq.reference, "reference manifest")->required();
  q->add_option("--input", eq.inputs, "NAME=MANIFEST, repeatable")->required();
  q->add_option("--out", eq.out, "output directory")->required();

  TrackArgs tk;
  tk.c.workers = workers;
  auto* k = app.add_subcommand("track", "speckle tracking over consecutive frames");
  add_common(k, tk.c, true);
  k->add_option("--input", tk.inputs, "NAME=MANIFEST, repeatable")->required();
  k->add_option("--mask", tk.mask, "rectangle file; the first rectangle is the mask (default: [track] mask)");
  k->add_option("--reference", tk.reference, "input name whose fields are the SSIM reference");
  k->add_option("--out", tk.out, "output directory")->required();

  AblateArgs ab;
  ab.c.workers = workers;
  auto* b = app.add_subcommand("ablate", "train the four identical/correlation loss configurations");
  add_common(b, ab.c, true);
  b->add_option("--data", ab.data, "synthesized dataset directory")->required();
  b->add_option("--out", ab.out, "output directory")->required();
  b->add_option("--epochs", ab.epochs, "shorthand for --set train.epochs=N");
  b->add_option("--targets", ab.targets, "target positions CSV (default: DATA/test/targets.csv)");
  b->add_option("--rois", ab.rois, "ROI file (default: DATA/rois.txt)");

  ReportArgs rp;
  rp.c.workers = workers;
  auto* p = app.add_subcommand("report", "t-tests against a reference source and per-epoch loss tables");
  add_common(p, rp.c, true);
  p->add_option("--resolution", rp.resolution, "per-target resolution CSV");
  p->add_option("--nakagami", rp.nakagami, "per-frame Nakagami CSV");
  p->add_option("--loss-log", rp.loss_log, "training loss log");
  p->add_option("--reference", rp.reference, "source every other source is compared with")->default_val("input");
  p->add_option("--out", rp.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*s) return cmd_synth(synth, args);
    if (*t) return cmd_train(tr, args);
    if (*x) return cmd_translate(tl, args);
    if (*r) return cmd_eval_resolution(er, args);
    if (*n) return cmd_eval_nakagami(en, args);
    if (*q) return cmd_eval_image_quality(eq, args);
    if (*k) return cmd_track(tk, args);
    if (*b) return cmd_ablate(ab, args);
    if (*p) return cmd_report(rp, args);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kDivergence;
  } catch (const MetricError& e) {
    std::cerr << "metric error: " << e.what() << "\n";
    return kMetric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

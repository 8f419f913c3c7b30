#include "ccgan/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "ccgan/dataset.hpp"
#include "ccgan/errors.hpp"
#include "ccgan/frame_io.hpp"
#include "ccgan/nn/weights_io.hpp"

namespace ccgan {
namespace fs = std::filesystem;

namespace {

const double kNaN = std::nan("");

// Error text must not break the comma-separated layout.
std::string cell_text(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

double parse_cell(const std::string& s, const std::string& what) {
  if (s == "nan") return kNaN;
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw DataError(what + ": '" + s + "' is not a number");
}

}  // namespace

std::vector<EnvelopeImage> load_frames(const fs::path& manifest) {
  std::vector<EnvelopeImage> out;
  for (const auto& rec : read_manifest(manifest)) {
    auto img = read_frame(rec.path);
    img.frame_index = rec.frame_index;
    out.push_back(std::move(img));
  }
  if (out.empty()) throw DataError(manifest.string() + ": manifest lists no frames");
  return out;
}

void write_frame_set(const fs::path& dir, const std::vector<EnvelopeImage>& frames, const fs::path& manifest) {
  fs::create_directories(dir);
  std::vector<ManifestRecord> recs;
  std::set<std::uint32_t> seen;
  for (const auto& f : frames) {
    if (!seen.insert(f.frame_index).second) {
      throw DataError("duplicate frame index " + std::to_string(f.frame_index) + " in output set");
    }
    char name[32];
    std::snprintf(name, sizeof name, "%04u.ccf", static_cast<unsigned>(f.frame_index));
    write_frame(dir / name, f);
    recs.push_back({fs::absolute(dir / name), f.domain, f.frame_index});
  }
  write_manifest(manifest, recs);
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw DataError("CSV has no column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

double CsvTable::number(std::size_t row, const std::string& name) const {
  return parse_cell(rows.at(row).at(column(name)), name);
}

const std::string& CsvTable::text(std::size_t row, const std::string& name) const {
  return rows.at(row).at(column(name));
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  CsvTable t;
  std::string line;
  bool header = true;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto cells = split(line);
    if (header) {
      t.columns = std::move(cells);
      header = false;
      continue;
    }
    if (cells.size() != t.columns.size()) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(t.columns.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (header) throw DataError(path.string() + ": no CSV header");
  return t;
}

TargetTable read_targets(const fs::path& path) {
  const auto csv = read_csv(path);
  TargetTable out;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto frame = static_cast<std::uint32_t>(csv.number(r, "frame_index"));
    out[frame].push_back({static_cast<std::size_t>(csv.number(r, "target_id")), csv.number(r, "axial_mm"),
                          csv.number(r, "lateral_mm")});
  }
  return out;
}

std::vector<ResolutionRow> evaluate_resolution(const std::string& source, const std::vector<EnvelopeImage>& frames,
                                               const TargetTable& targets, const EvalSection& eval) {
  std::vector<ResolutionRow> rows;
  for (const auto& f : frames) {
    const auto it = targets.find(f.frame_index);
    if (it == targets.end()) {
      throw DataError("no point targets listed for frame " + std::to_string(f.frame_index) + " of " + source);
    }
    for (const auto& t : it->second) {
      ResolutionRow row{source, f.frame_index, t.target_id, t.axial_mm, {}, "ok"};
      try {
        row.m = measure_target(f, t.target_id, t.axial_mm, t.lateral_mm, eval.roi_axial_mm, eval.roi_lateral_mm);
      } catch (const MetricError& e) {
        row.m = {t.target_id, kNaN, kNaN, kNaN, kNaN};
        row.status = cell_text(e.what());
      }
      rows.push_back(row);
    }
  }
  return rows;
}

std::string resolution_csv(const std::vector<ResolutionRow>& rows) {
  std::string s = std::string(kResolutionColumns) + "\n";
  for (const auto& r : rows) {
    s += r.source + "," + std::to_string(r.frame_index) + "," + std::to_string(r.target_id) + "," +
         csv_number(r.depth_mm) + "," + csv_number(r.m.axial_fwhm) + "," + csv_number(r.m.lateral_fwhm) + "," +
         csv_number(r.m.peak_axial_mm) + "," + csv_number(r.m.peak_lateral_mm) + "," + r.status + "\n";
  }
  return s;
}

std::string resolution_summary_csv(const std::vector<ResolutionRow>& rows) {
  struct Acc {
    double depth = 0;
    std::vector<double> axial, lateral;
    std::size_t failed = 0;
  };
  std::vector<std::pair<std::string, std::size_t>> order;
  std::map<std::pair<std::string, std::size_t>, Acc> groups;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.source, r.target_id);
    if (!groups.count(key)) order.push_back(key);
    auto& g = groups[key];
    g.depth = r.depth_mm;
    if (r.ok()) {
      g.axial.push_back(r.m.axial_fwhm);
      g.lateral.push_back(r.m.lateral_fwhm);
    } else {
      ++g.failed;
    }
  }
  std::string s = std::string(kResolutionSummaryColumns) + "\n";
  for (const auto& key : order) {
    const auto& g = groups[key];
    const auto a = mean_std(g.axial), l = mean_std(g.lateral);
    const bool any = !g.axial.empty();
    s += key.first + "," + std::to_string(key.second) + "," + csv_number(g.depth) + "," +
         csv_number(any ? a.mean : kNaN) + "," + csv_number(any ? a.std : kNaN) + "," +
         csv_number(any ? l.mean : kNaN) + "," + csv_number(any ? l.std : kNaN) + "," +
         std::to_string(g.axial.size()) + "," + std::to_string(g.failed) + "\n";
  }
  return s;
}

std::vector<NakagamiRow> evaluate_nakagami(const std::string& source, const std::vector<EnvelopeImage>& frames,
                                           const std::vector<RoiRect>& rois) {
  if (rois.empty()) throw ConfigError("no ROIs given for Nakagami evaluation");
  std::vector<NakagamiRow> rows;
  for (const auto& f : frames) {
    for (const auto& roi : rois) {
      try {
        rows.push_back({source, f.frame_index, nakagami_m(f, roi)});
      } catch (const MetricError& e) {
        throw MetricError(source + " frame " + std::to_string(f.frame_index) + " ROI " + roi.name + ": " + e.what());
      }
    }
  }
  return rows;
}

std::string nakagami_csv(const std::vector<NakagamiRow>& rows) {
  std::string s = std::string(kNakagamiColumns) + "\n";
  for (const auto& r : rows) {
    s += r.source + "," + std::to_string(r.frame_index) + "," + r.estimate.roi + "," + csv_number(r.estimate.m) +
         "," + std::to_string(r.estimate.samples) + "\n";
  }
  return s;
}

std::string nakagami_summary_csv(const std::vector<NakagamiRow>& rows) {
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.source, r.estimate.roi);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(r.estimate.m);
  }
  std::string s = std::string(kNakagamiSummaryColumns) + "\n";
  for (const auto& key : order) {
    const auto ms = mean_std(groups[key]);
    s += key.first + "," + key.second + "," + csv_number(ms.mean) + "," + csv_number(ms.std) + "," +
         std::to_string(ms.n) + "\n";
  }
  return s;
}

std::vector<ImageQualityRow> evaluate_image_quality(const std::string& source,
                                                    const std::vector<EnvelopeImage>& reference,
                                                    const std::vector<EnvelopeImage>& candidate) {
  std::map<std::uint32_t, const EnvelopeImage*> by_index;
  for (const auto& f : reference) by_index[f.frame_index] = &f;
  std::vector<ImageQualityRow> rows;
  for (const auto& c : candidate) {
    const auto it = by_index.find(c.frame_index);
    if (it == by_index.end()) throw DataError("no reference frame with index " + std::to_string(c.frame_index));
    if (!it->second->samples.same_shape(c.samples)) {
      throw DataError("frame " + std::to_string(c.frame_index) + ": reference and candidate shapes differ");
    }
    rows.push_back({source, c.frame_index, ssim(*it->second, c), psnr(*it->second, c)});
  }
  return rows;
}

std::string image_quality_csv(const std::vector<ImageQualityRow>& rows) {
  std::string s = std::string(kImageQualityColumns) + "\n";
  for (const auto& r : rows) {
    s += r.source + "," + std::to_string(r.frame_index) + "," + csv_number(r.ssim) + "," + csv_number(r.psnr_db) + "\n";
  }
  return s;
}

double pearson(const EnvelopeImage& a, const EnvelopeImage& b) {
  if (!a.samples.same_shape(b.samples)) throw DataError("pearson: frame shapes differ");
  const auto x = a.samples.values(), y = b.samples.values();
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw MetricError("constant frame has undefined correlation");
  return sxy / std::sqrt(sxx * syy);
}

SequenceTracking track_sequence(const std::string& source, const std::vector<EnvelopeImage>& frames,
                                const TrackingConfig& cfg, const std::optional<RoiRect>& rect) {
  if (frames.size() < 2) throw DataError(source + ": tracking needs at least 2 frames");
  SequenceTracking out;
  const RoiMask mask = rect ? mask_from_rect(*rect, frames.front()) : full_mask(frames.front());
  for (std::size_t p = 0; p + 1 < frames.size(); ++p) {
    const auto& pre = frames[p];
    const auto& post = frames[p + 1];
    if (!pre.samples.same_shape(post.samples)) throw DataError(source + ": frames differ in shape");
    auto res = track_and_correct(pre, post, cfg);
    const auto& f = res.field;
    TrackingRow row{source, p, mask.name};
    double sa = 0, sl = 0, sc = 0;
    for (std::size_t i = 0; i < f.node_rows(); ++i) {
      for (std::size_t j = 0; j < f.node_cols(); ++j) {
        const auto r = static_cast<std::size_t>(std::lround(f.node_row(i)));
        const auto c = static_cast<std::size_t>(std::lround(f.node_col(j)));
        if (!f.valid(i, j) || r >= mask.mask.rows() || c >= mask.mask.cols() || !mask.mask(r, c)) continue;
        ++row.valid_nodes;
        sa += f.axial_mm(i, j);
        sl += f.lateral_mm(i, j);
        sc += f.correlation(i, j);
      }
    }
    const double k = static_cast<double>(row.valid_nodes);
    row.mean_axial_mm = row.valid_nodes ? sa / k : kNaN;
    row.mean_lateral_mm = row.valid_nodes ? sl / k : kNaN;
    row.mean_correlation = row.valid_nodes ? sc / k : kNaN;
    row.rmsd_before = rmsd(pre, post, mask);
    row.rmsd_after = rmsd(pre, res.corrected, mask);
    out.rows.push_back(row);
    out.fields.push_back(std::move(res.field));
  }
  return out;
}

std::string tracking_csv(const std::vector<TrackingRow>& rows) {
  std::string s = std::string(kTrackingColumns) + "\n";
  for (const auto& r : rows) {
    s += r.source + "," + std::to_string(r.pair) + "," + r.mask + "," + std::to_string(r.valid_nodes) + "," +
         csv_number(r.mean_axial_mm) + "," + csv_number(r.mean_lateral_mm) + "," + csv_number(r.mean_correlation) +
         "," + csv_number(r.rmsd_before) + "," + csv_number(r.rmsd_after) + "\n";
  }
  return s;
}

std::vector<FieldSsimRow> compare_fields(const std::string& source, const SequenceTracking& candidate,
                                         const std::string& reference_name, const SequenceTracking& reference,
                                         const EnvelopeImage& geometry, const std::optional<RoiRect>& rect) {
  if (candidate.fields.size() != reference.fields.size()) {
    throw DataError("field SSIM: " + source + " and " + reference_name + " have different pair counts");
  }
  const RoiMask mask = rect ? mask_from_rect(*rect, geometry) : full_mask(geometry);
  std::vector<FieldSsimRow> rows;
  for (std::size_t p = 0; p < candidate.fields.size(); ++p) {
    rows.push_back({source, reference_name, p, mask.name, field_ssim(reference.fields[p], candidate.fields[p], mask)});
  }
  return rows;
}

std::string field_ssim_csv(const std::vector<FieldSsimRow>& rows) {
  std::string s = std::string(kFieldSsimColumns) + "\n";
  for (const auto& r : rows) {
    s += r.source + "," + r.reference + "," + std::to_string(r.pair) + "," + r.mask + "," + csv_number(r.ssim.axial) +
         "," + csv_number(r.ssim.lateral) + "\n";
  }
  return s;
}

std::vector<AblationEntry> ablation_matrix(const LossWeights& base) {
  const double l2 = base.lambda2 > 0 ? base.lambda2 : 5.0;
  const double l3 = base.lambda3 > 0 ? base.lambda3 : 5.0;
  return {{"baseline", {base.lambda1, 0.0, 0.0}},
          {"idt", {base.lambda1, l2, 0.0}},
          {"cc", {base.lambda1, 0.0, l3}},
          {"idt+cc", {base.lambda1, l2, l3}}};
}

std::vector<AblationRow> run_ablation(const AblationInputs& in, const RunConfig& config, const fs::path& out,
                                      bool verbose) {
  const auto dataset = load_unpaired(in.train_manifest);
  const auto test = load_frames(in.test_manifest);
  const auto targets = read_targets(in.targets);
  const auto rois = read_roi_file(in.rois);
  fs::create_directories(out);

  std::vector<AblationRow> rows;
  for (const auto& entry : ablation_matrix(config.train.weights)) {
    TrainConfig tc = config.train;
    tc.weights = entry.weights;
    std::string dir_name = entry.name;
    std::replace(dir_name.begin(), dir_name.end(), '+', '_');
    const fs::path run = out / dir_name;
    TrainOptions opts{run, std::nullopt, {}};
    if (verbose) {
      opts.on_epoch = [&](int epoch, const LossReport& m) {
        std::cerr << "[" << entry.name << "] epoch " << epoch << "/" << tc.epochs << " total " << m.total << "\n";
      };
    }
    const auto result = train<float>(dataset, tc, opts);

    auto g = nn::load_generator<float>(run / "exported" / "G_A.ccw");
    const auto translated = translate(*g, test, static_cast<std::size_t>(tc.batch_size));
    write_frame_set(run / "translated", translated, run / "translated.manifest");

    AblationRow row;
    row.configuration = entry.name;
    row.seed = tc.seed;
    row.weights = entry.weights;
    const auto res = evaluate_resolution(entry.name, translated, targets, config.eval);
    write_text_atomic(run / "resolution.csv", resolution_csv(res));
    std::vector<double> ax, lat, deep;
    for (const auto& r : res) {
      if (!r.ok()) continue;
      ax.push_back(r.m.axial_fwhm);
      lat.push_back(r.m.lateral_fwhm);
      if (r.depth_mm >= config.eval.deep_depth_mm) deep.push_back(r.m.lateral_fwhm);
    }
    row.axial_fwhm_mean_mm = ax.empty() ? kNaN : mean_std(ax).mean;
    row.lateral_fwhm_mean_mm = lat.empty() ? kNaN : mean_std(lat).mean;
    row.deep_lateral_fwhm_mean_mm = deep.empty() ? kNaN : mean_std(deep).mean;

    const auto nk = evaluate_nakagami(entry.name, translated, rois);
    write_text_atomic(run / "nakagami.csv", nakagami_csv(nk));
    std::vector<double> ms;
    for (const auto& r : nk) ms.push_back(r.estimate.m);
    const auto m = mean_std(ms);
    row.nakagami_m_mean = m.mean;
    row.nakagami_m_std = m.std;

    row.pearson_min = INFINITY;
    for (std::size_t i = 0; i < test.size(); ++i) row.pearson_min = std::min(row.pearson_min, pearson(test[i], translated[i]));
    row.final_total = result.epoch_means.empty() ? kNaN : result.epoch_means.back().total;
    row.frames = translated.size();
    rows.push_back(row);
    write_text_atomic(out / "ablation.csv", ablation_csv(rows));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string s = std::string(kAblationColumns) + "\n";
  for (const auto& r : rows) {
    s += r.configuration + "," + std::to_string(r.seed) + "," + csv_number(r.weights.lambda1) + "," +
         csv_number(r.weights.lambda2) + "," + csv_number(r.weights.lambda3) + "," + csv_number(r.axial_fwhm_mean_mm) +
         "," + csv_number(r.lateral_fwhm_mean_mm) + "," + csv_number(r.deep_lateral_fwhm_mean_mm) + "," +
         csv_number(r.nakagami_m_mean) + "," + csv_number(r.nakagami_m_std) + "," + csv_number(r.pearson_min) + "," +
         csv_number(r.final_total) + "," + std::to_string(r.frames) + "\n";
  }
  return s;
}

std::string epoch_loss_csv(const CsvTable& log) {
  struct Acc {
    double v[6] = {0, 0, 0, 0, 0, 0};
    std::size_t n = 0;
  };
  static const char* names[6] = {"adv_g", "adv_d", "cyc", "idt", "cc", "total"};
  std::map<int, Acc> epochs;
  for (std::size_t r = 0; r < log.rows.size(); ++r) {
    auto& a = epochs[static_cast<int>(log.number(r, "epoch"))];
    for (int k = 0; k < 6; ++k) a.v[k] += log.number(r, names[k]);
    ++a.n;
  }
  std::string s = std::string(kEpochLossColumns) + "\n";
  for (const auto& [e, a] : epochs) {
    s += std::to_string(e);
    for (double v : a.v) s += "," + csv_number(v / static_cast<double>(a.n));
    s += "\n";
  }
  return s;
}

}  // namespace ccgan

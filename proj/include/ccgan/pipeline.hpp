#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ccgan/envelope_image.hpp"
#include "ccgan/metrics.hpp"
#include "ccgan/run_config.hpp"
#include "ccgan/tracking.hpp"
#include "ccgan/training.hpp"

namespace ccgan {

// Evaluation plumbing shared by the command-line tool and the acceptance
// runner: frame sets from manifests, per-frame metric tables, summaries.

/// Every frame listed in a manifest, in manifest order. Any domain tag.
std::vector<EnvelopeImage> load_frames(const std::filesystem::path& manifest);

/// Writes frames as NNNN.ccf under `dir` and a manifest listing them.
void write_frame_set(const std::filesystem::path& dir, const std::vector<EnvelopeImage>& frames,
                     const std::filesystem::path& manifest);

/// Point-target positions keyed by frame index; read from the synthesizer's
/// "frame_index,target_id,axial_mm,lateral_mm" file.
struct TargetPosition {
  std::size_t target_id = 0;
  double axial_mm = 0.0;
  double lateral_mm = 0.0;
};
using TargetTable = std::map<std::uint32_t, std::vector<TargetPosition>>;
TargetTable read_targets(const std::filesystem::path& path);

/// Minimal CSV table: header names plus string cells. No quoting.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // throws DataError if missing
  double number(std::size_t row, const std::string& name) const;
  const std::string& text(std::size_t row, const std::string& name) const;
};
/// Skips '#' lines; the first remaining line is the header.
CsvTable read_csv(const std::filesystem::path& path);

// Resolution

struct ResolutionRow {
  std::string source;
  std::uint32_t frame_index = 0;
  std::size_t target_id = 0;
  double depth_mm = 0.0;  // nominal target depth
  ResolutionMeasurement m;
  std::string status;  // "ok" or the metric error
  bool ok() const { return status == "ok"; }
};

/// One row per (frame, target). A target whose FWHM cannot be measured is
/// kept with NaN values and the error text as its status.
std::vector<ResolutionRow> evaluate_resolution(const std::string& source, const std::vector<EnvelopeImage>& frames,
                                               const TargetTable& targets, const EvalSection& eval);
std::string resolution_csv(const std::vector<ResolutionRow>& rows);
std::string resolution_summary_csv(const std::vector<ResolutionRow>& rows);

// Speckle statistics

struct NakagamiRow {
  std::string source;
  std::uint32_t frame_index = 0;
  NakagamiEstimate estimate;
};
std::vector<NakagamiRow> evaluate_nakagami(const std::string& source, const std::vector<EnvelopeImage>& frames,
                                           const std::vector<RoiRect>& rois);
std::string nakagami_csv(const std::vector<NakagamiRow>& rows);
std::string nakagami_summary_csv(const std::vector<NakagamiRow>& rows);

// Image quality against a reference set, paired by frame index.

struct ImageQualityRow {
  std::string source;
  std::uint32_t frame_index = 0;
  double ssim = 0.0;
  double psnr_db = 0.0;
};
std::vector<ImageQualityRow> evaluate_image_quality(const std::string& source,
                                                    const std::vector<EnvelopeImage>& reference,
                                                    const std::vector<EnvelopeImage>& candidate);
std::string image_quality_csv(const std::vector<ImageQualityRow>& rows);

/// Pearson correlation of two equally shaped frames. Throws MetricError if
/// either is constant.
double pearson(const EnvelopeImage& a, const EnvelopeImage& b);

// Tracking over consecutive frame pairs.

struct TrackingRow {
  std::string source;
  std::size_t pair = 0;  // frames (pair, pair + 1)
  std::string mask;
  std::size_t valid_nodes = 0;
  double mean_axial_mm = 0.0;
  double mean_lateral_mm = 0.0;
  double mean_correlation = 0.0;
  double rmsd_before = 0.0;
  double rmsd_after = 0.0;
};
struct SequenceTracking {
  std::vector<TrackingRow> rows;
  std::vector<DisplacementField> fields;  // one per pair
};
SequenceTracking track_sequence(const std::string& source, const std::vector<EnvelopeImage>& frames,
                                const TrackingConfig& cfg, const std::optional<RoiRect>& mask);
std::string tracking_csv(const std::vector<TrackingRow>& rows);

struct FieldSsimRow {
  std::string source, reference;
  std::size_t pair = 0;
  std::string mask;
  FieldSsim ssim;
};
std::vector<FieldSsimRow> compare_fields(const std::string& source, const SequenceTracking& candidate,
                                         const std::string& reference_name, const SequenceTracking& reference,
                                         const EnvelopeImage& geometry, const std::optional<RoiRect>& mask);
std::string field_ssim_csv(const std::vector<FieldSsimRow>& rows);

// Ablation over the identical / correlation switches.

struct AblationEntry {
  std::string name;  // baseline, idt, cc, idt+cc
  LossWeights weights;
};
/// The four configurations built from `base`'s cycle weight and its
/// lambda2/lambda3 values (5 each when a base value is zero).
std::vector<AblationEntry> ablation_matrix(const LossWeights& base);

struct AblationRow {
  std::string configuration;
  std::uint64_t seed = 0;
  LossWeights weights;
  double axial_fwhm_mean_mm = 0.0;
  double lateral_fwhm_mean_mm = 0.0;
  double deep_lateral_fwhm_mean_mm = 0.0;
  double nakagami_m_mean = 0.0;
  double nakagami_m_std = 0.0;
  double pearson_min = 0.0;  // over test frames, input vs translated
  double final_total = 0.0;  // mean generator objective of the last epoch
  std::size_t frames = 0;
};

struct AblationInputs {
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
  std::filesystem::path targets;
  std::filesystem::path rois;
};

/// Trains each configuration into out/<name>/ with the same seed and data,
/// translates the test set with the exported generator and evaluates it.
std::vector<AblationRow> run_ablation(const AblationInputs& inputs, const RunConfig& config,
                                      const std::filesystem::path& out, bool verbose = false);
std::string ablation_csv(const std::vector<AblationRow>& rows);

/// Epoch means of a loss log: "epoch,adv_g,adv_d,cyc,idt,cc,total".
std::string epoch_loss_csv(const CsvTable& loss_log);

inline constexpr const char* kAblationColumns =
    "configuration,seed,lambda1,lambda2,lambda3,axial_fwhm_mean_mm,lateral_fwhm_mean_mm,deep_lateral_fwhm_mean_mm,"
    "nakagami_m_mean,nakagami_m_std,pearson_min,final_total,frames";
inline constexpr const char* kEpochLossColumns = "epoch,adv_g,adv_d,cyc,idt,cc,total";

}  // namespace ccgan

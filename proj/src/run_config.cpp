#include "ccgan/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ccgan/errors.hpp"

namespace ccgan {
namespace fs = std::filesystem;

namespace {

struct Entry {
  std::string value;
  int line = 0;  // 0 for command-line overrides
};

using Section = std::map<std::string, Entry>;

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string where(const std::string& section, const std::string& key, const Entry& e) {
  std::string s = e.line > 0 ? "line " + std::to_string(e.line) + ": " : "override: ";
  return s + (section.empty() ? key : section + "." + key);
}

template <class N>
N parse_number(const std::string& section, const std::string& key, const Entry& e) {
  N v{};
  const char* end = e.value.data() + e.value.size();
  const auto [ptr, ec] = std::from_chars(e.value.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(where(section, key, e) + ": '" + e.value + "' is not a valid number");
  }
  return v;
}

bool parse_bool(const std::string& section, const std::string& key, const Entry& e) {
  if (e.value == "on" || e.value == "true" || e.value == "1") return true;
  if (e.value == "off" || e.value == "false" || e.value == "0") return false;
  throw ConfigError(where(section, key, e) + ": expected on/off, got '" + e.value + "'");
}

std::vector<int> parse_int_list(const std::string& section, const std::string& key, const Entry& e) {
  std::vector<int> out;
  std::stringstream ss(e.value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(section, key, Entry{trim(item), e.line}));
  if (out.empty()) throw ConfigError(where(section, key, e) + ": empty list");
  return out;
}

fs::path resolve_path(const fs::path& base, const std::string& v) {
  if (v.empty()) return {};
  fs::path p(v);
  return p.is_relative() && !base.empty() ? base / p : p;
}

// Setter table per section: key -> handler(entry).
using Handler = std::function<void(const Entry&)>;

void apply(const std::string& name, const Section& entries, const std::map<std::string, Handler>& handlers) {
  for (const auto& [key, e] : entries) {
    const auto h = handlers.find(key);
    if (h == handlers.end()) throw ConfigError(where(name, key, e) + ": unknown key");
    h->second(e);
  }
}

void resolve_synth(SynthSection& s, Section entries) {
  const std::string n = "synth";
  if (auto it = entries.find("preset"); it != entries.end()) {
    s.preset = preset_by_name(it->second.value);
    entries.erase(it);
  }
  auto& p = s.preset;
  apply(n, entries,
        {
            {"seed", [&](const Entry& e) { s.seed = parse_number<std::uint64_t>(n, "seed", e); }},
            {"train_a", [&](const Entry& e) { p.train_a = parse_number<std::size_t>(n, "train_a", e); }},
            {"train_b", [&](const Entry& e) { p.train_b = parse_number<std::size_t>(n, "train_b", e); }},
            {"test_frames", [&](const Entry& e) { p.test_frames = parse_number<std::size_t>(n, "test_frames", e); }},
            {"sequence_frames",
             [&](const Entry& e) { p.sequence_frames = parse_number<std::size_t>(n, "sequence_frames", e); }},
            {"density", [&](const Entry& e) { p.density = parse_number<double>(n, "density", e); }},
            {"target_db", [&](const Entry& e) { p.target_db = parse_number<double>(n, "target_db", e); }},
        });
}

void resolve_train(TrainConfig& c, const Section& entries) {
  const std::string n = "train";
  auto num = [&](auto& field, const char* key) {
    return std::pair<std::string, Handler>{
        key, [&field, key, &n](const Entry& e) { field = parse_number<std::decay_t<decltype(field)>>(n, key, e); }};
  };
  apply(n, entries,
        {
            num(c.epochs, "epochs"),
            num(c.lr_initial, "lr_initial"),
            num(c.lr_decay_start_epoch, "lr_decay_start_epoch"),
            num(c.batch_size, "batch_size"),
            num(c.adam.beta1, "adam_beta1"),
            num(c.adam.beta2, "adam_beta2"),
            num(c.adam.eps, "adam_eps"),
            num(c.weights.lambda1, "lambda1"),
            num(c.weights.lambda2, "lambda2"),
            num(c.weights.lambda3, "lambda3"),
            num(c.validation_fraction, "validation_fraction"),
            num(c.seed, "seed"),
            num(c.checkpoint_every, "checkpoint_every"),
            num(c.init_std, "init_std"),
            num(c.generator.base_channels, "generator_base_channels"),
            num(c.generator.n_modules, "generator_modules"),
            num(c.generator.convs_per_module, "generator_convs_per_module"),
            {"discriminator_channels",
             [&](const Entry& e) { c.discriminator.channels = parse_int_list(n, "discriminator_channels", e); }},
            {"discriminator_strides",
             [&](const Entry& e) { c.discriminator.strides = parse_int_list(n, "discriminator_strides", e); }},
            num(c.discriminator.min_input, "discriminator_min_input"),
            num(c.discriminator.leaky_slope, "discriminator_leaky_slope"),
        });
}

void resolve_eval(EvalSection& s, const Section& entries, const fs::path& base) {
  const std::string n = "eval";
  apply(n, entries,
        {
            {"roi_axial_mm", [&](const Entry& e) { s.roi_axial_mm = parse_number<double>(n, "roi_axial_mm", e); }},
            {"roi_lateral_mm",
             [&](const Entry& e) { s.roi_lateral_mm = parse_number<double>(n, "roi_lateral_mm", e); }},
            {"deep_depth_mm", [&](const Entry& e) { s.deep_depth_mm = parse_number<double>(n, "deep_depth_mm", e); }},
            {"rois", [&](const Entry& e) { s.rois = resolve_path(base, e.value); }},
            {"targets", [&](const Entry& e) { s.targets = resolve_path(base, e.value); }},
        });
  if (s.roi_axial_mm <= 0 || s.roi_lateral_mm <= 0) throw ConfigError("eval: ROI size must be positive");
}

void resolve_track(TrackSection& s, const Section& entries, const fs::path& base) {
  const std::string n = "track";
  auto& t = s.tracking;
  auto num = [&](int& field, const char* key) {
    return std::pair<std::string, Handler>{key,
                                           [&field, key, &n](const Entry& e) { field = parse_number<int>(n, key, e); }};
  };
  apply(n, entries,
        {
            num(t.kernel_axial, "kernel_axial"),
            num(t.kernel_lateral, "kernel_lateral"),
            num(t.search_axial, "search_axial"),
            num(t.search_lateral, "search_lateral"),
            num(t.step_axial, "step_axial"),
            num(t.step_lateral, "step_lateral"),
            num(t.iterations, "iterations"),
            {"subsample_fit", [&](const Entry& e) { t.subsample_fit = parse_bool(n, "subsample_fit", e); }},
            {"mask", [&](const Entry& e) { s.mask = resolve_path(base, e.value); }},
        });
  t.validate();
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides,
                           const fs::path& base_dir) {
  std::map<std::string, Section> sections;
  std::string current;  // "" holds top-level keys
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto cut = raw.find_first_of("#;");
    const std::string line = trim(cut == std::string::npos ? raw : raw.substr(0, cut));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      current = trim(line.substr(1, line.size() - 2));
      if (current != "synth" && current != "train" && current != "eval" && current != "track") {
        throw ConfigError("line " + std::to_string(line_no) + ": unknown section [" + current + "]");
      }
      sections[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (!sections[current].emplace(key, Entry{value, line_no}).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  for (const auto& o : overrides) {
    const auto dot = o.find('.');
    const auto eq = o.find('=');
    if (dot == std::string::npos || eq == std::string::npos || dot > eq) {
      throw ConfigError("override '" + o + "' is not of the form section.key=value");
    }
    const std::string sec = trim(o.substr(0, dot));
    if (sec != "synth" && sec != "train" && sec != "eval" && sec != "track") {
      throw ConfigError("override '" + o + "': unknown section '" + sec + "'");
    }
    sections[sec][trim(o.substr(dot + 1, eq - dot - 1))] = Entry{trim(o.substr(eq + 1)), 0};
  }

  RunConfig cfg;
  const Section& top = sections[""];
  for (const auto& [key, e] : top) {
    if (key != "version") throw ConfigError(where("", key, e) + ": unknown key outside a section");
  }
  const auto v = top.find("version");
  if (v == top.end()) {
    if (!text.empty()) throw ConfigError("configuration has no 'version' field");
  } else {
    cfg.version = parse_number<int>("", "version", v->second);
    if (cfg.version != kRunConfigVersion) {
      throw ConfigError("unsupported configuration version " + v->second.value + " (expected " +
                        std::to_string(kRunConfigVersion) + ")");
    }
  }
  resolve_synth(cfg.synth, sections["synth"]);
  resolve_train(cfg.train, sections["train"]);
  resolve_eval(cfg.eval, sections["eval"], base_dir);
  resolve_track(cfg.track, sections["track"], base_dir);
  cfg.train.validate();
  return cfg;
}

RunConfig load_run_config(const std::optional<fs::path>& path, const std::vector<std::string>& overrides) {
  if (!path) return parse_run_config("", overrides);
  std::ifstream f(*path);
  if (!f) throw ConfigError("cannot read configuration " + path->string());
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return parse_run_config(ss.str(), overrides, path->parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path->string() + ": " + e.what());
  }
}

std::string snapshot(const RunConfig& c) {
  std::ostringstream ss;
  ss.precision(17);
  const auto& p = c.synth.preset;
  ss << "version = " << c.version << "\n\n[synth]\n"
     << "preset = " << p.name << "\nseed = " << c.synth.seed << "\ntrain_a = " << p.train_a
     << "\ntrain_b = " << p.train_b << "\ntest_frames = " << p.test_frames
     << "\nsequence_frames = " << p.sequence_frames << "\ndensity = " << p.density << "\ntarget_db = " << p.target_db
     << "\n\n[train]\n"
     << describe(c.train) << "\n[eval]\n"
     << "roi_axial_mm = " << c.eval.roi_axial_mm << "\nroi_lateral_mm = " << c.eval.roi_lateral_mm
     << "\ndeep_depth_mm = " << c.eval.deep_depth_mm << "\n";
  if (!c.eval.rois.empty()) ss << "rois = " << fs::absolute(c.eval.rois).string() << "\n";
  if (!c.eval.targets.empty()) ss << "targets = " << fs::absolute(c.eval.targets).string() << "\n";
  ss << "\n[track]\n" << describe(c.track.tracking);
  if (!c.track.mask.empty()) ss << "mask = " << fs::absolute(c.track.mask).string() << "\n";
  return ss.str();
}

}  // namespace ccgan

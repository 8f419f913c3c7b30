#include "ccgan/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "ccgan/errors.hpp"
#include "ccgan/frame_io.hpp"
#include "ccgan/nn/weights_io.hpp"

namespace ccgan {
namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(lr_initial >= 0.0)) throw ConfigError("lr_initial must be >= 0");
  if (lr_decay_start_epoch < 0 || lr_decay_start_epoch > epochs) {
    throw ConfigError("lr_decay_start_epoch must lie in [0, epochs]");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (!(init_std > 0.0)) throw ConfigError("init_std must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.eps > 0.0)) {
    throw ConfigError("adam settings out of range");
  }
  weights.validate();
  validation_count(1, validation_fraction);
  generator.validate();
  discriminator.validate();
}

double lr_at(const TrainConfig& config, int epoch) {
  if (epoch < 0 || epoch > config.epochs) {
    throw ConfigError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(config.epochs) + "]");
  }
  if (epoch < config.lr_decay_start_epoch) return config.lr_initial;
  const int span = config.epochs - config.lr_decay_start_epoch;
  if (span == 0) return 0.0;
  const double remaining = static_cast<double>(config.epochs - epoch) / static_cast<double>(span);
  return config.lr_initial * remaining;
}

std::string describe(const TrainConfig& c) {
  std::ostringstream ss;
  ss.precision(17);
  auto ints = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  ss << "epochs = " << c.epochs << "\n"
     << "lr_initial = " << c.lr_initial << "\n"
     << "lr_decay_start_epoch = " << c.lr_decay_start_epoch << "\n"
     << "batch_size = " << c.batch_size << "\n"
     << "adam_beta1 = " << c.adam.beta1 << "\n"
     << "adam_beta2 = " << c.adam.beta2 << "\n"
     << "adam_eps = " << c.adam.eps << "\n"
     << "lambda1 = " << c.weights.lambda1 << "\n"
     << "lambda2 = " << c.weights.lambda2 << "\n"
     << "lambda3 = " << c.weights.lambda3 << "\n"
     << "validation_fraction = " << c.validation_fraction << "\n"
     << "seed = " << c.seed << "\n"
     << "checkpoint_every = " << c.checkpoint_every << "\n"
     << "init_std = " << c.init_std << "\n"
     << "generator_base_channels = " << c.generator.base_channels << "\n"
     << "generator_modules = " << c.generator.n_modules << "\n"
     << "generator_convs_per_module = " << c.generator.convs_per_module << "\n"
     << "discriminator_channels = " << ints(c.discriminator.channels) << "\n"
     << "discriminator_strides = " << ints(c.discriminator.strides) << "\n"
     << "discriminator_min_input = " << c.discriminator.min_input << "\n"
     << "discriminator_leaky_slope = " << c.discriminator.leaky_slope << "\n";
  return ss.str();
}

template <class T>
nn::Tensor<T> to_batch(const std::vector<const EnvelopeImage*>& frames) {
  if (frames.empty()) throw DataError("to_batch: no frames");
  const auto rows = frames.front()->rows();
  const auto cols = frames.front()->cols();
  nn::Tensor<T> t(nn::Shape{static_cast<int>(frames.size()), 1, static_cast<int>(rows), static_cast<int>(cols)});
  for (std::size_t n = 0; n < frames.size(); ++n) {
    if (frames[n]->rows() != rows || frames[n]->cols() != cols) throw DataError("to_batch: frames differ in shape");
    T* dst = t.plane(static_cast<int>(n), 0);
    const double* src = frames[n]->samples.data();
    for (std::size_t i = 0; i < rows * cols; ++i) dst[i] = static_cast<T>(src[i]);
  }
  return t;
}

template <class T>
nn::Tensor<T> to_batch(const std::vector<EnvelopeImage>& frames) {
  std::vector<const EnvelopeImage*> ptrs;
  for (const auto& f : frames) ptrs.push_back(&f);
  return to_batch<T>(ptrs);
}

// Trainer ------------------------------------------------------------------

template <class T>
Trainer<T>::Trainer(const TrainConfig& config) : config_(config) {
  config_.validate();
  const auto s = config_.seed;
  g_a_ = std::make_unique<nn::Generator<T>>(config_.generator, s * 4 + 1, config_.init_std);
  g_b_ = std::make_unique<nn::Generator<T>>(config_.generator, s * 4 + 2, config_.init_std);
  d_a_ = std::make_unique<nn::Discriminator<T>>(config_.discriminator, s * 4 + 3, config_.init_std);
  d_b_ = std::make_unique<nn::Discriminator<T>>(config_.discriminator, s * 4 + 4, config_.init_std);
  opt_g_a_ = std::make_unique<Adam<T>>(g_a_->store(), config_.adam);
  opt_g_b_ = std::make_unique<Adam<T>>(g_b_->store(), config_.adam);
  opt_d_a_ = std::make_unique<Adam<T>>(d_a_->store(), config_.adam);
  opt_d_b_ = std::make_unique<Adam<T>>(d_b_->store(), config_.adam);
}

namespace {

template <class T>
struct Fakes {
  nn::Var<T> fake_b;  // G_A(A)
  nn::Var<T> fake_a;  // G_B(B)
};

template <class T>
nn::Var<T> objective_from_fakes(nn::Generator<T>& g_a, nn::Generator<T>& g_b, nn::Discriminator<T>& d_a,
                                nn::Discriminator<T>& d_b, const LossWeights& w, const nn::Var<T>& a,
                                const nn::Var<T>& b, const Fakes<T>& f, bool training, LossReport& report) {
  using graph::correlation_pair;
  using graph::generator_adversarial;
  using graph::l1_pair;
  const auto adv = nn::weighted_sum<T>(
      {generator_adversarial(d_b.forward(f.fake_b)), generator_adversarial(d_a.forward(f.fake_a))}, {T(1), T(1)});
  const auto rec_a = g_b.forward(f.fake_b, training);
  const auto rec_b = g_a.forward(f.fake_a, training);
  const auto cyc = l1_pair(a, rec_a, b, rec_b);
  nn::Var<T> idt;
  if (w.lambda2 > 0.0) {
    idt = l1_pair(b, g_a.forward(b, training), a, g_b.forward(a, training));
  } else {
    // Reported but not optimized.
    nn::NoGradGuard guard;
    idt = l1_pair(b, g_a.forward(b, training), a, g_b.forward(a, training));
  }
  const auto cc = correlation_pair(a, f.fake_b, b, f.fake_a);
  auto total = nn::weighted_sum<T>({adv, cyc, idt, cc}, {T(1), static_cast<T>(w.lambda1), static_cast<T>(w.lambda2),
                                                         static_cast<T>(w.lambda3)});
  report.adv_g = adv.value().item();
  report.cyc = cyc.value().item();
  report.idt = idt.value().item();
  report.cc = cc.value().item();
  report.total = total.value().item();
  return total;
}

void require_finite_report(const LossReport& r) {
  for (double v : {r.adv_g, r.adv_d, r.cyc, r.idt, r.cc, r.total}) {
    if (!std::isfinite(v)) throw DivergenceError("non-finite loss");
  }
}

}  // namespace

template <class T>
nn::Var<T> Trainer<T>::generator_objective(const nn::Tensor<T>& batch_a, const nn::Tensor<T>& batch_b,
                                           LossReport* parts) {
  const auto a = nn::constant(batch_a);
  const auto b = nn::constant(batch_b);
  d_a_->store().set_requires_grad(false);
  d_b_->store().set_requires_grad(false);
  Fakes<T> f{g_a_->forward(a, true), g_b_->forward(b, true)};
  LossReport report;
  auto total = objective_from_fakes(*g_a_, *g_b_, *d_a_, *d_b_, config_.weights, a, b, f, true, report);
  d_a_->store().set_requires_grad(true);
  d_b_->store().set_requires_grad(true);
  if (parts) *parts = report;
  return total;
}

template <class T>
LossReport Trainer<T>::train_step(const nn::Tensor<T>& batch_a, const nn::Tensor<T>& batch_b, double lr) {
  if (batch_a.shape().n != batch_b.shape().n) throw DataError("train_step: batches must have equal size");
  if (batch_a.shape().c != 1 || batch_b.shape().c != 1) throw DataError("train_step: single-channel frames expected");
  const auto a = nn::constant(batch_a);
  const auto b = nn::constant(batch_b);
  LossReport report;

  g_a_->store().zero_grad();
  g_b_->store().zero_grad();
  d_a_->store().zero_grad();
  d_b_->store().zero_grad();

  Fakes<T> f{g_a_->forward(a, true), g_b_->forward(b, true)};

  // Discriminators see only this step's generator outputs.
  {
    const auto fake_b = nn::detach(f.fake_b);
    const auto fake_a = nn::detach(f.fake_a);
    if (trace_) trace_({f.fake_b.value(), f.fake_a.value(), fake_b.value(), fake_a.value()});
    const auto loss_d = nn::weighted_sum<T>(
        {graph::discriminator_adversarial(d_b_->forward(b), d_b_->forward(fake_b)),
         graph::discriminator_adversarial(d_a_->forward(a), d_a_->forward(fake_a))},
        {T(1), T(1)});
    report.adv_d = loss_d.value().item();
    if (!std::isfinite(report.adv_d)) throw DivergenceError("non-finite discriminator loss");
    nn::backward(loss_d);
    opt_d_a_->step(lr);
    opt_d_b_->step(lr);
  }

  d_a_->store().set_requires_grad(false);
  d_b_->store().set_requires_grad(false);
  try {
    const auto total = objective_from_fakes(*g_a_, *g_b_, *d_a_, *d_b_, config_.weights, a, b, f, true, report);
    require_finite_report(report);
    nn::backward(total);
  } catch (const MetricError& e) {
    d_a_->store().set_requires_grad(true);
    d_b_->store().set_requires_grad(true);
    throw DivergenceError(e.what());
  } catch (...) {
    d_a_->store().set_requires_grad(true);
    d_b_->store().set_requires_grad(true);
    throw;
  }
  d_a_->store().set_requires_grad(true);
  d_b_->store().set_requires_grad(true);
  opt_g_a_->step(lr);
  opt_g_b_->step(lr);
  ++steps_;
  return report;
}

template <class T>
LossReport Trainer<T>::evaluate(const nn::Tensor<T>& batch_a, const nn::Tensor<T>& batch_b) {
  nn::NoGradGuard guard;
  const auto a = nn::constant(batch_a);
  const auto b = nn::constant(batch_b);
  Fakes<T> f{g_a_->forward(a, false), g_b_->forward(b, false)};
  LossReport report;
  objective_from_fakes(*g_a_, *g_b_, *d_a_, *d_b_, config_.weights, a, b, f, false, report);
  report.adv_d = graph::discriminator_adversarial(d_b_->forward(b), d_b_->forward(f.fake_b)).value().item() +
                 graph::discriminator_adversarial(d_a_->forward(a), d_a_->forward(f.fake_a)).value().item();
  return report;
}

namespace {

constexpr char kOptMagic[8] = {'C', 'C', 'G', 'O', 'P', 'T', 0, 1};

template <class V>
void put(std::vector<std::uint8_t>& out, V v) {
  std::uint8_t b[sizeof(V)];
  std::memcpy(b, &v, sizeof(V));
  out.insert(out.end(), b, b + sizeof(V));
}

template <class T>
void put_moments(std::vector<std::uint8_t>& out, Adam<T>& opt) {
  put<std::uint64_t>(out, opt.steps());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(opt.first_moments().size()));
  for (std::size_t p = 0; p < opt.first_moments().size(); ++p) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(opt.first_moments()[p].size()));
    for (T v : opt.first_moments()[p]) put<float>(out, static_cast<float>(v));
    for (T v : opt.second_moments()[p]) put<float>(out, static_cast<float>(v));
  }
}

struct ByteReader {
  std::vector<char> bytes;
  std::size_t pos = 0;
  template <class V>
  V get() {
    if (pos + sizeof(V) > bytes.size()) throw DataError("truncated optimizer state");
    V v;
    std::memcpy(&v, bytes.data() + pos, sizeof(V));
    pos += sizeof(V);
    return v;
  }
};

template <class T>
void get_moments(ByteReader& r, Adam<T>& opt) {
  opt.set_steps(r.get<std::uint64_t>());
  const auto count = r.get<std::uint32_t>();
  if (count != opt.first_moments().size()) throw DataError("optimizer state does not match the network");
  for (std::size_t p = 0; p < count; ++p) {
    const auto n = r.get<std::uint32_t>();
    if (n != opt.first_moments()[p].size()) throw DataError("optimizer state does not match the network");
    for (auto& v : opt.first_moments()[p]) v = static_cast<T>(r.get<float>());
    for (auto& v : opt.second_moments()[p]) v = static_cast<T>(r.get<float>());
  }
}

}  // namespace

template <class T>
void Trainer<T>::save_state(const fs::path& dir) const {
  fs::create_directories(dir);
  nn::save_generator(dir / "G_A.ccw", *g_a_);
  nn::save_generator(dir / "G_B.ccw", *g_b_);
  nn::save_discriminator(dir / "D_A.ccw", *d_a_);
  nn::save_discriminator(dir / "D_B.ccw", *d_b_);
  std::vector<std::uint8_t> out(kOptMagic, kOptMagic + 8);
  put<std::uint64_t>(out, steps_);
  for (auto* opt : {opt_g_a_.get(), opt_g_b_.get(), opt_d_a_.get(), opt_d_b_.get()}) put_moments(out, *opt);
  write_file_atomic(dir / "optimizer.bin", out);
}

template <class T>
void Trainer<T>::load_state(const fs::path& dir) {
  nn::load_into(dir / "G_A.ccw", *g_a_);
  nn::load_into(dir / "G_B.ccw", *g_b_);
  nn::load_into(dir / "D_A.ccw", *d_a_);
  nn::load_into(dir / "D_B.ccw", *d_b_);
  std::ifstream f(dir / "optimizer.bin", std::ios::binary);
  if (!f) throw DataError("missing optimizer state in " + dir.string());
  ByteReader r{std::vector<char>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>())};
  if (r.bytes.size() < 8 || std::memcmp(r.bytes.data(), kOptMagic, 8) != 0) throw DataError("bad optimizer state file");
  r.pos = 8;
  steps_ = r.get<std::uint64_t>();
  for (auto* opt : {opt_g_a_.get(), opt_g_b_.get(), opt_d_a_.get(), opt_d_b_.get()}) get_moments(r, *opt);
}

// Data order ---------------------------------------------------------------

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch, int domain) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(domain), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

SplitDataset split_validation(const UnpairedDataset& ds, double fraction, std::uint64_t seed) {
  SplitDataset out;
  auto split = [&](const std::vector<EnvelopeImage>& frames, int domain, std::vector<EnvelopeImage>& train,
                   std::vector<EnvelopeImage>& val) {
    const auto held = validation_count(frames.size(), fraction);
    auto order = epoch_order(frames.size(), seed, -1, domain);
    std::sort(order.end() - static_cast<std::ptrdiff_t>(held), order.end());
    std::vector<bool> is_val(frames.size(), false);
    for (std::size_t i = frames.size() - held; i < frames.size(); ++i) is_val[order[i]] = true;
    for (std::size_t i = 0; i < frames.size(); ++i) (is_val[i] ? val : train).push_back(frames[i]);
  };
  split(ds.domain_a, 0, out.train.domain_a, out.validation.domain_a);
  split(ds.domain_b, 1, out.train.domain_b, out.validation.domain_b);
  return out;
}

// Run loop -----------------------------------------------------------------

namespace {

std::string fmt_row(std::uint64_t step, int epoch, const LossReport& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf, "%llu,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", static_cast<unsigned long long>(step),
                epoch, r.adv_g, r.adv_d, r.cyc, r.idt, r.cc, r.total);
  return buf;
}

std::string log_preamble(const TrainConfig& c) {
  std::ostringstream ss;
  ss << "# ccgan training log\n";
  if (c.weights.is_vanilla()) {
    ss << "# baseline: vanilla CycleGAN\n";
  } else {
    ss << "# objective: constrained CycleGAN\n";
  }
  ss << "# lambda1=" << c.weights.lambda1 << " lambda2=" << c.weights.lambda2 << " lambda3=" << c.weights.lambda3
     << "\n";
  ss << kLossLogColumns << "\n";
  return ss.str();
}

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || line.front() == '#') continue;
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

// Keeps the preamble and the first `rows` data rows of `source`.
std::string truncated_log(const fs::path& source, std::size_t rows) {
  std::ifstream f(source);
  if (!f) throw DataError("cannot read loss log " + source.string());
  std::string out, line;
  std::size_t data = 0;
  bool header_seen = false;
  while (std::getline(f, line)) {
    if (!header_seen) {
      out += line + "\n";
      header_seen = line == kLossLogColumns;
      continue;
    }
    if (data == rows) break;
    out += line + "\n";
    ++data;
  }
  if (data != rows) throw DataError("loss log " + source.string() + " is shorter than the checkpoint offset");
  return out;
}

template <class T>
CheckpointInfo write_checkpoint(const Trainer<T>& trainer, const fs::path& run_dir, int epoch, std::size_t log_rows) {
  char name[32];
  std::snprintf(name, sizeof name, "epoch_%04d", epoch);
  const fs::path final_dir = run_dir / "checkpoints" / name;
  fs::path tmp = final_dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  trainer.save_state(tmp);
  std::ostringstream ss;
  ss << "epoch = " << epoch << "\nsteps = " << trainer.steps() << "\nlog_offset = " << log_rows << "\n"
     << describe(trainer.config());
  write_text_atomic(tmp / "state.txt", ss.str());
  fs::remove_all(final_dir);
  fs::rename(tmp, final_dir);
  return {epoch, final_dir, log_rows};
}

template <class T>
LossReport validation_report(Trainer<T>& trainer, const UnpairedDataset& val, int batch) {
  LossReport sum;
  const std::size_t n = std::min(val.domain_a.size(), val.domain_b.size());
  std::size_t batches = 0;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(n, i + static_cast<std::size_t>(batch));
    std::vector<const EnvelopeImage*> a, b;
    for (std::size_t j = i; j < end; ++j) {
      a.push_back(&val.domain_a[j]);
      b.push_back(&val.domain_b[j]);
    }
    const auto r = trainer.evaluate(to_batch<T>(a), to_batch<T>(b));
    sum.adv_g += r.adv_g;
    sum.adv_d += r.adv_d;
    sum.cyc += r.cyc;
    sum.idt += r.idt;
    sum.cc += r.cc;
    sum.total += r.total;
    ++batches;
  }
  if (batches) {
    const double k = static_cast<double>(batches);
    sum = {sum.adv_g / k, sum.adv_d / k, sum.cyc / k, sum.idt / k, sum.cc / k, sum.total / k};
  }
  return sum;
}

}  // namespace

template <class T>
TrainResult train(const UnpairedDataset& dataset, const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (dataset.domain_a.empty() || dataset.domain_b.empty()) throw DataError("training needs frames in both domains");
  const fs::path run = options.run_dir;
  fs::create_directories(run / "checkpoints");
  fs::create_directories(run / "exported");

  const auto split = split_validation(dataset, config.validation_fraction, config.seed);
  const auto& tr = split.train;
  if (tr.domain_a.empty() || tr.domain_b.empty()) throw DataError("validation hold-out leaves a domain empty");
  const std::size_t per_epoch = std::min(tr.domain_a.size(), tr.domain_b.size()) / static_cast<std::size_t>(config.batch_size);
  if (per_epoch == 0) throw ConfigError("batch_size exceeds the smaller training domain");

  TrainResult result;
  result.train_a = tr.domain_a.size();
  result.train_b = tr.domain_b.size();
  result.validation_a = split.validation.domain_a.size();
  result.validation_b = split.validation.domain_b.size();

  Trainer<T> trainer(config);
  int start_epoch = 0;
  std::size_t log_rows = 0;
  const fs::path log_path = run / "loss_log.csv";
  const fs::path val_path = run / "validation_log.csv";

  write_text_atomic(run / "config.txt", "version = 1\n[train]\n" + describe(config));

  if (options.resume_from) {
    const fs::path ckpt = *options.resume_from;
    const auto state = read_key_values(ckpt / "state.txt");
    for (const char* key : {"seed", "batch_size", "epochs", "lambda1", "lambda2", "lambda3", "lr_initial",
                            "lr_decay_start_epoch", "validation_fraction", "generator_base_channels",
                            "generator_modules"}) {
      const auto echo = read_key_values(run / "config.txt");
      if (state.count(key) && echo.count(key) && state.at(key) != echo.at(key)) {
        throw ConfigError(std::string("resume: checkpoint was taken with a different '") + key + "'");
      }
    }
    trainer.load_state(ckpt);
    start_epoch = std::stoi(state.at("epoch"));
    log_rows = std::stoul(state.at("log_offset"));
    const fs::path source_log = fs::exists(log_path) ? log_path : ckpt.parent_path().parent_path() / "loss_log.csv";
    write_text_atomic(log_path, fs::exists(source_log) ? truncated_log(source_log, log_rows) : log_preamble(config));
    if (!fs::exists(val_path)) write_text_atomic(val_path, std::string("epoch,adv_g,adv_d,cyc,idt,cc,total\n"));
  } else {
    write_text_atomic(log_path, log_preamble(config));
    write_text_atomic(val_path, "epoch,adv_g,adv_d,cyc,idt,cc,total\n");
    result.checkpoints.push_back(write_checkpoint(trainer, run, 0, 0));
  }

  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(config, epoch);
    const auto order_a = epoch_order(tr.domain_a.size(), config.seed, epoch, 0);
    const auto order_b = epoch_order(tr.domain_b.size(), config.seed, epoch, 1);
    std::string rows;
    LossReport mean;
    for (std::size_t s = 0; s < per_epoch; ++s) {
      std::vector<const EnvelopeImage*> a, b;
      for (std::size_t j = s * bs; j < (s + 1) * bs; ++j) {
        a.push_back(&tr.domain_a[order_a[j]]);
        b.push_back(&tr.domain_b[order_b[j]]);
      }
      LossReport r;
      try {
        r = trainer.train_step(to_batch<T>(a), to_batch<T>(b), lr);
      } catch (const DivergenceError& e) {
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch + 1 << ", step " << trainer.steps() + 1 << ": " << e.what()
            << "; domain A frames [";
        for (std::size_t j = s * bs; j < (s + 1) * bs; ++j) msg << (j > s * bs ? " " : "") << tr.domain_a[order_a[j]].frame_index;
        msg << "], domain B frames [";
        for (std::size_t j = s * bs; j < (s + 1) * bs; ++j) msg << (j > s * bs ? " " : "") << tr.domain_b[order_b[j]].frame_index;
        msg << "]";
        std::ofstream(log_path, std::ios::app) << rows;
        throw DivergenceError(msg.str());
      }
      rows += fmt_row(trainer.steps(), epoch + 1, r);
      mean.adv_g += r.adv_g;
      mean.adv_d += r.adv_d;
      mean.cyc += r.cyc;
      mean.idt += r.idt;
      mean.cc += r.cc;
      mean.total += r.total;
    }
    {
      std::ofstream f(log_path, std::ios::app);
      f << rows;
      if (!f) throw DataError("cannot append to " + log_path.string());
    }
    log_rows += per_epoch;
    const double k = static_cast<double>(per_epoch);
    mean = {mean.adv_g / k, mean.adv_d / k, mean.cyc / k, mean.idt / k, mean.cc / k, mean.total / k};
    result.epoch_means.push_back(mean);
    if (options.on_epoch) options.on_epoch(epoch + 1, mean);

    if ((epoch + 1) % config.checkpoint_every == 0 || epoch + 1 == config.epochs) {
      result.checkpoints.push_back(write_checkpoint(trainer, run, epoch + 1, log_rows));
      if (!split.validation.domain_a.empty() && !split.validation.domain_b.empty()) {
        const auto v = validation_report(trainer, split.validation, config.batch_size);
        char buf[256];
        std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", epoch + 1, v.adv_g, v.adv_d, v.cyc,
                      v.idt, v.cc, v.total);
        std::ofstream(val_path, std::ios::app) << buf;
      }
    }
  }
  if (config.epochs == 0 && result.checkpoints.empty()) {
    result.checkpoints.push_back(write_checkpoint(trainer, run, 0, log_rows));
  }
  nn::save_generator(run / "exported" / "G_A.ccw", trainer.g_a());
  nn::save_generator(run / "exported" / "G_B.ccw", trainer.g_b());
  return result;
}

template <class T>
std::vector<EnvelopeImage> translate(nn::Generator<T>& generator, const std::vector<EnvelopeImage>& frames,
                                     std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("translate: batch size must be positive");
  for (const auto& f : frames) {
    for (double v : f.samples.values()) {
      if (!(v >= 0.0 && v <= 1.0)) throw DataError("translate: frames must be normalized to [0, 1]");
    }
  }
  std::vector<EnvelopeImage> out;
  out.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); i += batch_size) {
    std::vector<const EnvelopeImage*> chunk;
    for (std::size_t j = i; j < std::min(frames.size(), i + batch_size); ++j) chunk.push_back(&frames[j]);
    const auto y = generator.infer(to_batch<T>(chunk));
    for (std::size_t j = 0; j < chunk.size(); ++j) {
      EnvelopeImage img = *chunk[j];
      img.domain = Domain::generated;
      const T* src = y.plane(static_cast<int>(j), 0);
      for (std::size_t k = 0; k < img.samples.size(); ++k) {
        img.samples.data()[k] = std::clamp(static_cast<double>(src[k]), 0.0, 1.0);
      }
      out.push_back(std::move(img));
    }
  }
  return out;
}

template class Trainer<float>;
template class Trainer<double>;
template nn::Tensor<float> to_batch<float>(const std::vector<const EnvelopeImage*>&);
template nn::Tensor<double> to_batch<double>(const std::vector<const EnvelopeImage*>&);
template nn::Tensor<float> to_batch<float>(const std::vector<EnvelopeImage>&);
template nn::Tensor<double> to_batch<double>(const std::vector<EnvelopeImage>&);
template TrainResult train<float>(const UnpairedDataset&, const TrainConfig&, const TrainOptions&);
template TrainResult train<double>(const UnpairedDataset&, const TrainConfig&, const TrainOptions&);
template std::vector<EnvelopeImage> translate<float>(nn::Generator<float>&, const std::vector<EnvelopeImage>&, std::size_t);
template std::vector<EnvelopeImage> translate<double>(nn::Generator<double>&, const std::vector<EnvelopeImage>&, std::size_t);

}  // namespace ccgan

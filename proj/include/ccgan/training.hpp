#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ccgan/dataset.hpp"
#include "ccgan/losses.hpp"
#include "ccgan/nn/networks.hpp"
#include "ccgan/optimizer.hpp"

namespace ccgan {

struct TrainConfig {
  int epochs = 200;
  double lr_initial = 2e-4;
  int lr_decay_start_epoch = 100;
  int batch_size = 10;
  AdamSettings adam;
  LossWeights weights;
  double validation_fraction = 0.10;
  std::uint64_t seed = 0;
  int checkpoint_every = 10;
  double init_std = 0.02;
  nn::GeneratorSpec generator;
  nn::DiscriminatorSpec discriminator;

  void validate() const;
};

/// Constant lr_initial before lr_decay_start_epoch, then linear to exactly
/// zero at epoch == epochs. Throws ConfigError outside [0, epochs].
double lr_at(const TrainConfig& config, int epoch);

/// "key = value" lines, one per field; also the run's config snapshot.
std::string describe(const TrainConfig& config);

/// Stacks frames into an (N, 1, H, W) tensor.
template <class T>
nn::Tensor<T> to_batch(const std::vector<const EnvelopeImage*>& frames);
template <class T>
nn::Tensor<T> to_batch(const std::vector<EnvelopeImage>& frames);

/// What the discriminators were fed in one step; lets tests check that only
/// this step's generator outputs reach them.
template <class T>
struct StepTrace {
  nn::Tensor<T> generated_b;  // G_A(A) as produced by the generator
  nn::Tensor<T> generated_a;  // G_B(B)
  nn::Tensor<T> d_b_fake_input;
  nn::Tensor<T> d_a_fake_input;
};

/// Both generators, both discriminators and one Adam per network.
template <class T>
class Trainer {
 public:
  explicit Trainer(const TrainConfig& config);

  /// One discriminator update (generators fixed) followed by one generator
  /// update (discriminators fixed). Batches are (N, 1, H, W) with equal N.
  LossReport train_step(const nn::Tensor<T>& batch_a, const nn::Tensor<T>& batch_b, double lr);

  /// Loss terms without any update; generators in inference mode.
  LossReport evaluate(const nn::Tensor<T>& batch_a, const nn::Tensor<T>& batch_b);

  /// Graph of the total generator objective for the current parameters.
  /// Generators run in training mode; discriminators are treated as fixed.
  nn::Var<T> generator_objective(const nn::Tensor<T>& batch_a, const nn::Tensor<T>& batch_b,
                                 LossReport* parts = nullptr);

  void set_trace(std::function<void(const StepTrace<T>&)> observer) { trace_ = std::move(observer); }

  nn::Generator<T>& g_a() { return *g_a_; }
  nn::Generator<T>& g_b() { return *g_b_; }
  nn::Discriminator<T>& d_a() { return *d_a_; }
  nn::Discriminator<T>& d_b() { return *d_b_; }
  const TrainConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }

  /// Writes weights for all four networks, optimizer moments and counters.
  void save_state(const std::filesystem::path& dir) const;
  void load_state(const std::filesystem::path& dir);

 private:
  TrainConfig config_;
  std::unique_ptr<nn::Generator<T>> g_a_, g_b_;
  std::unique_ptr<nn::Discriminator<T>> d_a_, d_b_;
  std::unique_ptr<Adam<T>> opt_g_a_, opt_g_b_, opt_d_a_, opt_d_b_;
  std::uint64_t steps_ = 0;
  std::function<void(const StepTrace<T>&)> trace_;
};

struct CheckpointInfo {
  int epoch = 0;
  std::filesystem::path dir;
  std::size_t log_offset = 0;  // loss-log data rows written when the checkpoint was taken
};

struct TrainOptions {
  std::filesystem::path run_dir;
  std::optional<std::filesystem::path> resume_from;  // a checkpoint directory
  std::function<void(int epoch, const LossReport& mean)> on_epoch;
};

struct TrainResult {
  std::vector<CheckpointInfo> checkpoints;
  std::vector<LossReport> epoch_means;  // index e holds epoch e + 1
  std::size_t train_a = 0, train_b = 0, validation_a = 0, validation_b = 0;
};

/// Deterministic hold-out of floor(n * fraction) frames per domain.
struct SplitDataset {
  UnpairedDataset train;
  UnpairedDataset validation;
};
SplitDataset split_validation(const UnpairedDataset& ds, double fraction, std::uint64_t seed);

/// Frame order for one domain in one epoch; depends only on (seed, epoch, domain).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch, int domain);

/// Full training run. The run directory receives config.txt, loss_log.csv,
/// validation_log.csv, checkpoints/epoch_NNNN/ and exported/ (generators only).
template <class T>
TrainResult train(const UnpairedDataset& dataset, const TrainConfig& config, const TrainOptions& options);

inline constexpr const char* kLossLogColumns = "step,epoch,adv_g,adv_d,cyc,idt,cc,total";

/// Inference-only pass of a generator; outputs clamped to [0, 1] and tagged generated.
template <class T>
std::vector<EnvelopeImage> translate(nn::Generator<T>& generator, const std::vector<EnvelopeImage>& frames,
                                     std::size_t batch_size = 10);

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace ccgan

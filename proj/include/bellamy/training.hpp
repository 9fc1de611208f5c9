#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bellamy/model.hpp"

namespace bellamy {

/// Triangular learning-rate wave between lo and hi, starting at hi.
struct CyclicalSchedule {
  double lo = 1e-3;
  double hi = 1e-2;
  int period = 200;
};

double lr_at(int epoch, const CyclicalSchedule& schedule);

struct FitConfig {
  std::size_t batch_size = 64;
  int epochs = 2500;
  double learning_rate = 1e-2;
  double weight_decay = 1e-3;
  double dropout_rate = 0.1;
  double huber_delta = 1.0;
  double reconstruction_weight = 1.0;
  std::uint64_t seed = 0;
  // Constant learning rate when unset.
  std::optional<CyclicalSchedule> schedule;
};

/// Pre-training hyperparameter grid; `sample_count` configurations are drawn
/// from it without replacement.
struct SearchSpace {
  std::vector<double> dropout_rates{0.05, 0.10, 0.20};
  std::vector<double> learning_rates{1e-1, 1e-2, 1e-3};
  std::vector<double> weight_decays{1e-2, 1e-3, 1e-4};
  std::size_t sample_count = 12;
  int epochs = 2500;
  std::size_t batch_size = 64;
  double validation_fraction = 0.2;
  double huber_delta = 1.0;
  double reconstruction_weight = 1.0;
};

// Unique configurations drawn from the grid; deterministic in `seed`.
std::vector<FitConfig> sample_configs(const SearchSpace& space, std::uint64_t seed);

struct SearchLogEntry {
  std::size_t config_id = 0;
  FitConfig config;
  double train_mae = 0.0;
  double validation_mae = 0.0;
  int epochs = 0;
  double wall_time_s = 0.0;
  bool diverged = false;
};

struct PretrainResult {
  ModelState state;
  std::vector<SearchLogEntry> log;
  std::size_t chosen = 0;
};

// Trains every trainable component of `state` on the joint loss. Throws
// ErrorKind::non_finite when training diverges.
void train_joint(ModelState& state, std::span<const RunRecord> records, const FitConfig& config);

PretrainResult pretrain(std::span<const RunRecord> records, const PropertySchema& schema,
                        const SearchSpace& space, std::uint64_t seed, unsigned workers = 1);

std::string search_log_csv(std::span<const SearchLogEntry> log);

double mean_absolute_error(const ModelState& state, std::span<const RunRecord> records);

enum class Strategy { local, pretrained };
enum class Reuse { none, partial_unfreeze, full_unfreeze, partial_reset, full_reset };
enum class StopReason { mae_threshold, patience, epoch_cap, no_samples };

const char* to_string(Strategy s) noexcept;
const char* to_string(Reuse r) noexcept;
const char* to_string(StopReason r) noexcept;
Strategy parse_strategy(std::string_view s);
Reuse parse_reuse(std::string_view s);

struct FineTuneOptions {
  int max_epochs = 2500;
  int patience = 1000;
  double mae_threshold = 5.0;
  double improvement_tolerance = 1e-6;
  double weight_decay = 1e-3;
  double huber_delta = 1.0;
  std::size_t batch_size = 64;
  CyclicalSchedule schedule{};
};

struct FineTuneReport {
  int epochs_run = 0;
  int best_epoch = 0;
  double best_mae_seconds = 0.0;
  StopReason stopping_reason = StopReason::no_samples;
  double wall_time_s = 0.0;
  int unfreeze_epoch = 0;
  // Training MAE before any update (index 0) and after every epoch.
  std::vector<double> mae_history;
};

struct FineTuneResult {
  ModelState state;
  FineTuneReport report;
};

// Epoch from which f joins z in training when k samples are available.
int unfreeze_epoch(std::size_t samples);

/// Adapts a model to a concrete context using the runtime loss only. The
/// auto-encoder (g, h) is never updated. `local` discards the weights of
/// `base` and starts from a fresh initialization with `base`'s schema.
/// Returns the best-MAE snapshot, not the last one.
FineTuneResult finetune(const ModelState& base, std::span<const RunRecord> samples,
                        Strategy strategy, Reuse reuse, std::uint64_t seed,
                        const FineTuneOptions& options = {});

}  // namespace bellamy

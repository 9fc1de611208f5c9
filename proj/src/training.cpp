#include "bellamy/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "bellamy/error.hpp"

namespace bellamy {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct PreparedSet {
  std::vector<ModelInput> inputs;
  std::vector<double> targets;
};

PreparedSet prepare(const ModelState& state, std::span<const RunRecord> records) {
  PreparedSet set;
  set.inputs.reserve(records.size());
  set.targets.reserve(records.size());
  for (const auto& r : records) {
    set.inputs.push_back(prepare_input(state, r.scale_out, r.properties));
    set.targets.push_back(r.runtime_seconds);
  }
  return set;
}

double prepared_mae(const ModelState& state, const PreparedSet& set) {
  double acc = 0.0;
  for (std::size_t i = 0; i < set.inputs.size(); ++i) {
    const double p =
        forward(state, set.inputs[i], Mode::infer, nullptr, nullptr, false).runtime_seconds;
    acc += std::abs(p - set.targets[i]);
  }
  return acc / static_cast<double>(set.inputs.size());
}

void step_trainable(ModelState& state, const ModelGrad& grad, std::array<AdamState, 4>& adam,
                    const AdamHyper& hyper, double lr) {
  for (auto c : kAllComponents) {
    if (!state.is_trainable(c)) continue;
    adam_step(state.block(c), grad[c], adam[static_cast<std::size_t>(c)], hyper, lr, to_string(c));
  }
}

// One pass over `set` in shuffled mini-batches; a set no larger than one batch
// is used whole and in order.
void run_epoch(ModelState& state, const PreparedSet& set, std::size_t batch_size,
               const LossOptions& loss, Rng& rng, std::array<AdamState, 4>& adam,
               const AdamHyper& hyper, double lr, ModelGrad& grad) {
  if (set.inputs.size() <= batch_size) {
    grad.clear();
    joint_loss_gradient(state, set.inputs, set.targets, loss, Mode::train, &rng, grad);
    step_trainable(state, grad, adam, hyper, lr);
    return;
  }
  std::vector<std::size_t> order(set.inputs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<ModelInput> batch_inputs;
  std::vector<double> batch_targets;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batch_inputs.clear();
    batch_targets.clear();
    for (std::size_t i = start; i < end; ++i) {
      batch_inputs.push_back(set.inputs[order[i]]);
      batch_targets.push_back(set.targets[order[i]]);
    }
    grad.clear();
    joint_loss_gradient(state, batch_inputs, batch_targets, loss, Mode::train, &rng, grad);
    step_trainable(state, grad, adam, hyper, lr);
  }
}

void train_prepared(ModelState& state, const PreparedSet& set, const FitConfig& config) {
  if (set.inputs.empty()) throw Error(ErrorKind::insufficient_data, "train_joint: no records");
  if (config.batch_size == 0) throw Error(ErrorKind::config, "batch size must be at least 1");
  state.set_dropout(config.dropout_rate);
  Rng rng(derive_seed(config.seed, 7));
  std::array<AdamState, 4> adam;
  for (auto c : kAllComponents) adam[static_cast<std::size_t>(c)] = AdamState::for_block(state.block(c));
  const AdamHyper hyper{.weight_decay = config.weight_decay};
  const LossOptions loss{.huber_delta = config.huber_delta,
                         .reconstruction_weight = config.reconstruction_weight,
                         .include_reconstruction = true};
  ModelGrad grad = ModelGrad::zeros_like(state);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.schedule ? lr_at(epoch, *config.schedule) : config.learning_rate;
    run_epoch(state, set, config.batch_size, loss, rng, adam, hyper, lr, grad);
  }
  state.set_dropout(0.0);
}

}  // namespace

double lr_at(int epoch, const CyclicalSchedule& schedule) {
  if (epoch < 0) throw Error(ErrorKind::config, "lr_at: negative epoch");
  if (schedule.period < 1 || !(schedule.lo < schedule.hi)) {
    throw Error(ErrorKind::config, "cyclical schedule needs lo < hi and period >= 1");
  }
  const double phase = static_cast<double>(epoch % schedule.period) / schedule.period;
  return schedule.lo + (schedule.hi - schedule.lo) * std::abs(1.0 - 2.0 * phase);
}

std::vector<FitConfig> sample_configs(const SearchSpace& space, std::uint64_t seed) {
  std::vector<FitConfig> grid;
  for (double d : space.dropout_rates)
    for (double lr : space.learning_rates)
      for (double wd : space.weight_decays) {
        FitConfig c;
        c.dropout_rate = d;
        c.learning_rate = lr;
        c.weight_decay = wd;
        c.epochs = space.epochs;
        c.batch_size = space.batch_size;
        c.huber_delta = space.huber_delta;
        c.reconstruction_weight = space.reconstruction_weight;
        grid.push_back(c);
      }
  if (grid.empty()) throw Error(ErrorKind::config, "search space is empty");
  Rng rng(derive_seed(seed, 1));
  std::shuffle(grid.begin(), grid.end(), rng);
  grid.resize(std::min(grid.size(), space.sample_count));
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i].seed = derive_seed(seed, 100 + i);
  return grid;
}

void train_joint(ModelState& state, std::span<const RunRecord> records, const FitConfig& config) {
  train_prepared(state, prepare(state, records), config);
}

double mean_absolute_error(const ModelState& state, std::span<const RunRecord> records) {
  if (records.empty()) throw Error(ErrorKind::insufficient_data, "mean_absolute_error: no records");
  return prepared_mae(state, prepare(state, records));
}

PretrainResult pretrain(std::span<const RunRecord> records, const PropertySchema& schema,
                        const SearchSpace& space, std::uint64_t seed, unsigned workers) {
  if (records.size() < 2) {
    throw Error(ErrorKind::insufficient_data, "pre-training needs at least 2 records, got " +
                                                  std::to_string(records.size()));
  }
  schema.validate();
  std::vector<long long> scale_outs;
  for (const auto& r : records) scale_outs.push_back(r.scale_out);
  const ModelState initial = ModelState::create(schema, Normalizer::fit_scaleouts(scale_outs), seed);

  // One shared train/validation split for every configuration.
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(seed, 2));
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto n_val = static_cast<std::size_t>(std::floor(space.validation_fraction * records.size()));
  std::vector<RunRecord> train, validation;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? validation : train).push_back(records[order[i]]);
  }
  const PreparedSet train_set = prepare(initial, train);
  const PreparedSet val_set = validation.empty() ? PreparedSet{} : prepare(initial, validation);

  const auto configs = sample_configs(space, seed);
  std::vector<SearchLogEntry> log(configs.size());
  std::vector<std::optional<ModelState>> states(configs.size());

  auto run_config = [&](std::size_t i) {
    const auto start = Clock::now();
    SearchLogEntry entry;
    entry.config_id = i;
    entry.config = configs[i];
    entry.epochs = configs[i].epochs;
    ModelState state = initial;
    try {
      train_prepared(state, train_set, configs[i]);
      entry.train_mae = prepared_mae(state, train_set);
      entry.validation_mae = val_set.inputs.empty() ? entry.train_mae : prepared_mae(state, val_set);
      entry.diverged = !std::isfinite(entry.train_mae) || !std::isfinite(entry.validation_mae);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::non_finite) throw;
      entry.diverged = true;
    }
    if (entry.diverged) {
      entry.train_mae = entry.validation_mae = std::numeric_limits<double>::quiet_NaN();
    } else {
      states[i] = std::move(state);
    }
    entry.wall_time_s = seconds_since(start);
    log[i] = entry;
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(workers, configs.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < configs.size(); ++i) run_config(i);
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::exception_ptr failure;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard lock(mu);
            if (next >= configs.size() || failure) return;
            i = next++;
          }
          try {
            run_config(i);
          } catch (...) {
            std::lock_guard lock(mu);
            failure = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (log[i].diverged) continue;
    if (!best || log[i].validation_mae < log[*best].validation_mae) best = i;
  }
  if (!best) throw Error(ErrorKind::training, "pre-training failed: every configuration diverged");
  return {std::move(*states[*best]), std::move(log), *best};
}

std::string search_log_csv(std::span<const SearchLogEntry> log) {
  std::ostringstream os;
  os << "config_id,dropout,learning_rate,weight_decay,epochs,train_mae,validation_mae,diverged,"
        "wall_time_s\n";
  os << std::setprecision(10);
  for (const auto& e : log) {
    os << e.config_id << ',' << e.config.dropout_rate << ',' << e.config.learning_rate << ','
       << e.config.weight_decay << ',' << e.epochs << ',' << e.train_mae << ','
       << e.validation_mae << ',' << (e.diverged ? 1 : 0) << ',' << e.wall_time_s << '\n';
  }
  return os.str();
}

const char* to_string(Strategy s) noexcept { return s == Strategy::local ? "local" : "pretrained"; }

const char* to_string(Reuse r) noexcept {
  switch (r) {
    case Reuse::none: return "none";
    case Reuse::partial_unfreeze: return "partial-unfreeze";
    case Reuse::full_unfreeze: return "full-unfreeze";
    case Reuse::partial_reset: return "partial-reset";
    case Reuse::full_reset: return "full-reset";
  }
  return "?";
}

const char* to_string(StopReason r) noexcept {
  switch (r) {
    case StopReason::mae_threshold: return "mae_threshold";
    case StopReason::patience: return "patience";
    case StopReason::epoch_cap: return "epoch_cap";
    case StopReason::no_samples: return "no_samples";
  }
  return "?";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "local") return Strategy::local;
  if (s == "pretrained") return Strategy::pretrained;
  throw Error(ErrorKind::config, "unknown strategy '" + std::string(s) + "'");
}

Reuse parse_reuse(std::string_view s) {
  for (Reuse r : {Reuse::none, Reuse::partial_unfreeze, Reuse::full_unfreeze, Reuse::partial_reset,
                  Reuse::full_reset})
    if (s == to_string(r)) return r;
  throw Error(ErrorKind::config, "unknown reuse strategy '" + std::string(s) + "'");
}

int unfreeze_epoch(std::size_t samples) {
  return static_cast<int>(std::min<std::size_t>(100 * samples, 1000));
}

FineTuneResult finetune(const ModelState& base, std::span<const RunRecord> samples,
                        Strategy strategy, Reuse reuse, std::uint64_t seed,
                        const FineTuneOptions& options) {
  const auto start = Clock::now();
  if (options.max_epochs < 1 || options.patience < 1 || options.batch_size == 0) {
    throw Error(ErrorKind::config, "fine-tuning needs positive epoch cap, patience and batch size");
  }
  ModelState state;
  bool f_from_start = false;
  if (strategy == Strategy::local) {
    if (samples.empty()) {
      throw Error(ErrorKind::insufficient_data, "local fine-tuning needs at least one sample");
    }
    std::vector<long long> xs;
    for (const auto& s : samples) xs.push_back(s.scale_out);
    state = ModelState::create(base.schema, Normalizer::fit_scaleouts(xs), derive_seed(seed, 11));
    f_from_start = true;
  } else {
    state = base;
    if (samples.empty()) {
      FineTuneReport report;
      report.best_mae_seconds = std::numeric_limits<double>::quiet_NaN();
      report.stopping_reason = StopReason::no_samples;
      report.wall_time_s = seconds_since(start);
      return {std::move(state), std::move(report)};
    }
    switch (reuse) {
      case Reuse::none:
      case Reuse::partial_unfreeze:
        break;
      case Reuse::full_unfreeze:
        f_from_start = true;
        break;
      case Reuse::partial_reset:
        reset(state, Component::z, derive_seed(seed, 12));
        break;
      case Reuse::full_reset:
        reset(state, Component::f, derive_seed(seed, 13));
        reset(state, Component::z, derive_seed(seed, 12));
        f_from_start = true;
        break;
    }
  }
  state.set_dropout(0.0);
  set_trainable(state, Component::g, false);
  set_trainable(state, Component::h, false);
  set_trainable(state, Component::z, true);

  const PreparedSet set = prepare(state, samples);
  const int f_epoch = f_from_start ? 0 : unfreeze_epoch(samples.size());

  FineTuneReport report;
  report.unfreeze_epoch = f_epoch;
  double best = prepared_mae(state, set);
  if (!std::isfinite(best)) throw Error(ErrorKind::training, "fine-tuning: initial MAE not finite");
  report.mae_history.push_back(best);
  ModelState best_state = state;
  int best_epoch = 0;
  int last_improvement = 0;

  std::array<AdamState, 4> adam;
  for (auto c : kAllComponents) adam[static_cast<std::size_t>(c)] = AdamState::for_block(state.block(c));
  const AdamHyper hyper{.weight_decay = options.weight_decay};
  const LossOptions loss{.huber_delta = options.huber_delta, .include_reconstruction = false};
  ModelGrad grad = ModelGrad::zeros_like(state);
  Rng rng(derive_seed(seed, 14));

  int epoch = 0;
  StopReason reason = StopReason::epoch_cap;
  if (best <= options.mae_threshold) {
    reason = StopReason::mae_threshold;
  } else {
    while (true) {
      set_trainable(state, Component::f, epoch >= f_epoch);
      run_epoch(state, set, options.batch_size, loss, rng, adam, hyper, lr_at(epoch, options.schedule), grad);
      ++epoch;

      const double mae = prepared_mae(state, set);
      if (!std::isfinite(mae)) throw Error(ErrorKind::training, "fine-tuning diverged");
      report.mae_history.push_back(mae);
      if (mae < best) {
        if (mae < best - options.improvement_tolerance) last_improvement = epoch;
        best = mae;
        best_epoch = epoch;
        best_state = state;
      }
      if (mae <= options.mae_threshold) {
        reason = StopReason::mae_threshold;
        break;
      }
      if (epoch - last_improvement >= options.patience) {
        reason = StopReason::patience;
        break;
      }
      if (epoch >= options.max_epochs) {
        reason = StopReason::epoch_cap;
        break;
      }
    }
  }

  report.epochs_run = epoch;
  report.best_epoch = best_epoch;
  report.best_mae_seconds = best;
  report.stopping_reason = reason;
  report.wall_time_s = seconds_since(start);
  best_state.trainable = {true, true, true, true};
  return {std::move(best_state), std::move(report)};
}

}  // namespace bellamy

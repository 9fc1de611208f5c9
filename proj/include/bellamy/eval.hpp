#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bellamy/dataio.hpp"
#include "bellamy/model.hpp"
#include "bellamy/training.hpp"

namespace bellamy {

/// Training indices with pairwise-distinct scale-outs plus up to one
/// interpolation and one extrapolation test index (into the context's records).
struct EvalSplit {
  std::vector<std::size_t> train;
  std::optional<std::size_t> interp_test;
  std::optional<std::size_t> extrap_test;

  std::size_t n_train() const noexcept { return train.size(); }
};

/// Random sub-sampling over one context's records. Interpolation tests lie
/// strictly inside the training scale-out range, extrapolation tests strictly
/// outside; neither reuses a training scale-out. Throws
/// ErrorKind::insufficient_data when no valid split exists.
std::vector<EvalSplit> generate_splits(std::span<const RunRecord> context_records,
                                       std::size_t n_train, std::size_t max_splits,
                                       std::uint64_t seed);

// Independent check of the split invariants; returns an empty string when valid.
std::string split_violation(std::span<const RunRecord> context_records, const EvalSplit& split);

/// A fitted model: predicts the runtime of a record.
struct FitOutcome {
  std::function<double(const RunRecord&)> predict;
  int epochs = -1;
  std::string stop_reason;
  // Fit succeeded but is unreliable by construction (e.g. NNLS on one point).
  bool degenerate = false;
};

struct Method {
  std::string name;
  std::string variant;
  // May throw ErrorKind::insufficient_data; such cells are recorded as excluded.
  std::function<FitOutcome(std::span<const RunRecord> train, std::uint64_t seed)> fit;
};

Method nnls_method();
Method bell_method();
// `base` carries the schema for `local` and the pre-trained weights otherwise.
Method bellamy_method(std::string variant, std::shared_ptr<const ModelState> base,
                      Strategy strategy, Reuse reuse = Reuse::none,
                      FineTuneOptions options = {});

enum class Task { interpolation, extrapolation };
const char* to_string(Task t) noexcept;

struct MetricRow {
  std::string method;
  std::string variant;
  std::string context;
  std::size_t n_train = 0;
  std::size_t split = 0;
  Task task = Task::interpolation;
  std::string status;  // ok | degenerate | excluded
  double actual = 0.0;
  double predicted = 0.0;
  double relative_error = 0.0;
  double absolute_error = 0.0;
  int epochs = -1;
  std::string stop_reason;
  double wall_time_s = 0.0;
};

struct MetricSummary {
  std::string method;
  std::string variant;
  std::size_t n_train = 0;
  Task task = Task::interpolation;
  double mre = 0.0;
  double mae = 0.0;
  std::size_t splits = 0;
  std::size_t excluded = 0;
  bool unreliable = false;
};

struct MetricsTable {
  std::vector<MetricRow> rows;

  std::vector<MetricSummary> summarize() const;
  std::optional<MetricSummary> find(std::string_view method, std::string_view variant,
                                    std::size_t n_train, Task task) const;
  // Fine-tuning epochs of every fitted run of one method/variant.
  std::vector<int> epochs(std::string_view method, std::string_view variant) const;

  std::string metrics_csv() const;
  std::string summary_csv() const;
};

struct ContextJob {
  ContextKey context;
  std::string algorithm;
  std::vector<Method> methods;
};

struct ComparisonOptions {
  std::vector<std::size_t> n_train{1, 2, 3, 4, 5};
  std::size_t max_splits = 200;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

/// For every context, n_train and split: fit each method on the training
/// points and score both test points. Rows are ordered by (context, n_train,
/// split, method) regardless of worker count.
MetricsTable run_comparison(std::span<const RunRecord> records, std::span<const ContextJob> jobs,
                            const ComparisonOptions& options);

/// Picks `count` contexts of one algorithm, covering every node type first.
std::vector<ContextKey> choose_contexts(std::span<const RunRecord> records,
                                        std::string_view algorithm, std::size_t count,
                                        std::uint64_t seed);

/// Right-continuous empirical CDF: (value, fraction of samples <= value).
std::vector<std::pair<int, double>> ecdf(std::span<const int> values);
std::string ecdf_csv(const std::vector<std::pair<std::string, std::vector<int>>>& series);

}  // namespace bellamy

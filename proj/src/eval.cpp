#include "bellamy/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "bellamy/baselines.hpp"
#include "bellamy/csv.hpp"
#include "bellamy/error.hpp"

namespace bellamy {

namespace {

std::vector<ScalePoint> to_points(std::span<const RunRecord> records) {
  std::vector<ScalePoint> pts;
  pts.reserve(records.size());
  for (const auto& r : records) pts.push_back({static_cast<double>(r.scale_out), r.runtime_seconds});
  return pts;
}

std::string split_key(const EvalSplit& s) {
  std::vector<std::size_t> train = s.train;
  std::sort(train.begin(), train.end());
  std::ostringstream os;
  for (auto i : train) os << i << ',';
  os << "|i:" << (s.interp_test ? std::to_string(*s.interp_test) : "-");
  os << "|e:" << (s.extrap_test ? std::to_string(*s.extrap_test) : "-");
  return os.str();
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

}  // namespace

std::vector<EvalSplit> generate_splits(std::span<const RunRecord> records, std::size_t n_train,
                                       std::size_t max_splits, std::uint64_t seed) {
  std::map<long long, std::vector<std::size_t>> by_scale;
  for (std::size_t i = 0; i < records.size(); ++i) by_scale[records[i].scale_out].push_back(i);
  std::vector<long long> grid;
  for (const auto& [x, _] : by_scale) grid.push_back(x);

  if (records.empty()) throw Error(ErrorKind::insufficient_data, "generate_splits: no records");
  if (n_train >= grid.size()) {
    throw Error(ErrorKind::insufficient_data,
                "generate_splits: " + std::to_string(n_train) + " training points leave no test " +
                    "scale-out on a grid of " + std::to_string(grid.size()));
  }

  Rng rng(seed);
  std::vector<EvalSplit> splits;
  std::set<std::string> seen;
  const std::size_t attempts = 50 * std::max<std::size_t>(max_splits, 1);
  for (std::size_t attempt = 0; attempt < attempts && splits.size() < max_splits; ++attempt) {
    EvalSplit s;
    if (n_train == 0) {
      s.extrap_test = std::uniform_int_distribution<std::size_t>(0, records.size() - 1)(rng);
    } else {
      std::vector<long long> chosen = grid;
      std::shuffle(chosen.begin(), chosen.end(), rng);
      chosen.resize(n_train);
      std::sort(chosen.begin(), chosen.end());
      for (long long x : chosen) s.train.push_back(pick(by_scale[x], rng));
      const long long lo = chosen.front();
      const long long hi = chosen.back();
      std::vector<std::size_t> interp, extrap;
      for (const auto& [x, idx] : by_scale) {
        if (std::binary_search(chosen.begin(), chosen.end(), x)) continue;
        auto& bucket = (x > lo && x < hi) ? interp : extrap;
        bucket.insert(bucket.end(), idx.begin(), idx.end());
      }
      if (!interp.empty()) s.interp_test = pick(interp, rng);
      if (!extrap.empty()) s.extrap_test = pick(extrap, rng);
      if (!s.interp_test && !s.extrap_test) continue;
    }
    if (seen.insert(split_key(s)).second) splits.push_back(std::move(s));
  }
  if (splits.empty()) {
    throw Error(ErrorKind::insufficient_data, "generate_splits: no valid split for n_train=" +
                                                  std::to_string(n_train));
  }
  return splits;
}

std::string split_violation(std::span<const RunRecord> records, const EvalSplit& split) {
  std::set<long long> xs;
  for (auto i : split.train) {
    if (i >= records.size()) return "train index out of range";
    if (!xs.insert(records[i].scale_out).second) return "training scale-outs are not pairwise different";
  }
  if (!split.interp_test && !split.extrap_test) return "split has no test point";
  if (split.interp_test) {
    if (xs.empty()) return "interpolation test without training points";
    if (*split.interp_test >= records.size()) return "test index out of range";
    const long long x = records[*split.interp_test].scale_out;
    if (!(x > *xs.begin() && x < *xs.rbegin())) return "interpolation test outside training range";
    if (xs.contains(x)) return "interpolation test reuses a training scale-out";
  }
  if (split.extrap_test) {
    if (*split.extrap_test >= records.size()) return "test index out of range";
    const long long x = records[*split.extrap_test].scale_out;
    if (!xs.empty() && x >= *xs.begin() && x <= *xs.rbegin()) return "extrapolation test inside training range";
  }
  return {};
}

Method nnls_method() {
  return {"nnls", "-", [](std::span<const RunRecord> train, std::uint64_t) {
            if (train.empty()) throw Error(ErrorKind::insufficient_data, "NNLS needs at least one point");
            const ErnestModel m = ernest_fit(to_points(train));
            FitOutcome out;
            out.predict = [m](const RunRecord& r) { return ernest_predict(m, static_cast<double>(r.scale_out)); };
            out.degenerate = train.size() < 2;
            return out;
          }};
}

Method bell_method() {
  return {"bell", "-", [](std::span<const RunRecord> train, std::uint64_t) {
            const BellModel m = bell_fit(to_points(train));
            FitOutcome out;
            out.predict = [m](const RunRecord& r) { return bell_predict(m, static_cast<double>(r.scale_out)); };
            return out;
          }};
}

Method bellamy_method(std::string variant, std::shared_ptr<const ModelState> base, Strategy strategy,
                      Reuse reuse, FineTuneOptions options) {
  if (!base) throw Error(ErrorKind::config, "bellamy_method needs a base model");
  return {"bellamy", std::move(variant),
          [base, strategy, reuse, options](std::span<const RunRecord> train, std::uint64_t seed) {
            auto result = finetune(*base, train, strategy, reuse, seed, options);
            auto state = std::make_shared<const ModelState>(std::move(result.state));
            FitOutcome out;
            out.predict = [state](const RunRecord& r) {
              return predict_runtime(*state, r.scale_out, r.properties);
            };
            out.epochs = result.report.epochs_run;
            out.stop_reason = to_string(result.report.stopping_reason);
            return out;
          }};
}

const char* to_string(Task t) noexcept {
  return t == Task::interpolation ? "interp" : "extrap";
}

std::vector<MetricSummary> MetricsTable::summarize() const {
  std::map<std::tuple<std::string, std::string, std::size_t, int>, MetricSummary> acc;
  for (const auto& r : rows) {
    auto& s = acc[{r.method, r.variant, r.n_train, static_cast<int>(r.task)}];
    s.method = r.method;
    s.variant = r.variant;
    s.n_train = r.n_train;
    s.task = r.task;
    if (r.status == "excluded") {
      ++s.excluded;
      continue;
    }
    s.mre += r.relative_error;
    s.mae += r.absolute_error;
    ++s.splits;
    s.unreliable = s.unreliable || r.status == "degenerate";
  }
  std::vector<MetricSummary> out;
  for (auto& [_, s] : acc) {
    if (s.splits > 0) {
      s.mre /= static_cast<double>(s.splits);
      s.mae /= static_cast<double>(s.splits);
    } else {
      s.mre = s.mae = std::nan("");
    }
    out.push_back(s);
  }
  return out;
}

std::optional<MetricSummary> MetricsTable::find(std::string_view method, std::string_view variant,
                                                std::size_t n_train, Task task) const {
  for (const auto& s : summarize())
    if (s.method == method && s.variant == variant && s.n_train == n_train && s.task == task) return s;
  return std::nullopt;
}

std::vector<int> MetricsTable::epochs(std::string_view method, std::string_view variant) const {
  // One fit per (context, n_train, split); both tasks share it.
  std::set<std::tuple<std::string, std::size_t, std::size_t>> seen;
  std::vector<int> out;
  for (const auto& r : rows) {
    if (r.method != method || r.variant != variant || r.status == "excluded" || r.epochs < 0) continue;
    if (seen.insert({r.context, r.n_train, r.split}).second) out.push_back(r.epochs);
  }
  return out;
}

std::string MetricsTable::metrics_csv() const {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "method,variant,context,n_train,split,task,status,actual,predicted,mre,mae,epochs,stop_reason,wall_time_s\n";
  for (const auto& r : rows) {
    os << csv::escape(r.method) << ',' << csv::escape(r.variant) << ',' << csv::escape(r.context) << ','
       << r.n_train << ',' << r.split << ',' << to_string(r.task) << ',' << r.status << ',' << r.actual
       << ',' << r.predicted << ',' << r.relative_error << ',' << r.absolute_error << ',' << r.epochs
       << ',' << r.stop_reason << ',' << r.wall_time_s << '\n';
  }
  return os.str();
}

std::string MetricsTable::summary_csv() const {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "method,variant,n_train,task,mre,mae,splits,excluded,unreliable\n";
  for (const auto& s : summarize()) {
    os << s.method << ',' << s.variant << ',' << s.n_train << ',' << to_string(s.task) << ',' << s.mre
       << ',' << s.mae << ',' << s.splits << ',' << s.excluded << ',' << (s.unreliable ? 1 : 0) << '\n';
  }
  return os.str();
}

MetricsTable run_comparison(std::span<const RunRecord> records, std::span<const ContextJob> jobs,
                            const ComparisonOptions& options) {
  struct WorkItem {
    std::size_t job;
    std::size_t n_train;
    std::size_t split_id;
    EvalSplit split;
  };
  std::vector<std::vector<RunRecord>> context_records(jobs.size());
  std::vector<WorkItem> work;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    for (const auto& r : records)
      if (r.context == jobs[j].context && r.algorithm == jobs[j].algorithm) context_records[j].push_back(r);
    if (context_records[j].empty()) {
      throw Error(ErrorKind::data, "no records for context " + jobs[j].context.to_string());
    }
    for (std::size_t n : options.n_train) {
      std::vector<EvalSplit> splits;
      try {
        splits = generate_splits(context_records[j], n, options.max_splits,
                                 derive_seed(options.seed, 1000 * j + n));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::insufficient_data) throw;
        continue;
      }
      for (std::size_t s = 0; s < splits.size(); ++s) work.push_back({j, n, s, std::move(splits[s])});
    }
  }

  std::vector<std::vector<MetricRow>> results(work.size());
  auto run_item = [&](std::size_t w) {
    const WorkItem& item = work[w];
    const auto& ctx = context_records[item.job];
    std::vector<RunRecord> train;
    for (auto i : item.split.train) train.push_back(ctx[i]);
    const std::uint64_t fit_seed = derive_seed(options.seed, 0x5eed0000ull + w);
    for (const auto& method : jobs[item.job].methods) {
      MetricRow base;
      base.method = method.name;
      base.variant = method.variant;
      base.context = jobs[item.job].context.to_string();
      base.n_train = item.n_train;
      base.split = item.split_id;
      const auto start = std::chrono::steady_clock::now();
      std::optional<FitOutcome> fit;
      try {
        fit = method.fit(train, fit_seed);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::insufficient_data) throw;
      }
      base.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      for (Task task : {Task::interpolation, Task::extrapolation}) {
        const auto& test = task == Task::interpolation ? item.split.interp_test : item.split.extrap_test;
        if (!test) continue;
        MetricRow row = base;
        row.task = task;
        row.actual = ctx[*test].runtime_seconds;
        if (!fit) {
          row.status = "excluded";
        } else {
          row.status = fit->degenerate ? "degenerate" : "ok";
          row.predicted = fit->predict(ctx[*test]);
          row.absolute_error = std::abs(row.predicted - row.actual);
          row.relative_error = row.absolute_error / row.actual;
          row.epochs = fit->epochs;
          row.stop_reason = fit->stop_reason;
        }
        results[w].push_back(std::move(row));
      }
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(options.workers, work.size()));
  if (threads <= 1) {
    for (std::size_t w = 0; w < work.size(); ++w) run_item(w);
  } else {
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr failure;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t w = next++; w < work.size(); w = next++) {
          try {
            run_item(w);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!failure) failure = std::current_exception();
            return;
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  MetricsTable table;
  for (auto& rows : results)
    for (auto& r : rows) table.rows.push_back(std::move(r));
  return table;
}

std::vector<ContextKey> choose_contexts(std::span<const RunRecord> records, std::string_view algorithm,
                                        std::size_t count, std::uint64_t seed) {
  std::map<std::string, std::vector<ContextKey>> by_node;
  std::set<ContextKey> seen;
  for (const auto& r : records) {
    if (r.algorithm != algorithm || !seen.insert(r.context).second) continue;
    by_node[r.context.node_type].push_back(r.context);
  }
  Rng rng(derive_seed(seed, 41));
  std::vector<std::string> nodes;
  for (auto& [node, ctxs] : by_node) {
    nodes.push_back(node);
    std::shuffle(ctxs.begin(), ctxs.end(), rng);
  }
  std::shuffle(nodes.begin(), nodes.end(), rng);

  std::vector<ContextKey> chosen;
  std::vector<ContextKey> rest;
  for (const auto& node : nodes) {
    auto& ctxs = by_node[node];
    if (chosen.size() < count) {
      chosen.push_back(ctxs.front());
      rest.insert(rest.end(), ctxs.begin() + 1, ctxs.end());
    } else {
      rest.insert(rest.end(), ctxs.begin(), ctxs.end());
    }
  }
  std::shuffle(rest.begin(), rest.end(), rng);
  for (const auto& c : rest) {
    if (chosen.size() >= count) break;
    chosen.push_back(c);
  }
  return chosen;
}

std::vector<std::pair<int, double>> ecdf(std::span<const int> values) {
  if (values.empty()) throw Error(ErrorKind::insufficient_data, "ecdf: no values");
  std::vector<int> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::pair<int, double>> out;
  const double n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
    out.emplace_back(sorted[i], static_cast<double>(i + 1) / n);
  }
  return out;
}

std::string ecdf_csv(const std::vector<std::pair<std::string, std::vector<int>>>& series) {
  std::ostringstream os;
  os << std::setprecision(10) << "series,epochs,fraction\n";
  for (const auto& [name, values] : series) {
    if (values.empty()) continue;
    for (const auto& [v, f] : ecdf(values)) os << csv::escape(name) << ',' << v << ',' << f << '\n';
  }
  return os.str();
}

}  // namespace bellamy

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "bellamy/error.hpp"
#include "bellamy/eval.hpp"
#include "bellamy/synthetic.hpp"

using namespace bellamy;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::io;
}

std::vector<RunRecord> grid_context(std::vector<long long> xs, int reps = 1) {
  const auto ctx = synthetic_contexts(1, 1)[0];
  SyntheticOptions o;
  o.scale_outs = std::move(xs);
  o.repetitions = reps;
  const std::vector<SyntheticContext> one{ctx};
  return generate_runs(one, o, 1);
}

Method oracle_method(const std::vector<RunRecord>& all) {
  return {"oracle", "-", [all](std::span<const RunRecord>, std::uint64_t) {
            FitOutcome out;
            out.predict = [](const RunRecord& r) { return r.runtime_seconds; };
            return out;
          }};
}

Method constant_method(double c) {
  return {"constant", "-", [c](std::span<const RunRecord>, std::uint64_t) {
            FitOutcome out;
            out.predict = [c](const RunRecord&) { return c; };
            return out;
          }};
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("splits respect the range rules") {
  const auto runs = grid_context({2, 4, 6, 8, 10, 12}, 5);
  for (std::size_t n = 1; n <= 5; ++n) {
    const auto splits = generate_splits(runs, n, 200, 7);
    CHECK(!splits.empty());
    CHECK(splits.size() <= 200);
    std::set<std::string> keys;
    for (const auto& s : splits) {
      CHECK(s.n_train() == n);
      CHECK(split_violation(runs, s).empty());
      if (n == 1) CHECK(!s.interp_test.has_value());
    }
  }
}

TEST_CASE("train scale-outs 2 and 12 leave interpolation only") {
  const auto runs = grid_context({2, 4, 6, 8, 10, 12});
  const auto splits = generate_splits(runs, 2, 500, 3);
  bool seen = false;
  for (const auto& s : splits) {
    std::set<long long> xs{runs[s.train[0]].scale_out, runs[s.train[1]].scale_out};
    if (xs != std::set<long long>{2, 12}) continue;
    seen = true;
    CHECK(!s.extrap_test.has_value());
    REQUIRE(s.interp_test.has_value());
    const long long x = runs[*s.interp_test].scale_out;
    CHECK((x == 4 || x == 6 || x == 8 || x == 10));
  }
  CHECK(seen);
}

TEST_CASE("too many training points is an error") {
  const auto runs = grid_context({2, 4, 6, 8, 10, 12}, 2);
  CHECK(kind_of([&] { generate_splits(runs, 6, 10, 1); }) == ErrorKind::insufficient_data);
  CHECK(kind_of([&] { generate_splits({}, 1, 10, 1); }) == ErrorKind::insufficient_data);
}

TEST_CASE("zero training points give extrapolation-only splits") {
  const auto runs = grid_context({2, 4, 6});
  const auto splits = generate_splits(runs, 0, 50, 1);
  CHECK(splits.size() == 3);
  for (const auto& s : splits) {
    CHECK(s.train.empty());
    CHECK(s.extrap_test.has_value());
    CHECK(!s.interp_test.has_value());
  }
}

TEST_CASE("splits are unique and deterministic") {
  const auto runs = grid_context({2, 4, 6, 8, 10, 12}, 5);
  const auto a = generate_splits(runs, 3, 100, 9);
  const auto b = generate_splits(runs, 3, 100, 9);
  REQUIRE(a.size() == b.size());
  std::set<std::tuple<std::vector<std::size_t>, std::optional<std::size_t>, std::optional<std::size_t>>> keys;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].train == b[i].train);
    CHECK(a[i].interp_test == b[i].interp_test);
    auto t = a[i].train;
    std::sort(t.begin(), t.end());
    CHECK(keys.insert({t, a[i].interp_test, a[i].extrap_test}).second);
  }
}

TEST_CASE("the validator catches broken splits") {
  const auto runs = grid_context({2, 4, 6, 8});
  EvalSplit s;
  s.train = {0, 2};  // scale-outs 2 and 6
  s.interp_test = 3;  // 8: outside
  CHECK(!split_violation(runs, s).empty());
  s.interp_test = 1;
  s.extrap_test = 1;  // 4: inside
  CHECK(!split_violation(runs, s).empty());
  s.extrap_test = 3;
  CHECK(split_violation(runs, s).empty());
  s.train = {0, 0};
  CHECK(!split_violation(runs, s).empty());
}

TEST_CASE("oracle method has zero error and a constant has the analytic error") {
  const auto runs = grid_context({2, 4, 6, 8, 10, 12}, 3);
  const ContextKey key = runs.front().context;
  const std::vector<ContextJob> jobs{{key, runs.front().algorithm, {oracle_method(runs), constant_method(250.0)}}};
  ComparisonOptions opts;
  opts.n_train = {1, 2, 3};
  opts.max_splits = 40;
  const auto table = run_comparison(runs, jobs, opts);
  for (const auto& s : table.summarize()) {
    if (s.method == "oracle") CHECK(s.mre == 0.0);
  }
  for (std::size_t n : {2, 3}) {
    for (Task task : {Task::interpolation, Task::extrapolation}) {
      double expect = 0.0;
      std::size_t count = 0;
      for (const auto& r : table.rows) {
        if (r.method != "constant" || r.n_train != n || r.task != task) continue;
        expect += std::abs(250.0 - r.actual) / r.actual;
        ++count;
      }
      const auto s = table.find("constant", "-", n, task);
      REQUIRE(s.has_value());
      CHECK(s->splits == count);
      CHECK(s->mre == doctest::Approx(expect / count));
    }
  }
}

TEST_CASE("baseline applicability is recorded, never dropped") {
  const auto runs = grid_context({2, 4, 6, 8, 10, 12}, 3);
  const std::vector<ContextJob> jobs{{runs.front().context, runs.front().algorithm, {nnls_method(), bell_method()}}};
  ComparisonOptions opts;
  opts.n_train = {0, 1, 2, 3};
  opts.max_splits = 20;
  const auto table = run_comparison(runs, jobs, opts);
  const auto nnls1 = table.find("nnls", "-", 1, Task::extrapolation);
  REQUIRE(nnls1.has_value());
  CHECK(nnls1->unreliable);
  CHECK(table.find("nnls", "-", 0, Task::extrapolation)->excluded > 0);
  CHECK(table.find("nnls", "-", 0, Task::extrapolation)->splits == 0);
  CHECK(table.find("bell", "-", 2, Task::interpolation)->splits == 0);
  CHECK(table.find("bell", "-", 2, Task::interpolation)->excluded > 0);
  CHECK(table.find("bell", "-", 3, Task::interpolation)->splits > 0);
  CHECK(!table.find("nnls", "-", 2, Task::interpolation)->unreliable);
  for (const auto& r : table.rows) {
    CHECK(r.relative_error >= 0.0);
    CHECK(r.absolute_error >= 0.0);
  }
  CHECK(table.metrics_csv().find("degenerate") != std::string::npos);
  CHECK(table.metrics_csv().find("excluded") != std::string::npos);
}

TEST_CASE("comparison is reproducible and independent of worker count") {
  const auto ctxs = synthetic_contexts(2, 4);
  const auto runs = generate_runs(ctxs, {}, 4);
  std::vector<ContextJob> jobs;
  for (const auto& c : ctxs) jobs.push_back({c.key, "synthetic-sgd", {nnls_method(), bell_method()}});
  ComparisonOptions opts;
  opts.n_train = {2, 3, 4};
  opts.max_splits = 15;
  const auto a = run_comparison(runs, jobs, opts);
  opts.workers = 3;
  const auto b = run_comparison(runs, jobs, opts);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].context == b.rows[i].context);
    CHECK(a.rows[i].predicted == b.rows[i].predicted);
  }
  CHECK(a.summary_csv() == b.summary_csv());
}

TEST_CASE("more training points help the baselines on Ernest-shaped data") {
  const auto ctxs = synthetic_contexts(3, 8);
  const auto runs = generate_runs(ctxs, {.scale_outs = {2, 4, 6, 8, 10, 12, 14, 16}}, 8);
  std::vector<ContextJob> jobs;
  for (const auto& c : ctxs) jobs.push_back({c.key, "synthetic-sgd", {nnls_method(), bell_method()}});
  ComparisonOptions opts;
  opts.n_train = {3, 5};
  opts.max_splits = 60;
  const auto t = run_comparison(runs, jobs, opts);
  for (const char* m : {"nnls", "bell"}) {
    CHECK(t.find(m, "-", 5, Task::interpolation)->mre <= t.find(m, "-", 3, Task::interpolation)->mre);
  }
}

TEST_CASE("bellamy methods report epochs") {
  const auto ctxs = synthetic_contexts(1, 2);
  const auto runs = generate_runs(ctxs, {}, 2);
  const std::vector<long long> xs{2, 12};
  auto base = std::make_shared<const ModelState>(
      ModelState::create(synthetic_schema(), Normalizer::fit_scaleouts(xs), 3));
  FineTuneOptions quick;
  quick.max_epochs = 30;
  const std::vector<ContextJob> jobs{{ctxs[0].key, "synthetic-sgd",
                                      {bellamy_method("local", base, Strategy::local, Reuse::none, quick),
                                       bellamy_method("full", base, Strategy::pretrained,
                                                      Reuse::partial_unfreeze, quick)}}};
  ComparisonOptions opts;
  opts.n_train = {0, 2};
  opts.max_splits = 4;
  const auto t = run_comparison(runs, jobs, opts);
  const auto local_epochs = t.epochs("bellamy", "local");
  CHECK(local_epochs.size() == 4);
  for (int e : local_epochs) CHECK((e >= 0 && e <= 30));
  const auto zero = t.find("bellamy", "full", 0, Task::extrapolation);
  REQUIRE(zero.has_value());
  CHECK(zero->splits > 0);
  CHECK(std::isfinite(zero->mre));
  CHECK(t.find("bellamy", "local", 0, Task::extrapolation)->splits == 0);
}

TEST_CASE("ecdf") {
  const std::vector<int> one{5};
  CHECK(ecdf(one) == std::vector<std::pair<int, double>>{{5, 1.0}});
  const std::vector<int> v{1, 1, 3};
  const auto e = ecdf(v);
  REQUIRE(e.size() == 2);
  CHECK(e[0].first == 1);
  CHECK(e[0].second == doctest::Approx(2.0 / 3.0));
  CHECK(e[1] == std::pair<int, double>{3, 1.0});
  const std::vector<int> shuffled{3, 1, 1};
  CHECK(ecdf(shuffled) == e);
  CHECK(kind_of([] { ecdf(std::vector<int>{}); }) == ErrorKind::insufficient_data);
  CHECK(ecdf_csv({{"local", {1, 2}}}) == "series,epochs,fraction\nlocal,1,0.5\nlocal,2,1\n");
}

TEST_CASE("context choice covers every node type first") {
  const auto ctxs = synthetic_contexts(12, 6);
  const auto runs = generate_runs(ctxs, {.repetitions = 1}, 6);
  const auto chosen = choose_contexts(runs, "synthetic-sgd", 7, 2);
  CHECK(chosen.size() == 7);
  std::set<std::string> nodes;
  for (const auto& c : chosen) nodes.insert(c.node_type);
  CHECK(nodes.size() == 3);
  const auto three = choose_contexts(runs, "synthetic-sgd", 3, 5);
  std::set<std::string> n3;
  for (const auto& c : three) n3.insert(c.node_type);
  CHECK(n3.size() == 3);
  CHECK(std::set<ContextKey>(chosen.begin(), chosen.end()).size() == 7);
}

}

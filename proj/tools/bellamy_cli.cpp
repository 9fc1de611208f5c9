// bellamy: pretrain, finetune, predict, recommend and evaluate runtime models.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bellamy/csv.hpp"
#include "bellamy/dataio.hpp"
#include "bellamy/error.hpp"
#include "bellamy/eval.hpp"
#include "bellamy/model.hpp"
#include "bellamy/synthetic.hpp"
#include "bellamy/training.hpp"

namespace fs = std::filesystem;
using namespace bellamy;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kTraining = 4, kSchema = 5 };

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
      return kConfig;
    case ErrorKind::training:
    case ErrorKind::non_finite:
      return kTraining;
    case ErrorKind::schema:
    case ErrorKind::version:
      return kSchema;
    default:
      return kData;
  }
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

long long parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::config, "invalid " + what + ": '" + s + "'");
}

// "name=value" pairs from the command line and an optional file (one per line).
PropertyMap read_properties(const ModelState& state, const std::vector<std::string>& pairs,
                            const std::string& file) {
  std::vector<std::string> lines = pairs;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorKind::config, "cannot open properties file " + file);
    for (std::string line; std::getline(in, line);) {
      line = trim(line);
      if (!line.empty() && line[0] != '#') lines.push_back(line);
    }
  }
  PropertyMap props;
  for (const auto& line : lines) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::config, "expected name=value, got '" + line + "'");
    const std::string name = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const PropertySpec* spec = state.schema.find(name);
    if (!spec) throw Error(ErrorKind::schema, "unknown property '" + name + "' for " + state.schema.describe());
    props[name] = PropertyValue::parse(spec->kind, value);
  }
  return props;
}

ContextKey parse_context(const std::string& text) {
  ContextKey key;
  std::set<std::string> seen;
  for (const auto& part : split(text, ';')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::config, "bad context field '" + part + "'");
    const std::string name = trim(std::string_view(part).substr(0, eq));
    const std::string value = trim(std::string_view(part).substr(eq + 1));
    if (name == "node_type") key.node_type = value;
    else if (name == "job_parameters") key.job_parameters = value;
    else if (name == "dataset_characteristics") key.dataset_characteristics = value;
    else if (name == "dataset_size") key.dataset_size = static_cast<std::uint64_t>(parse_int(value, "dataset_size"));
    else throw Error(ErrorKind::config, "unknown context field '" + name + "'");
    seen.insert(name);
  }
  if (seen.size() != 4) {
    throw Error(ErrorKind::config,
                "context needs node_type, job_parameters, dataset_size and dataset_characteristics");
  }
  return key;
}

std::vector<RunRecord> of_algorithm(const std::vector<RunRecord>& records, const std::string& algo) {
  std::vector<RunRecord> out;
  for (const auto& r : records)
    if (algo.empty() || r.algorithm == algo) out.push_back(r);
  return out;
}

std::string resolve_algorithm(const std::vector<RunRecord>& records, std::string algo) {
  if (!algo.empty()) return algo;
  std::set<std::string> names;
  for (const auto& r : records) names.insert(r.algorithm);
  if (names.size() != 1) throw Error(ErrorKind::config, "dataset has several algorithms; pass --algo");
  return *names.begin();
}

Normalizer normalizer_for(std::span<const RunRecord> records) {
  std::vector<long long> xs;
  for (const auto& r : records) xs.push_back(r.scale_out);
  if (xs.empty()) return {};
  return Normalizer::fit_scaleouts(xs);
}

struct PretrainArgs {
  std::string data, manifest, algo, variant = "full", target, out, log;
  std::uint64_t seed = 0;
  std::size_t search_samples = 12;
  int epochs = 2500;
  unsigned workers = 1;
};

int cmd_pretrain(const PretrainArgs& a) {
  const auto manifest = DatasetManifest::load(a.manifest);
  LoadReport report;
  const auto all = load_dataset(a.data, manifest, &report);
  const std::string algo = resolve_algorithm(all, a.algo);
  const Variant variant = parse_variant(a.variant);
  std::vector<RunRecord> corpus;
  if (!a.target.empty()) {
    corpus = filter_for_variant(all, parse_context(a.target), algo, variant);
  } else if (variant == Variant::full) {
    corpus = of_algorithm(all, algo);
  } else if (variant == Variant::filtered) {
    throw Error(ErrorKind::config, "--variant filtered needs --target-context");
  }
  std::cout << "loaded " << report.rows << " rows, " << report.contexts.size() << " contexts; corpus "
            << corpus.size() << " records\n";

  ModelState state;
  if (variant == Variant::local) {
    state = ModelState::create(manifest.schema(), normalizer_for(of_algorithm(all, algo)), a.seed);
    std::cout << "variant local: writing an untrained model\n";
  } else {
    if (corpus.empty()) throw Error(ErrorKind::insufficient_data, "no records left for pre-training");
    SearchSpace space;
    space.sample_count = a.search_samples;
    space.epochs = a.epochs;
    auto result = pretrain(corpus, manifest.schema(), space, a.seed, a.workers);
    const auto& chosen = result.log[result.chosen];
    std::cout << "chosen config " << chosen.config_id << ": lr=" << chosen.config.learning_rate
              << " dropout=" << chosen.config.dropout_rate << " weight_decay=" << chosen.config.weight_decay
              << " validation_mae=" << chosen.validation_mae << "\n";
    const std::string log = a.log.empty() ? a.out + ".search.csv" : a.log;
    csv::write_file_atomic(log, search_log_csv(result.log));
    state = std::move(result.state);
  }
  save(state, a.out);
  std::cout << "fingerprint " << fingerprint_hex(state.fingerprint()) << "\n";
  return kOk;
}

struct FinetuneArgs {
  std::string model, samples, manifest, reuse = "partial-unfreeze", strategy = "pretrained", out;
  std::uint64_t seed = 0;
  int max_epochs = 2500;
};

int cmd_finetune(const FinetuneArgs& a) {
  const ModelState base = load(a.model);
  const DatasetManifest manifest =
      a.manifest.empty() ? canonical_manifest(base.schema) : DatasetManifest::load(a.manifest);
  require_schema(base, manifest.schema());
  const auto samples = load_dataset(a.samples, manifest);
  FineTuneOptions options;
  options.max_epochs = a.max_epochs;
  auto result = finetune(base, samples, parse_strategy(a.strategy), parse_reuse(a.reuse), a.seed, options);
  save(result.state, a.out);
  const auto& r = result.report;
  std::cout << "epochs_run=" << r.epochs_run << " best_epoch=" << r.best_epoch
            << " best_mae_seconds=" << r.best_mae_seconds << " stopping_reason=" << to_string(r.stopping_reason)
            << " wall_time_s=" << r.wall_time_s << "\n";
  std::cout << "fingerprint " << fingerprint_hex(result.state.fingerprint()) << "\n";
  return kOk;
}

struct PredictArgs {
  std::string model, props_file;
  std::vector<std::string> props;
  long long scale_out = 0;
};

int cmd_predict(const PredictArgs& a) {
  const ModelState state = load(a.model);
  const auto props = read_properties(state, a.props, a.props_file);
  const auto p = forward(state, a.scale_out, props);
  std::cout << std::setprecision(10) << p.runtime_seconds << "\n";
  if (p.negative) std::cerr << "warning: negative runtime prediction\n";
  return kOk;
}

struct RecommendArgs {
  std::string model, range, props_file;
  std::vector<std::string> props;
  double target = 0.0;
};

int cmd_recommend(const RecommendArgs& a) {
  if (!(a.target > 0.0)) throw Error(ErrorKind::config, "--target must be positive");
  const auto parts = split(a.range, ':');
  if (parts.size() != 3) throw Error(ErrorKind::config, "--range expects lo:hi:step");
  const long long lo = parse_int(parts[0], "range"), hi = parse_int(parts[1], "range"),
                  step = parse_int(parts[2], "range");
  if (lo < 1 || step < 1 || lo > hi) throw Error(ErrorKind::config, "empty candidate range " + a.range);

  const ModelState state = load(a.model);
  const auto props = read_properties(state, a.props, a.props_file);
  std::optional<long long> best;
  std::cout << "scale_out,predicted_runtime_s\n" << std::setprecision(10);
  for (long long x = lo; x <= hi; x += step) {
    const double t = predict_runtime(state, x, props);
    std::cout << x << ',' << t << '\n';
    if (!best && t <= a.target) best = x;
  }
  if (best) std::cout << "recommended_scale_out=" << *best << "\n";
  else std::cout << "not_achievable=1\n";
  return kOk;
}

struct EvaluateArgs {
  std::string data, manifest, algo, methods = "nnls,bell,local,filtered,full", n_train = "1,2,3,4,5",
                                    out_dir, reuse = "partial-unfreeze";
  std::uint64_t seed = 0;
  std::size_t max_splits = 200, contexts = 7, search_samples = 12;
  int epochs = 2500;
  unsigned workers = 1;
};

std::vector<std::size_t> parse_n_train(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& part : split(s, ',')) {
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      out.push_back(static_cast<std::size_t>(parse_int(trim(part), "--n-train")));
    } else {
      const long long lo = parse_int(trim(part.substr(0, dash)), "--n-train");
      const long long hi = parse_int(trim(part.substr(dash + 1)), "--n-train");
      if (lo < 0 || hi < lo) throw Error(ErrorKind::config, "bad --n-train range " + part);
      for (long long n = lo; n <= hi; ++n) out.push_back(static_cast<std::size_t>(n));
    }
  }
  return out;
}

int cmd_evaluate(const EvaluateArgs& a) {
  const auto manifest = DatasetManifest::load(a.manifest);
  const auto all = load_dataset(a.data, manifest);
  const std::string algo = resolve_algorithm(all, a.algo);
  const auto records = of_algorithm(all, algo);
  const auto methods = split(a.methods, ',');
  const Reuse reuse = parse_reuse(a.reuse);
  for (const auto& m : methods) {
    if (m != "nnls" && m != "bell" && m != "local" && m != "filtered" && m != "full")
      throw Error(ErrorKind::config, "unknown method '" + m + "'");
  }
  fs::create_directories(a.out_dir);

  ComparisonOptions options;
  options.n_train = parse_n_train(a.n_train);
  options.max_splits = a.max_splits;
  options.seed = a.seed;
  options.workers = a.workers;

  SearchSpace space;
  space.sample_count = a.search_samples;
  space.epochs = a.epochs;

  std::vector<ContextJob> jobs;
  for (const auto& ctx : choose_contexts(records, algo, a.contexts, a.seed)) {
    ContextJob job{ctx, algo, {}};
    for (const auto& m : methods) {
      if (m == "nnls") {
        job.methods.push_back(nnls_method());
      } else if (m == "bell") {
        job.methods.push_back(bell_method());
      } else if (m == "local") {
        auto base = std::make_shared<const ModelState>(
            ModelState::create(manifest.schema(), normalizer_for(records), a.seed));
        job.methods.push_back(bellamy_method("local", base, Strategy::local));
      } else {
        const auto corpus = filter_for_variant(records, ctx, algo, parse_variant(m));
        if (corpus.empty()) {
          std::cerr << "skipping " << m << " for " << ctx.to_string() << ": empty pre-training corpus\n";
          continue;
        }
        std::cout << "pre-training " << m << " for " << ctx.to_string() << " on " << corpus.size()
                  << " records\n";
        auto result = pretrain(corpus, manifest.schema(), space, a.seed, a.workers);
        const std::string tag = m + "_" + fingerprint_hex(result.state.fingerprint());
        csv::write_file_atomic(fs::path(a.out_dir) / ("search_" + tag + ".csv"), search_log_csv(result.log));
        job.methods.push_back(bellamy_method(
            m, std::make_shared<const ModelState>(std::move(result.state)), Strategy::pretrained, reuse));
      }
    }
    jobs.push_back(std::move(job));
  }

  const MetricsTable table = run_comparison(records, jobs, options);
  csv::write_file_atomic(fs::path(a.out_dir) / "metrics.csv", table.metrics_csv());
  csv::write_file_atomic(fs::path(a.out_dir) / "summary.csv", table.summary_csv());
  std::vector<std::pair<std::string, std::vector<int>>> series;
  for (const auto& m : methods)
    if (m != "nnls" && m != "bell") series.emplace_back(m, table.epochs("bellamy", m));
  csv::write_file_atomic(fs::path(a.out_dir) / "ecdf.csv", ecdf_csv(series));
  std::cout << table.summary_csv();
  return kOk;
}

struct SynthArgs {
  std::string out, manifest_out;
  std::size_t contexts = 6;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a) {
  const auto contexts = synthetic_contexts(a.contexts, a.seed);
  const auto runs = generate_runs(contexts, {}, a.seed);
  const auto schema = synthetic_schema();
  write_records(a.out, runs, schema);
  if (!a.manifest_out.empty()) csv::write_file_atomic(a.manifest_out, canonical_manifest(schema).to_text());
  std::cout << summarize(runs).summary();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Runtime prediction for distributed dataflow jobs"};
  app.require_subcommand(1);

  PretrainArgs pa;
  auto* pre = app.add_subcommand("pretrain", "Pre-train a model on historical runs");
  pre->add_option("--data", pa.data, "Runs CSV")->required();
  pre->add_option("--manifest", pa.manifest, "Dataset manifest")->required();
  pre->add_option("--algo", pa.algo, "Algorithm to train on");
  pre->add_option("--variant", pa.variant, "local | filtered | full")->capture_default_str();
  pre->add_option("--target-context", pa.target, "node_type=..;job_parameters=..;dataset_size=..;dataset_characteristics=..");
  pre->add_option("--seed", pa.seed)->capture_default_str();
  pre->add_option("--out", pa.out, "Model file")->required();
  pre->add_option("--log", pa.log, "Search log CSV (default: <out>.search.csv)");
  pre->add_option("--search-samples", pa.search_samples)->capture_default_str();
  pre->add_option("--epochs", pa.epochs)->capture_default_str();
  pre->add_option("--workers", pa.workers)->capture_default_str();

  FinetuneArgs fa;
  auto* fin = app.add_subcommand("finetune", "Fine-tune a model on runs of one context");
  fin->add_option("--model", fa.model)->required();
  fin->add_option("--samples", fa.samples, "Runs CSV")->required();
  fin->add_option("--manifest", fa.manifest, "Manifest for --samples (default: canonical layout)");
  fin->add_option("--reuse", fa.reuse, "partial-unfreeze | full-unfreeze | partial-reset | full-reset")
      ->capture_default_str();
  fin->add_option("--strategy", fa.strategy, "pretrained | local")->capture_default_str();
  fin->add_option("--seed", fa.seed)->capture_default_str();
  fin->add_option("--max-epochs", fa.max_epochs)->capture_default_str();
  fin->add_option("--out", fa.out)->required();

  PredictArgs pra;
  auto* pred = app.add_subcommand("predict", "Predict the runtime at one scale-out");
  pred->add_option("--model", pra.model)->required();
  pred->add_option("--scale-out", pra.scale_out)->required();
  pred->add_option("--props", pra.props, "name=value pairs");
  pred->add_option("--props-file", pra.props_file);

  RecommendArgs ra;
  auto* rec = app.add_subcommand("recommend", "Smallest scale-out meeting a runtime target");
  rec->add_option("--model", ra.model)->required();
  rec->add_option("--target", ra.target, "Runtime target in seconds")->required();
  rec->add_option("--range", ra.range, "lo:hi:step")->required();
  rec->add_option("--props", ra.props, "name=value pairs");
  rec->add_option("--props-file", ra.props_file);

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Cross-validated comparison against the baselines");
  ev->add_option("--data", ea.data)->required();
  ev->add_option("--manifest", ea.manifest)->required();
  ev->add_option("--algo", ea.algo);
  ev->add_option("--methods", ea.methods, "Comma list of nnls,bell,local,filtered,full")->capture_default_str();
  ev->add_option("--n-train", ea.n_train, "e.g. 1,2,3 or 0-5")->capture_default_str();
  ev->add_option("--max-splits", ea.max_splits)->capture_default_str();
  ev->add_option("--contexts", ea.contexts, "Number of target contexts")->capture_default_str();
  ev->add_option("--reuse", ea.reuse)->capture_default_str();
  ev->add_option("--search-samples", ea.search_samples)->capture_default_str();
  ev->add_option("--epochs", ea.epochs, "Pre-training epochs")->capture_default_str();
  ev->add_option("--workers", ea.workers)->capture_default_str();
  ev->add_option("--seed", ea.seed)->capture_default_str();
  ev->add_option("--out-dir", ea.out_dir)->required();

  SynthArgs sa;
  auto* syn = app.add_subcommand("synth", "Write a synthetic Ernest-shaped dataset");
  syn->add_option("--out", sa.out)->required();
  syn->add_option("--manifest-out", sa.manifest_out);
  syn->add_option("--contexts", sa.contexts)->capture_default_str();
  syn->add_option("--seed", sa.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*pre) return cmd_pretrain(pa);
    if (*fin) return cmd_finetune(fa);
    if (*pred) return cmd_predict(pra);
    if (*rec) return cmd_recommend(ra);
    if (*ev) return cmd_evaluate(ea);
    if (*syn) return cmd_synth(sa);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}

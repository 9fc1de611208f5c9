#include "bellamy/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "bellamy/error.hpp"
#include "bellamy/nn.hpp"

namespace bellamy {

namespace {

struct NodeType {
  const char* name;
  double slowdown;
  std::uint64_t memory_mb;
  std::uint64_t cores;
};

constexpr NodeType kNodeTypes[] = {
    {"m5.xlarge", 1.00, 16384, 4},
    {"c5.2xlarge", 0.80, 16384, 8},
    {"r5.large", 1.25, 16384, 2},
};

constexpr std::uint64_t kSizesGb[] = {8, 12, 16, 20, 24};

struct JobParameters {
  const char* text;
  double iteration_factor;
};

constexpr JobParameters kJobParameters[] = {
    {"--iterations 10", 1.0},
    {"--iterations 20", 1.6},
};

struct Characteristics {
  const char* text;
  double density;
};

constexpr Characteristics kCharacteristics[] = {
    {"dense 100 features", 1.0},
    {"sparse 400 features", 1.3},
};

constexpr std::uint64_t kGiB = 1ull << 30;

template <typename T, std::size_t N>
const T& lookup(const T (&table)[N], const std::string& key) {
  for (const auto& row : table) {
    if constexpr (requires { row.name; }) {
      if (key == row.name) return row;
    } else {
      if (key == row.text) return row;
    }
  }
  throw Error(ErrorKind::data, "synthetic catalog has no entry '" + key + "'");
}

}  // namespace

PropertySchema synthetic_schema() {
  PropertySchema s;
  s.essential = {{"dataset_size", PropertyKind::natural},
                 {"dataset_characteristics", PropertyKind::text},
                 {"job_parameters", PropertyKind::text},
                 {"node_type", PropertyKind::text}};
  s.optional = {{"memory_mb", PropertyKind::natural},
                {"cpu_cores", PropertyKind::natural},
                {"job_name", PropertyKind::text}};
  return s;
}

std::array<double, 4> synthetic_theta(const PropertyMap& p) {
  const auto& node = lookup(kNodeTypes, p.at("node_type").as_text());
  const auto& job = lookup(kJobParameters, p.at("job_parameters").as_text());
  const auto& data = lookup(kCharacteristics, p.at("dataset_characteristics").as_text());
  const double size_gb = static_cast<double>(p.at("dataset_size").as_natural()) / kGiB;
  const double work = size_gb * job.iteration_factor * data.density;
  return {20.0 * node.slowdown, 50.0 * work * node.slowdown, 8.0 * job.iteration_factor, 6.0};
}

std::vector<SyntheticContext> synthetic_contexts(std::size_t count, std::uint64_t seed) {
  const std::size_t catalog = std::size(kNodeTypes) * std::size(kSizesGb) *
                              std::size(kJobParameters) * std::size(kCharacteristics);
  if (count > catalog) throw Error(ErrorKind::config, "too many synthetic contexts requested");
  Rng rng(derive_seed(seed, 31));
  std::set<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>> used;
  std::vector<SyntheticContext> out;
  std::size_t round = 0;
  while (out.size() < count) {
    // Cycle node types so every type appears before any repeats.
    const std::size_t n = round++ % std::size(kNodeTypes);
    const std::size_t s = std::uniform_int_distribution<std::size_t>(0, std::size(kSizesGb) - 1)(rng);
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, std::size(kJobParameters) - 1)(rng);
    const std::size_t c = std::uniform_int_distribution<std::size_t>(0, std::size(kCharacteristics) - 1)(rng);
    if (!used.insert({n, s, j, c}).second) continue;

    SyntheticContext ctx;
    ctx.properties["dataset_size"] = PropertyValue::natural(kSizesGb[s] * kGiB);
    ctx.properties["dataset_characteristics"] = PropertyValue::text(kCharacteristics[c].text);
    ctx.properties["job_parameters"] = PropertyValue::text(kJobParameters[j].text);
    ctx.properties["node_type"] = PropertyValue::text(kNodeTypes[n].name);
    ctx.properties["memory_mb"] = PropertyValue::natural(kNodeTypes[n].memory_mb);
    ctx.properties["cpu_cores"] = PropertyValue::natural(kNodeTypes[n].cores);
    ctx.properties["job_name"] = PropertyValue::text("sgd");
    ctx.key = {kNodeTypes[n].name, kJobParameters[j].text, kSizesGb[s] * kGiB, kCharacteristics[c].text};
    ctx.theta = synthetic_theta(ctx.properties);
    out.push_back(std::move(ctx));
  }
  return out;
}

double synthetic_runtime(const SyntheticContext& context, long long scale_out) {
  const double x = static_cast<double>(scale_out);
  const auto& t = context.theta;
  return t[0] + t[1] / x + t[2] * std::log(x) + t[3] * x;
}

std::vector<RunRecord> generate_runs(std::span<const SyntheticContext> contexts,
                                     const SyntheticOptions& options, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 32));
  std::normal_distribution<double> noise(0.0, options.noise);
  std::vector<RunRecord> runs;
  for (const auto& ctx : contexts) {
    for (long long x : options.scale_outs) {
      for (int rep = 0; rep < options.repetitions; ++rep) {
        RunRecord r;
        r.algorithm = options.algorithm;
        r.scale_out = x;
        const double factor = options.noise > 0.0 ? std::max(0.5, 1.0 + noise(rng)) : 1.0;
        r.runtime_seconds = synthetic_runtime(ctx, x) * factor;
        r.properties = ctx.properties;
        r.context = ctx.key;
        runs.push_back(std::move(r));
      }
    }
  }
  return runs;
}

}  // namespace bellamy

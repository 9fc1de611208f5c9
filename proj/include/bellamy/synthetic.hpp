#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bellamy/model.hpp"
#include "bellamy/record.hpp"

namespace bellamy {

/// A simulated execution context whose runtimes follow the Ernest form
/// t1 + t2/x + t3 ln x + t4 x with coefficients derived from its properties.
struct SyntheticContext {
  PropertyMap properties;
  ContextKey key;
  std::array<double, 4> theta{};
};

struct SyntheticOptions {
  std::vector<long long> scale_outs{2, 4, 6, 8, 10, 12};
  int repetitions = 5;
  // Relative standard deviation of multiplicative Gaussian noise.
  double noise = 0.05;
  std::string algorithm = "synthetic-sgd";
};

// Essential: dataset_size (bytes), dataset_characteristics, job_parameters,
// node_type. Optional: memory_mb, cpu_cores, job_name.
PropertySchema synthetic_schema();

// `count` distinct contexts drawn from a fixed catalog of node types, sizes,
// job parameters and data characteristics.
std::vector<SyntheticContext> synthetic_contexts(std::size_t count, std::uint64_t seed);

std::array<double, 4> synthetic_theta(const PropertyMap& properties);

double synthetic_runtime(const SyntheticContext& context, long long scale_out);

std::vector<RunRecord> generate_runs(std::span<const SyntheticContext> contexts,
                                     const SyntheticOptions& options, std::uint64_t seed);

}  // namespace bellamy

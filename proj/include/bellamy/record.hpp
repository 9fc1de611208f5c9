#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>

#include "bellamy/encoding.hpp"

namespace bellamy {

using PropertyMap = std::map<std::string, PropertyValue>;

/// Identity of an execution context. Equality is exact value equality
/// after unit normalization (sizes in bytes).
struct ContextKey {
  std::string node_type;
  std::string job_parameters;
  std::uint64_t dataset_size = 0;
  std::string dataset_characteristics;

  std::string to_string() const;

  friend bool operator==(const ContextKey&, const ContextKey&) = default;
  friend auto operator<=>(const ContextKey&, const ContextKey&) = default;
};

/// One historical job execution.
struct RunRecord {
  std::string algorithm;
  long long scale_out = 0;
  double runtime_seconds = 0.0;
  PropertyMap properties;
  ContextKey context;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

}  // namespace bellamy

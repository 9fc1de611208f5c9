#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bellamy/model.hpp"
#include "bellamy/record.hpp"

namespace bellamy {

/// Where a property's value comes from in each CSV row.
struct PropertySource {
  std::string name;
  PropertyKind kind = PropertyKind::text;
  // Columns joined by a single space; empty when `literal` is set.
  std::vector<std::string> columns;
  std::optional<std::string> literal;
  // Multiplier applied to naturals (e.g. MB -> bytes).
  std::uint64_t unit_scale = 1;
};

/// Declarative description of one experiment CSV.
///
/// Flat `key = value` text, one entry per line, `#` starts a comment:
///
///   algorithm = sgd                 (or: algorithm_column = <col>)
///   scale_out = machine_count
///   runtime = gross_runtime
///   runtime_unit = s                s | ms | min
///   essential.<name> = <source> : <kind> [: <unit>]
///   optional.<name>  = <source> : <kind> [: <unit>]
///   context.<role>   = <property name>
///   filter.<column>  = <value>      keep only matching rows
///
/// <source> is a column, several columns joined with `+`, or a quoted
/// literal. <unit> is one of B, KB, MB, GB, TB (binary multiples) and
/// converts naturals to bytes. Context roles are node_type, job_parameters,
/// dataset_size and dataset_characteristics; each defaults to the property
/// of the same name.
struct DatasetManifest {
  std::string algorithm;
  std::string algorithm_column;
  std::string scale_out_column;
  std::string runtime_column;
  double runtime_scale = 1.0;
  std::vector<PropertySource> essential;
  std::vector<PropertySource> optional;
  std::map<std::string, std::string> context_roles;
  std::vector<std::pair<std::string, std::string>> filters;

  static DatasetManifest parse(std::string_view text);
  static DatasetManifest load(const std::filesystem::path& path);

  PropertySchema schema() const;
  std::string to_text() const;
};

// Manifest matching the CSV layout produced by write_records.
DatasetManifest canonical_manifest(const PropertySchema& schema);

ContextKey make_context_key(const PropertyMap& props,
                            const std::map<std::string, std::string>& roles);

struct ContextSummary {
  ContextKey key;
  std::string algorithm;
  // scale-out -> number of repetitions
  std::map<long long, std::size_t> repetitions;
};

struct LoadReport {
  std::size_t rows = 0;
  std::vector<ContextSummary> contexts;

  std::string summary() const;
};

std::vector<RunRecord> load_dataset(const std::filesystem::path& csv_path,
                                    const DatasetManifest& manifest, LoadReport* report = nullptr);
std::vector<RunRecord> load_records(std::string_view csv_text, const DatasetManifest& manifest,
                                    LoadReport* report = nullptr);

std::string records_to_csv(std::span<const RunRecord> records, const PropertySchema& schema);
void write_records(const std::filesystem::path& path, std::span<const RunRecord> records,
                   const PropertySchema& schema);

LoadReport summarize(std::span<const RunRecord> records);

std::map<ContextKey, std::vector<std::size_t>> group_by_context(std::span<const RunRecord> records);

enum class Variant { local, filtered, full };
const char* to_string(Variant v) noexcept;
Variant parse_variant(std::string_view s);

// Dataset sizes differ by at least 20% relative to the target's size.
bool sizes_differ_significantly(std::uint64_t size, std::uint64_t target_size) noexcept;

/// Pre-training corpus for a target context:
///   local    -> nothing
///   filtered -> same algorithm; node type, characteristics and job parameters
///               all differ and the size differs by >= 20%
///   full     -> same algorithm, every context except the target
std::vector<RunRecord> filter_for_variant(std::span<const RunRecord> records,
                                          const ContextKey& target, std::string_view algorithm,
                                          Variant variant);

}  // namespace bellamy

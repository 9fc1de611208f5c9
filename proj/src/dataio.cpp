#include "bellamy/dataio.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "bellamy/csv.hpp"
#include "bellamy/error.hpp"

namespace bellamy {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == sep && !quoted) {
      parts.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  parts.push_back(trim(s.substr(start)));
  return parts;
}

std::uint64_t parse_unit(std::string_view unit) {
  if (unit.empty() || unit == "1" || unit == "none") return 1;
  if (unit == "B") return 1;
  if (unit == "KB") return 1ull << 10;
  if (unit == "MB") return 1ull << 20;
  if (unit == "GB") return 1ull << 30;
  if (unit == "TB") return 1ull << 40;
  throw Error(ErrorKind::config, "unknown unit '" + std::string(unit) + "'");
}

std::string unit_name(std::uint64_t scale) {
  switch (scale) {
    case 1ull << 10: return "KB";
    case 1ull << 20: return "MB";
    case 1ull << 30: return "GB";
    case 1ull << 40: return "TB";
    default: return "";
  }
}

PropertySource parse_source(const std::string& name, std::string_view spec) {
  const auto parts = split(spec, ':');
  if (parts.size() < 2 || parts.size() > 3) {
    throw Error(ErrorKind::config, "property '" + name + "' needs '<source> : <kind> [: <unit>]'");
  }
  PropertySource src;
  src.name = name;
  src.kind = parse_property_kind(parts[1]);
  if (parts.size() == 3) src.unit_scale = parse_unit(parts[2]);
  if (src.unit_scale != 1 && src.kind != PropertyKind::natural) {
    throw Error(ErrorKind::config, "units apply to natural properties only ('" + name + "')");
  }
  const std::string_view source = parts[0];
  if (source.size() >= 2 && source.front() == '"' && source.back() == '"') {
    src.literal = std::string(source.substr(1, source.size() - 2));
  } else {
    for (auto col : split(source, '+')) {
      if (col.empty()) throw Error(ErrorKind::config, "empty column name for '" + name + "'");
      src.columns.emplace_back(col);
    }
  }
  return src;
}

double runtime_unit_scale(std::string_view unit) {
  if (unit == "s") return 1.0;
  if (unit == "ms") return 1e-3;
  if (unit == "min") return 60.0;
  throw Error(ErrorKind::config, "unknown runtime unit '" + std::string(unit) + "'");
}

std::string runtime_unit_name(double scale) {
  if (scale == 1e-3) return "ms";
  if (scale == 60.0) return "min";
  return "s";
}

constexpr std::array<std::string_view, 4> kContextRoles{"node_type", "job_parameters", "dataset_size",
                                                        "dataset_characteristics"};

double parse_number(std::string_view raw, std::size_t row, std::string_view column) {
  raw = trim(raw);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (raw.empty() || ec != std::errc{} || ptr != raw.data() + raw.size() || !std::isfinite(v)) {
    throw Error(ErrorKind::data, "row " + std::to_string(row) + ": cannot parse '" +
                                     std::string(raw) + "' in column '" + std::string(column) + "'");
  }
  return v;
}

}  // namespace

DatasetManifest DatasetManifest::parse(std::string_view text) {
  DatasetManifest m;
  std::set<std::string> names;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      // keep '#' inside quoted literals
      if (std::count(line.begin(), line.begin() + static_cast<long>(hash), '"') % 2 == 0) {
        line = line.substr(0, hash);
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::config, "manifest line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key == "algorithm") m.algorithm = value;
    else if (key == "algorithm_column") m.algorithm_column = value;
    else if (key == "scale_out") m.scale_out_column = value;
    else if (key == "runtime") m.runtime_column = value;
    else if (key == "runtime_unit") m.runtime_scale = runtime_unit_scale(value);
    else if (key.starts_with("essential.") || key.starts_with("optional.")) {
      const bool essential = key.starts_with("essential.");
      const std::string name = key.substr(essential ? 10 : 9);
      if (name.empty() || !names.insert(name).second) {
        throw Error(ErrorKind::config, "manifest line " + std::to_string(line_no) +
                                           ": missing or duplicate property name");
      }
      (essential ? m.essential : m.optional).push_back(parse_source(name, value));
    } else if (key.starts_with("context.")) {
      const std::string role = key.substr(8);
      if (std::find(kContextRoles.begin(), kContextRoles.end(), role) == kContextRoles.end()) {
        throw Error(ErrorKind::config, "unknown context role '" + role + "'");
      }
      m.context_roles[role] = value;
    } else if (key.starts_with("filter.")) {
      m.filters.emplace_back(key.substr(7), value);
    } else {
      throw Error(ErrorKind::config, "manifest line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  if (m.scale_out_column.empty() || m.runtime_column.empty()) {
    throw Error(ErrorKind::config, "manifest must name the scale_out and runtime columns");
  }
  if (m.algorithm.empty() && m.algorithm_column.empty()) {
    throw Error(ErrorKind::config, "manifest must set algorithm or algorithm_column");
  }
  if (m.essential.empty()) throw Error(ErrorKind::config, "manifest declares no essential property");
  for (const auto role : kContextRoles) {
    const std::string r(role);
    if (!m.context_roles.contains(r) && names.contains(r)) m.context_roles[r] = r;
  }
  for (const auto& [role, prop] : m.context_roles) {
    if (!names.contains(prop)) {
      throw Error(ErrorKind::config, "context role '" + role + "' refers to unknown property '" + prop + "'");
    }
  }
  if (auto it = m.context_roles.find("dataset_size"); it != m.context_roles.end()) {
    const auto schema = m.schema();
    if (schema.find(it->second)->kind != PropertyKind::natural) {
      throw Error(ErrorKind::config, "the dataset_size context role must be a natural property");
    }
  }
  return m;
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot open manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

PropertySchema DatasetManifest::schema() const {
  PropertySchema s;
  for (const auto& p : essential) s.essential.push_back({p.name, p.kind});
  for (const auto& p : optional) s.optional.push_back({p.name, p.kind});
  return s;
}

std::string DatasetManifest::to_text() const {
  std::ostringstream os;
  if (!algorithm.empty()) os << "algorithm = " << algorithm << '\n';
  if (!algorithm_column.empty()) os << "algorithm_column = " << algorithm_column << '\n';
  os << "scale_out = " << scale_out_column << '\n';
  os << "runtime = " << runtime_column << '\n';
  os << "runtime_unit = " << runtime_unit_name(runtime_scale) << '\n';
  auto write = [&](const char* prefix, const PropertySource& p) {
    os << prefix << p.name << " = ";
    if (p.literal) {
      os << '"' << *p.literal << '"';
    } else {
      for (std::size_t i = 0; i < p.columns.size(); ++i) os << (i ? "+" : "") << p.columns[i];
    }
    os << " : " << to_string(p.kind);
    if (const auto u = unit_name(p.unit_scale); !u.empty()) os << " : " << u;
    os << '\n';
  };
  for (const auto& p : essential) write("essential.", p);
  for (const auto& p : optional) write("optional.", p);
  for (const auto& [role, prop] : context_roles) os << "context." << role << " = " << prop << '\n';
  for (const auto& [col, value] : filters) os << "filter." << col << " = " << value << '\n';
  return os.str();
}

DatasetManifest canonical_manifest(const PropertySchema& schema) {
  std::ostringstream os;
  os << "algorithm_column = algorithm\nscale_out = scale_out\nruntime = runtime_seconds\n";
  for (const auto& p : schema.essential) os << "essential." << p.name << " = " << p.name << " : " << to_string(p.kind) << '\n';
  for (const auto& p : schema.optional) os << "optional." << p.name << " = " << p.name << " : " << to_string(p.kind) << '\n';
  return DatasetManifest::parse(os.str());
}

ContextKey make_context_key(const PropertyMap& props, const std::map<std::string, std::string>& roles) {
  ContextKey key;
  auto lookup = [&](const char* role) -> const PropertyValue* {
    const auto r = roles.find(role);
    if (r == roles.end()) return nullptr;
    const auto p = props.find(r->second);
    return p == props.end() ? nullptr : &p->second;
  };
  if (const auto* v = lookup("node_type")) key.node_type = v->to_string();
  if (const auto* v = lookup("job_parameters")) key.job_parameters = v->to_string();
  if (const auto* v = lookup("dataset_characteristics")) key.dataset_characteristics = v->to_string();
  if (const auto* v = lookup("dataset_size")) key.dataset_size = v->as_natural();
  return key;
}

std::vector<RunRecord> load_records(std::string_view csv_text, const DatasetManifest& manifest,
                                    LoadReport* report) {
  const auto rows = csv::parse(csv_text);
  if (rows.empty()) throw Error(ErrorKind::data, "dataset has no header row");
  const csv::Row& header = rows.front();
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column[std::string(trim(header[i]))] = i;
  auto index_of = [&](const std::string& name) {
    const auto it = column.find(name);
    if (it == column.end()) throw Error(ErrorKind::data, "dataset is missing column '" + name + "'");
    return it->second;
  };

  const std::size_t scale_col = index_of(manifest.scale_out_column);
  const std::size_t runtime_col = index_of(manifest.runtime_column);
  const std::optional<std::size_t> algo_col =
      manifest.algorithm_column.empty() ? std::nullopt : std::optional(index_of(manifest.algorithm_column));
  std::vector<std::pair<std::size_t, std::string>> filters;
  for (const auto& [col, value] : manifest.filters) filters.emplace_back(index_of(col), value);
  std::vector<std::vector<std::size_t>> ess_cols, opt_cols;
  for (const auto& p : manifest.essential) {
    ess_cols.emplace_back();
    for (const auto& c : p.columns) ess_cols.back().push_back(index_of(c));
  }
  for (const auto& p : manifest.optional) {
    opt_cols.emplace_back();
    for (const auto& c : p.columns) opt_cols.back().push_back(index_of(c));
  }

  auto read_property = [&](const csv::Row& row, std::size_t row_no, const PropertySource& src,
                           const std::vector<std::size_t>& cols) -> std::optional<PropertyValue> {
    std::string raw;
    if (src.literal) {
      raw = *src.literal;
    } else {
      for (std::size_t k = 0; k < cols.size(); ++k) {
        const std::string_view cell = trim(row[cols[k]]);
        if (k) raw.push_back(' ');
        raw.append(cell);
      }
      if (trim(raw).empty()) return std::nullopt;
    }
    if (src.kind == PropertyKind::text) return PropertyValue::text(std::string(trim(raw)));
    const std::string_view digits = trim(raw);
    std::uint64_t whole = 0;
    const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), whole);
    if (ec == std::errc{} && end == digits.data() + digits.size() && !digits.empty() &&
        whole <= (~std::uint64_t{0}) / src.unit_scale) {
      return PropertyValue::natural(whole * src.unit_scale);
    }
    const double v = parse_number(raw, row_no, src.name) * static_cast<double>(src.unit_scale);
    if (v < 0.0 || v != std::floor(v) || v > 1.8e19) {
      throw Error(ErrorKind::data, "row " + std::to_string(row_no) + ": '" + raw +
                                       "' is not a natural number for property '" + src.name + "'");
    }
    return PropertyValue::natural(static_cast<std::uint64_t>(v));
  };

  std::vector<RunRecord> records;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const csv::Row& row = rows[r];
    if (row.size() != header.size()) {
      throw Error(ErrorKind::data, "row " + std::to_string(r) + ": expected " +
                                       std::to_string(header.size()) + " cells, found " +
                                       std::to_string(row.size()));
    }
    bool keep = true;
    for (const auto& [col, value] : filters) keep = keep && trim(row[col]) == value;
    if (!keep) continue;

    RunRecord rec;
    rec.algorithm = algo_col ? std::string(trim(row[*algo_col])) : manifest.algorithm;
    const double x = parse_number(row[scale_col], r, manifest.scale_out_column);
    if (x < 1.0 || x != std::floor(x)) {
      throw Error(ErrorKind::data, "row " + std::to_string(r) + ": scale-out must be a positive integer");
    }
    rec.scale_out = static_cast<long long>(x);
    rec.runtime_seconds = parse_number(row[runtime_col], r, manifest.runtime_column) * manifest.runtime_scale;
    if (!(rec.runtime_seconds > 0.0)) {
      throw Error(ErrorKind::data, "row " + std::to_string(r) + ": runtime must be positive");
    }
    for (std::size_t i = 0; i < manifest.essential.size(); ++i) {
      auto v = read_property(row, r, manifest.essential[i], ess_cols[i]);
      if (!v) {
        throw Error(ErrorKind::data, "row " + std::to_string(r) + ": essential property '" +
                                         manifest.essential[i].name + "' is empty");
      }
      rec.properties.emplace(manifest.essential[i].name, std::move(*v));
    }
    for (std::size_t i = 0; i < manifest.optional.size(); ++i) {
      if (auto v = read_property(row, r, manifest.optional[i], opt_cols[i])) {
        rec.properties.emplace(manifest.optional[i].name, std::move(*v));
      }
    }
    rec.context = make_context_key(rec.properties, manifest.context_roles);
    records.push_back(std::move(rec));
  }
  if (report) *report = summarize(records);
  return records;
}

std::vector<RunRecord> load_dataset(const std::filesystem::path& csv_path,
                                    const DatasetManifest& manifest, LoadReport* report) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open dataset " + csv_path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  if (text.starts_with("\xEF\xBB\xBF")) text.erase(0, 3);
  return load_records(text, manifest, report);
}

std::string records_to_csv(std::span<const RunRecord> records, const PropertySchema& schema) {
  csv::Row header{"algorithm", "scale_out", "runtime_seconds"};
  for (const auto& p : schema.essential) header.push_back(p.name);
  for (const auto& p : schema.optional) header.push_back(p.name);
  std::string out = csv::format_row(header);
  for (const auto& r : records) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), r.runtime_seconds);
    csv::Row row{r.algorithm, std::to_string(r.scale_out), std::string(buf, res.ptr)};
    for (std::size_t i = 3; i < header.size(); ++i) {
      const auto it = r.properties.find(header[i]);
      row.push_back(it == r.properties.end() ? std::string{} : it->second.to_string());
    }
    out += csv::format_row(row);
  }
  return out;
}

void write_records(const std::filesystem::path& path, std::span<const RunRecord> records,
                   const PropertySchema& schema) {
  csv::write_file_atomic(path, records_to_csv(records, schema));
}

LoadReport summarize(std::span<const RunRecord> records) {
  LoadReport report;
  report.rows = records.size();
  std::map<std::pair<std::string, ContextKey>, std::size_t> index;
  for (const auto& r : records) {
    const auto key = std::make_pair(r.algorithm, r.context);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, report.contexts.size()).first;
      report.contexts.push_back({r.context, r.algorithm, {}});
    }
    ++report.contexts[it->second].repetitions[r.scale_out];
  }
  return report;
}

std::string LoadReport::summary() const {
  std::ostringstream os;
  os << rows << " rows, " << contexts.size() << " contexts\n";
  for (const auto& c : contexts) {
    os << "  [" << c.algorithm << "] " << c.key.to_string() << "\n    scale-outs:";
    for (const auto& [x, n] : c.repetitions) os << ' ' << x << "x" << n;
    os << '\n';
  }
  return os.str();
}

std::map<ContextKey, std::vector<std::size_t>> group_by_context(std::span<const RunRecord> records) {
  std::map<ContextKey, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) groups[records[i].context].push_back(i);
  return groups;
}

const char* to_string(Variant v) noexcept {
  switch (v) {
    case Variant::local: return "local";
    case Variant::filtered: return "filtered";
    case Variant::full: return "full";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  for (Variant v : {Variant::local, Variant::filtered, Variant::full})
    if (s == to_string(v)) return v;
  throw Error(ErrorKind::config, "unknown variant '" + std::string(s) + "' (local, filtered, full)");
}

bool sizes_differ_significantly(std::uint64_t size, std::uint64_t target_size) noexcept {
  const std::uint64_t diff = size > target_size ? size - target_size : target_size - size;
  // |size - target| / target >= 1/5, exact in integers.
  if (diff > (~std::uint64_t{0}) / 5) return true;
  return 5 * diff >= target_size && diff > 0;
}

std::vector<RunRecord> filter_for_variant(std::span<const RunRecord> records,
                                          const ContextKey& target, std::string_view algorithm,
                                          Variant variant) {
  std::vector<RunRecord> out;
  if (variant == Variant::local) return out;
  for (const auto& r : records) {
    if (r.algorithm != algorithm || r.context == target) continue;
    if (variant == Variant::filtered) {
      const auto& c = r.context;
      const bool distinct = c.node_type != target.node_type &&
                            c.dataset_characteristics != target.dataset_characteristics &&
                            c.job_parameters != target.job_parameters &&
                            sizes_differ_significantly(c.dataset_size, target.dataset_size);
      if (!distinct) continue;
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace bellamy

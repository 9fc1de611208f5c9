#include "bellamy/encoding.hpp"

#include <charconv>
#include <cmath>
#include <map>

#include "bellamy/error.hpp"

namespace bellamy {

const char* to_string(PropertyKind kind) noexcept {
  return kind == PropertyKind::natural ? "natural" : "text";
}

PropertyKind parse_property_kind(std::string_view s) {
  if (s == "natural") return PropertyKind::natural;
  if (s == "text") return PropertyKind::text;
  throw Error(ErrorKind::config, "unknown property kind '" + std::string(s) +
                                     "' (expected natural or text)");
}

PropertyValue PropertyValue::parse(PropertyKind kind, std::string_view raw) {
  if (kind == PropertyKind::text) return text(std::string(raw));
  while (!raw.empty() && raw.front() == ' ') raw.remove_prefix(1);
  while (!raw.empty() && raw.back() == ' ') raw.remove_suffix(1);
  std::uint64_t n = 0;
  const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), n);
  if (ec != std::errc{} || ptr != raw.data() + raw.size() || raw.empty()) {
    throw Error(ErrorKind::data, "not a natural number: '" + std::string(raw) + "'");
  }
  return natural(n);
}

std::string PropertyValue::to_string() const {
  if (kind() == PropertyKind::natural) return std::to_string(as_natural());
  return as_text();
}

std::uint64_t binarizer_capacity(std::size_t length) {
  if (length >= 64) return ~std::uint64_t{0};
  return (std::uint64_t{1} << length) - 1;
}

Vector binarize(std::uint64_t n, std::size_t length) {
  if (n > binarizer_capacity(length)) {
    throw Error(ErrorKind::capacity, "binarize: " + std::to_string(n) + " does not fit into " +
                                         std::to_string(length) + " bits");
  }
  Vector bits(length, 0.0);
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t shift = length - 1 - i;
    bits[i] = static_cast<double>((n >> shift) & 1u);
  }
  return bits;
}

std::uint64_t debinarize(std::span<const double> bits) {
  std::uint64_t n = 0;
  for (double b : bits) n = (n << 1) | (b != 0.0 ? 1u : 0u);
  return n;
}

std::string clean_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (const char ch : raw) {
    char c = ch;
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    const bool keep = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '.' || c == '-' ||
                      c == '_' || c == '/' || c == ' ';
    if (keep) out.push_back(c);
  }
  return out;
}

std::vector<std::string> character_ngrams(std::string_view cleaned) {
  std::vector<std::string> grams;
  for (std::size_t n = 1; n <= 3; ++n) {
    if (cleaned.size() < n) break;
    for (std::size_t i = 0; i + n <= cleaned.size(); ++i) grams.emplace_back(cleaned.substr(i, n));
  }
  return grams;
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 14695981039346656037ull;
  for (const char c : bytes) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 1099511628211ull;
  }
  return h;
}

Vector hash_text(std::string_view raw, std::size_t length) {
  Vector q(length, 0.0);
  const std::string cleaned = clean_text(raw);
  std::map<std::string, int> counts;
  for (auto& gram : character_ngrams(cleaned)) ++counts[gram];
  for (const auto& [term, count] : counts) {
    const std::uint64_t h = fnv1a64(term);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    q[h % length] += sign * count;
  }
  double sum_sq = 0.0;
  for (double v : q) sum_sq += v * v;
  if (sum_sq == 0.0) return q;
  const double norm = std::sqrt(sum_sq);
  for (double& v : q) v /= norm;
  return q;
}

Vector encode_property(const PropertyValue& value) {
  Vector out;
  out.reserve(kPropertyVectorSize);
  Vector payload;
  if (value.kind() == PropertyKind::natural) {
    out.push_back(kBinarizerPrefix);
    payload = binarize(value.as_natural());
  } else {
    out.push_back(kHasherPrefix);
    payload = hash_text(value.as_text());
  }
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

ScaleOutFeatures scaleout_features(long long machines) {
  if (machines < 1) {
    throw Error(ErrorKind::data, "scale-out must be at least 1 machine, got " +
                                     std::to_string(machines));
  }
  const double x = static_cast<double>(machines);
  return {1.0 / x, std::log(x), x};
}

Normalizer Normalizer::fit(std::span<const ScaleOutFeatures> samples) {
  if (samples.empty()) throw Error(ErrorKind::insufficient_data, "Normalizer::fit: no samples");
  Normalizer n;
  n.min = samples.front();
  n.max = samples.front();
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < 3; ++i) {
      n.min[i] = std::min(n.min[i], s[i]);
      n.max[i] = std::max(n.max[i], s[i]);
    }
  }
  return n;
}

Normalizer Normalizer::fit_scaleouts(std::span<const long long> machines) {
  std::vector<ScaleOutFeatures> features;
  features.reserve(machines.size());
  for (long long m : machines) features.push_back(scaleout_features(m));
  return fit(features);
}

std::array<double, 3> Normalizer::normalize(const ScaleOutFeatures& features) const {
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    const double range = max[i] - min[i];
    out[i] = range > 0.0 ? (features[i] - min[i]) / range : 0.5;
  }
  return out;
}

}  // namespace bellamy

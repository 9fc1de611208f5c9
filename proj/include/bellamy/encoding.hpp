#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bellamy/tensor.hpp"

namespace bellamy {

inline constexpr std::size_t kPropertyVectorSize = 40;                // N
inline constexpr std::size_t kPropertyPayloadSize = kPropertyVectorSize - 1;  // L

// Method indicator stored in the first slot of every property vector.
inline constexpr double kBinarizerPrefix = 0.0;
inline constexpr double kHasherPrefix = 1.0;

enum class PropertyKind : std::uint8_t { natural = 0, text = 1 };

const char* to_string(PropertyKind kind) noexcept;
PropertyKind parse_property_kind(std::string_view s);

/// A descriptive property of an execution context: a natural number
/// (sizes, memory, core counts) or free text (node type, job parameters).
class PropertyValue {
 public:
  PropertyValue() : value_(std::string{}) {}
  static PropertyValue natural(std::uint64_t n) { return PropertyValue(n); }
  static PropertyValue text(std::string s) { return PropertyValue(std::move(s)); }

  // Parses `raw` according to `kind`; throws ErrorKind::data on a bad natural.
  static PropertyValue parse(PropertyKind kind, std::string_view raw);

  PropertyKind kind() const noexcept {
    return std::holds_alternative<std::uint64_t>(value_) ? PropertyKind::natural : PropertyKind::text;
  }
  std::uint64_t as_natural() const { return std::get<std::uint64_t>(value_); }
  const std::string& as_text() const { return std::get<std::string>(value_); }

  std::string to_string() const;

  friend bool operator==(const PropertyValue&, const PropertyValue&) = default;
  friend auto operator<=>(const PropertyValue&, const PropertyValue&) = default;

 private:
  explicit PropertyValue(std::uint64_t n) : value_(n) {}
  explicit PropertyValue(std::string s) : value_(std::move(s)) {}
  std::variant<std::uint64_t, std::string> value_;
};

// Largest natural the binarizer can represent in `length` bits.
std::uint64_t binarizer_capacity(std::size_t length = kPropertyPayloadSize);

// MSB-first binary expansion, zero-padded to `length`. Throws
// ErrorKind::capacity when n does not fit.
Vector binarize(std::uint64_t n, std::size_t length = kPropertyPayloadSize);
std::uint64_t debinarize(std::span<const double> bits);

// Lower-cases and removes everything outside [a-z0-9._/ -].
std::string clean_text(std::string_view raw);

// Character n-grams of orders 1..3 over an already cleaned string, no padding.
std::vector<std::string> character_ngrams(std::string_view cleaned);

std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// Signed feature hashing of character uni/bi/trigrams, projected onto the
/// unit sphere. Each unique term adds sign * count at fnv1a64(term) % length,
/// where the sign is negative when the top hash bit is set. Returns the zero
/// vector when nothing survives cleaning (or every bucket cancels).
Vector hash_text(std::string_view raw, std::size_t length = kPropertyPayloadSize);

// [prefix, q_1 .. q_L]: binarizer for naturals, hasher for text.
Vector encode_property(const PropertyValue& value);

/// [1/x, ln x, x] for a scale-out of x machines.
using ScaleOutFeatures = std::array<double, 3>;

ScaleOutFeatures scaleout_features(long long machines);

/// Feature-wise min-max bounds, fixed at training time.
struct Normalizer {
  std::array<double, 3> min{0.0, 0.0, 0.0};
  std::array<double, 3> max{1.0, 1.0, 1.0};

  static Normalizer fit(std::span<const ScaleOutFeatures> samples);
  static Normalizer fit_scaleouts(std::span<const long long> machines);

  // (v - min) / (max - min); no clamping. Degenerate features map to 0.5.
  std::array<double, 3> normalize(const ScaleOutFeatures& features) const;

  friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

}  // namespace bellamy

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "bellamy/csv.hpp"
#include "bellamy/encoding.hpp"
#include "bellamy/error.hpp"

using namespace bellamy;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::io;  // sentinel: nothing thrown
}

}  // namespace

TEST_SUITE("encoding") {

TEST_CASE("binarizer examples") {
  Vector five = binarize(5, 8);
  CHECK(five == Vector{0, 0, 0, 0, 0, 1, 0, 1});
  CHECK(binarize(0) == Vector(39, 0.0));
  Vector max = binarize(binarizer_capacity());
  CHECK(max == Vector(39, 1.0));
  CHECK(binarizer_capacity() == (std::uint64_t{1} << 39) - 1);
  CHECK(kind_of([] { binarize(std::uint64_t{1} << 39); }) == ErrorKind::capacity);
  CHECK(kind_of([] { binarize((std::uint64_t{1} << 39) + 1); }) == ErrorKind::capacity);
  CHECK(kind_of([] { binarize(std::uint64_t{1} << 40); }) == ErrorKind::capacity);
}

TEST_CASE("binarizer round trip") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::uint64_t> dist(0, binarizer_capacity());
  for (int i = 0; i < 10000; ++i) {
    const std::uint64_t n = i < 50 ? static_cast<std::uint64_t>(i) : dist(rng);
    const Vector bits = binarize(n);
    REQUIRE(bits.size() == kPropertyPayloadSize);
    CHECK(debinarize(bits) == n);
  }
}

TEST_CASE("text cleaning and n-grams") {
  CHECK(clean_text("M5.XLarge!") == "m5.xlarge");
  CHECK(clean_text("a,b;c") == "abc");
  CHECK(clean_text("--k 5 /in_put") == "--k 5 /in_put");
  const auto grams = character_ngrams("abc");
  CHECK(grams == std::vector<std::string>{"a", "b", "c", "ab", "bc", "abc"});
  CHECK(character_ngrams("a") == std::vector<std::string>{"a"});
  CHECK(character_ngrams("").empty());
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("hasher produces unit vectors") {
  for (const char* s : {"m5.xlarge", "r5.large", "--iterations 10", "x", "sparse 400 features"}) {
    const Vector q = hash_text(s);
    REQUIRE(q.size() == kPropertyPayloadSize);
    CHECK(norm2(q) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("hasher of empty or fully stripped input is zero") {
  CHECK(hash_text("") == Vector(39, 0.0));
  CHECK(hash_text("!!!***") == Vector(39, 0.0));
}

TEST_CASE("hasher distinguishes character order") {
  CHECK(hash_text("ab") != hash_text("ba"));
  CHECK(hash_text("M5.XLARGE") == hash_text("m5.xlarge"));
}

TEST_CASE("property vector prefix") {
  const Vector n = encode_property(PropertyValue::natural(6));
  CHECK(n.size() == kPropertyVectorSize);
  CHECK(n[0] == kBinarizerPrefix);
  CHECK(n.back() == 0.0);
  CHECK(n[kPropertyVectorSize - 2] == 1.0);
  const Vector t = encode_property(PropertyValue::text("m5.xlarge"));
  CHECK(t[0] == kHasherPrefix);
}

TEST_CASE("property values parse by kind") {
  CHECK(PropertyValue::parse(PropertyKind::natural, " 42 ").as_natural() == 42);
  CHECK(kind_of([] { PropertyValue::parse(PropertyKind::natural, "4x"); }) == ErrorKind::data);
  CHECK(kind_of([] { PropertyValue::parse(PropertyKind::natural, "-1"); }) == ErrorKind::data);
  CHECK(PropertyValue::parse(PropertyKind::text, "a b").as_text() == "a b");
  CHECK(parse_property_kind("natural") == PropertyKind::natural);
  CHECK(kind_of([] { parse_property_kind("float"); }) == ErrorKind::config);
}

TEST_CASE("scale-out features and normalizer") {
  const auto f = scaleout_features(4);
  CHECK(f[0] == 0.25);
  CHECK(f[1] == doctest::Approx(std::log(4.0)));
  CHECK(f[2] == 4.0);
  CHECK(kind_of([] { scaleout_features(0); }) == ErrorKind::data);

  const std::vector<long long> xs{2, 4, 12};
  const Normalizer n = Normalizer::fit_scaleouts(xs);
  const auto lo = n.normalize(scaleout_features(12));
  CHECK(lo[0] == 0.0);
  CHECK(lo[1] == 1.0);
  CHECK(lo[2] == 1.0);
  // No clamping outside the fitted range.
  CHECK(n.normalize(scaleout_features(22))[2] == doctest::Approx(2.0));
  const std::vector<long long> single{6};
  const auto mid = Normalizer::fit_scaleouts(single).normalize(scaleout_features(6));
  CHECK(mid == std::array<double, 3>{0.5, 0.5, 0.5});
}

TEST_CASE("golden property vectors") {
  const auto rows = csv::read_file(BELLAMY_GOLDEN_DIR "/hash_vectors.csv");
  REQUIRE(rows.size() == 21);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    REQUIRE(row.size() == 3 + kPropertyVectorSize);
    const PropertyValue v = PropertyValue::parse(parse_property_kind(row[1]), row[2]);
    const Vector got = encode_property(v);
    for (std::size_t i = 0; i < kPropertyVectorSize; ++i) {
      const double want = std::strtod(row[3 + i].c_str(), nullptr);
      INFO(row[2], " index ", i);
      CHECK(std::bit_cast<std::uint64_t>(got[i]) == std::bit_cast<std::uint64_t>(want));
    }
  }
}

}

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bellamy/encoding.hpp"
#include "bellamy/nn.hpp"
#include "bellamy/record.hpp"

namespace bellamy {

inline constexpr std::size_t kScaleOutHidden = 16;
inline constexpr std::size_t kScaleOutEmbedding = 8;  // F
inline constexpr std::size_t kCodeDim = 4;            // M
inline constexpr std::size_t kAutoencoderHidden = 8;
inline constexpr std::size_t kPredictorHidden = 8;

// Width of the concatenated predictor input: F + (m + 1) * M.
constexpr std::size_t predictor_input_width(std::size_t essential_count) {
  return kScaleOutEmbedding + (essential_count + 1) * kCodeDim;
}

struct PropertySpec {
  std::string name;
  PropertyKind kind = PropertyKind::text;

  friend bool operator==(const PropertySpec&, const PropertySpec&) = default;
};

/// Ordered essential and optional property names. Essential order is part of
/// the model: codes are concatenated in this order.
struct PropertySchema {
  std::vector<PropertySpec> essential;
  std::vector<PropertySpec> optional;

  // Names unique, at least one essential property.
  void validate() const;
  const PropertySpec* find(std::string_view name) const;
  std::string describe() const;

  friend bool operator==(const PropertySchema&, const PropertySchema&) = default;
};

enum class Component : std::uint8_t { f = 0, g = 1, h = 2, z = 3 };
inline constexpr std::array<Component, 4> kAllComponents{Component::f, Component::g, Component::h,
                                                         Component::z};
const char* to_string(Component c) noexcept;

/// Weights of the scale-out network f, the property auto-encoder (g, h) and
/// the runtime predictor z, with the normalization bounds and schema they
/// were trained against.
struct ModelState {
  TwoLayerBlock f;
  TwoLayerBlock g;
  TwoLayerBlock h;
  TwoLayerBlock z;
  Normalizer normalizer;
  PropertySchema schema;
  // Not persisted and not part of the fingerprint.
  std::array<bool, 4> trainable{true, true, true, true};

  static ModelState create(PropertySchema schema, Normalizer normalizer, std::uint64_t seed);

  TwoLayerBlock& block(Component c);
  const TwoLayerBlock& block(Component c) const;

  bool is_trainable(Component c) const { return trainable[static_cast<std::size_t>(c)]; }
  void set_dropout(double rate);

  // Checks dimensions and the width law of z.
  void validate() const;

  std::uint64_t fingerprint() const;
};

void set_trainable(ModelState& state, Component c, bool trainable);
// He re-initialization of one component from a fresh seed.
void reset(ModelState& state, Component c, std::uint64_t seed);

// Throws ErrorKind::schema when `schema` differs from the state's schema.
void require_schema(const ModelState& state, const PropertySchema& schema);

/// Inputs of one forward pass after encoding: normalized scale-out features
/// plus one property vector per essential property (schema order) followed
/// by the available optional properties.
struct ModelInput {
  std::array<double, 3> scale_features{};
  std::vector<Vector> property_vectors;
  std::size_t essential_count = 0;
};

ModelInput prepare_input(const ModelState& state, long long scale_out, const PropertyMap& props);

struct Prediction {
  double runtime_seconds = 0.0;
  bool negative = false;
  std::vector<Vector> codes;
  std::vector<Vector> reconstructions;
};

struct ForwardTrace {
  BlockTrace f;
  std::vector<BlockTrace> g;
  std::vector<BlockTrace> h;
  BlockTrace z;
};

Prediction forward(const ModelState& state, const ModelInput& input, Mode mode = Mode::infer,
                   Rng* rng = nullptr, ForwardTrace* trace = nullptr,
                   bool reconstruct = true);

Prediction forward(const ModelState& state, long long scale_out, const PropertyMap& props,
                   Mode mode = Mode::infer, Rng* rng = nullptr);

double predict_runtime(const ModelState& state, long long scale_out, const PropertyMap& props);

struct LossOptions {
  double huber_delta = 1.0;
  double reconstruction_weight = 1.0;
  bool include_reconstruction = true;
};

struct LossTerms {
  double total = 0.0;
  double runtime = 0.0;
  double reconstruction = 0.0;
};

struct ModelGrad {
  std::array<BlockGrad, 4> blocks;

  static ModelGrad zeros_like(const ModelState& state);
  void clear();
  BlockGrad& operator[](Component c) { return blocks[static_cast<std::size_t>(c)]; }
  const BlockGrad& operator[](Component c) const { return blocks[static_cast<std::size_t>(c)]; }
};

// Huber over runtimes plus weighted MSE over every property reconstruction.
// Throws ErrorKind::non_finite when the loss is not finite.
LossTerms joint_loss(const ModelState& state, std::span<const RunRecord> batch,
                     const LossOptions& options = {}, Mode mode = Mode::infer,
                     Rng* rng = nullptr);

LossTerms joint_loss(const ModelState& state, std::span<const ModelInput> inputs,
                     std::span<const double> targets, const LossOptions& options = {},
                     Mode mode = Mode::infer, Rng* rng = nullptr);

// Same loss, with gradients for trainable components accumulated into `grad`.
LossTerms joint_loss_gradient(const ModelState& state, std::span<const ModelInput> inputs,
                              std::span<const double> targets, const LossOptions& options,
                              Mode mode, Rng* rng, ModelGrad& grad);

inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> serialize(const ModelState& state);
ModelState deserialize(std::span<const std::uint8_t> bytes);

// Writes to a temporary sibling and renames it into place.
void save(const ModelState& state, const std::filesystem::path& path);
ModelState load(const std::filesystem::path& path);
// Also rejects a model whose schema differs from `expected`.
ModelState load(const std::filesystem::path& path, const PropertySchema& expected);

std::string fingerprint_hex(std::uint64_t fingerprint);

}  // namespace bellamy

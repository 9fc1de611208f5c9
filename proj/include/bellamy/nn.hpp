#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bellamy/tensor.hpp"

namespace bellamy {

using Rng = std::mt19937_64;

enum class Mode { train, infer };

// splitmix64 mix of (seed, stream); used to give independent sub-streams
// (per config, per split, per reset) their own generator.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

enum class Activation : std::uint8_t { identity = 0, selu = 1, tanh = 2 };

// Self-normalizing constants from Klambauer et al. (2017).
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
inline constexpr double kSeluScale = 1.0507009873554804934193349852946;
// Saturation value of SELU for x -> -inf; alpha-dropout sets dropped units here.
inline constexpr double kSeluSaturation = -kSeluScale * kSeluAlpha;

double selu(double x) noexcept;
double selu_derivative(double x) noexcept;
double activate(Activation act, double x) noexcept;
// Derivative of the activation evaluated at pre-activation `x`.
double activate_derivative(Activation act, double x) noexcept;

/// Mask and affine correction drawn for one alpha-dropout application.
struct AlphaDropoutMask {
  std::vector<std::uint8_t> keep;
  double scale = 1.0;   // a
  double shift = 0.0;   // b
};

// Draws a mask for `size` units. rate must lie in [0, 1).
AlphaDropoutMask draw_alpha_dropout(std::size_t size, double rate, Rng& rng);

void apply_alpha_dropout(std::span<double> v, const AlphaDropoutMask& mask);

// Identity in infer mode and at rate 0.
Vector alpha_dropout(std::span<const double> v, double rate, Rng& rng, Mode mode);

// i.i.d. normal entries with variance 2 / fan_in.
Matrix he_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng);

/// out = output_act(W2 * dropout(hidden_act(W1 * x + b1)) + b2)
///
/// Alpha-dropout sits between the two layers and is active in train mode
/// only. Bias vectors are empty when `bias` is false.
struct TwoLayerBlock {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;
  Activation hidden_act = Activation::selu;
  Activation output_act = Activation::selu;
  double dropout_rate = 0.0;
  bool bias = true;

  static TwoLayerBlock create(std::size_t input_dim, std::size_t hidden_dim,
                              std::size_t output_dim, Activation hidden_act,
                              Activation output_act, bool bias, Rng& rng);

  std::size_t input_dim() const noexcept { return w1.cols(); }
  std::size_t hidden_dim() const noexcept { return w1.rows(); }
  std::size_t output_dim() const noexcept { return w2.rows(); }

  // Re-draws all weights with He initialization; biases reset to zero.
  void reinitialize(Rng& rng);

  // Throws ErrorKind::shape when the declared dimensions do not conform.
  void validate() const;

  friend bool operator==(const TwoLayerBlock&, const TwoLayerBlock&) = default;
};

// Intermediate values of one forward pass, sufficient for backward_block.
struct BlockTrace {
  Vector input;
  Vector hidden_pre;
  Vector hidden;  // after activation and dropout
  Vector output_pre;
  Vector output;
  AlphaDropoutMask dropout;
  bool dropped = false;
};

// `rng` may be null in infer mode or when the block's dropout rate is zero.
Vector forward_block(const TwoLayerBlock& block, std::span<const double> x, Mode mode,
                     Rng* rng = nullptr, BlockTrace* trace = nullptr);

/// Gradient buffers shaped like a block's parameters.
struct BlockGrad {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;

  static BlockGrad zeros_like(const TwoLayerBlock& block);
  void clear();
  void scale(double factor);
};

// Accumulates parameter gradients into `grad` and returns d(loss)/d(input).
Vector backward_block(const TwoLayerBlock& block, const BlockTrace& trace,
                      std::span<const double> grad_output, BlockGrad& grad);

// Named views over the four parameter arrays (w1, b1, w2, b2), in that order.
std::array<std::span<double>, 4> parameter_views(TwoLayerBlock& block);
std::array<std::span<const double>, 4> parameter_views(const TwoLayerBlock& block);
std::array<std::span<double>, 4> parameter_views(BlockGrad& grad);
std::array<std::span<const double>, 4> parameter_views(const BlockGrad& grad);
inline constexpr std::array<std::string_view, 4> kParameterNames{"w1", "b1", "w2", "b2"};

// Mean-reduced Huber loss; quadratic for |e| <= delta, linear outside.
double huber_loss(std::span<const double> pred, std::span<const double> target,
                  double delta = 1.0);
// d(huber_loss)/d(pred), already divided by the element count.
Vector huber_gradient(std::span<const double> pred, std::span<const double> target,
                      double delta = 1.0);

double mse_loss(std::span<const double> a, std::span<const double> b);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

struct AdamState {
  BlockGrad first;
  BlockGrad second;
  std::int64_t step = 0;

  static AdamState for_block(const TwoLayerBlock& block);
};

// One AdamW update at learning rate `lr`. Throws ErrorKind::non_finite naming
// the offending parameter ("<label>.w1", ...) when a gradient is NaN or Inf.
void adam_step(TwoLayerBlock& block, const BlockGrad& grad, AdamState& state,
               const AdamHyper& hyper, double lr, std::string_view label = "block");

}  // namespace bellamy

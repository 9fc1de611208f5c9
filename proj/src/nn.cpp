#include "bellamy/nn.hpp"

#include <cmath>
#include <string>

#include "bellamy/error.hpp"

namespace bellamy {

double selu(double x) noexcept {
  return x > 0.0 ? kSeluScale * x : kSeluScale * kSeluAlpha * std::expm1(x);
}

double selu_derivative(double x) noexcept {
  return x > 0.0 ? kSeluScale : kSeluScale * kSeluAlpha * std::exp(x);
}

double activate(Activation act, double x) noexcept {
  switch (act) {
    case Activation::selu: return selu(x);
    case Activation::tanh: return std::tanh(x);
    case Activation::identity: break;
  }
  return x;
}

double activate_derivative(Activation act, double x) noexcept {
  switch (act) {
    case Activation::selu: return selu_derivative(x);
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::identity: break;
  }
  return 1.0;
}

AlphaDropoutMask draw_alpha_dropout(std::size_t size, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw Error(ErrorKind::config, "alpha dropout rate must lie in [0, 1)");
  }
  AlphaDropoutMask mask;
  mask.keep.assign(size, 1);
  if (rate == 0.0) return mask;
  const double q = 1.0 - rate;
  std::bernoulli_distribution keep(q);
  for (auto& k : mask.keep) k = keep(rng) ? 1 : 0;
  const double a = 1.0 / std::sqrt(q + kSeluSaturation * kSeluSaturation * q * (1.0 - q));
  mask.scale = a;
  mask.shift = -a * (1.0 - q) * kSeluSaturation;
  return mask;
}

void apply_alpha_dropout(std::span<double> v, const AlphaDropoutMask& mask) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double kept = mask.keep[i] ? v[i] : kSeluSaturation;
    v[i] = mask.scale * kept + mask.shift;
  }
}

Vector alpha_dropout(std::span<const double> v, double rate, Rng& rng, Mode mode) {
  Vector out(v.begin(), v.end());
  if (mode == Mode::infer || rate == 0.0) return out;
  apply_alpha_dropout(out, draw_alpha_dropout(out.size(), rate, rng));
  return out;
}

Matrix he_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw Error(ErrorKind::config, "he_init: fan_in must be at least 1");
  Matrix m(rows, cols);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (double& v : m.values()) v = normal(rng);
  return m;
}

TwoLayerBlock TwoLayerBlock::create(std::size_t input_dim, std::size_t hidden_dim,
                                    std::size_t output_dim, Activation hidden_act,
                                    Activation output_act, bool bias, Rng& rng) {
  if (input_dim == 0 || hidden_dim == 0 || output_dim == 0) {
    throw Error(ErrorKind::shape, "TwoLayerBlock dimensions must be at least 1");
  }
  TwoLayerBlock b;
  b.w1 = Matrix(hidden_dim, input_dim);
  b.w2 = Matrix(output_dim, hidden_dim);
  b.hidden_act = hidden_act;
  b.output_act = output_act;
  b.bias = bias;
  b.reinitialize(rng);
  return b;
}

void TwoLayerBlock::reinitialize(Rng& rng) {
  w1 = he_init(w1.rows(), w1.cols(), w1.cols(), rng);
  w2 = he_init(w2.rows(), w2.cols(), w2.cols(), rng);
  b1 = bias ? Vector(w1.rows(), 0.0) : Vector{};
  b2 = bias ? Vector(w2.rows(), 0.0) : Vector{};
}

void TwoLayerBlock::validate() const {
  if (w1.rows() == 0 || w1.cols() == 0 || w2.rows() == 0) {
    throw Error(ErrorKind::shape, "TwoLayerBlock has an empty layer");
  }
  if (w2.cols() != w1.rows()) {
    throw Error(ErrorKind::shape, "TwoLayerBlock: second layer expects " +
                                      std::to_string(w2.cols()) + " inputs but hidden width is " +
                                      std::to_string(w1.rows()));
  }
  const bool ok = bias ? (b1.size() == w1.rows() && b2.size() == w2.rows())
                       : (b1.empty() && b2.empty());
  if (!ok) throw Error(ErrorKind::shape, "TwoLayerBlock: bias vectors do not match bias flag");
}

Vector forward_block(const TwoLayerBlock& block, std::span<const double> x, Mode mode, Rng* rng,
                     BlockTrace* trace) {
  if (x.size() != block.input_dim()) {
    throw Error(ErrorKind::shape, "forward_block: expected input of width " +
                                      std::to_string(block.input_dim()) + ", got " +
                                      std::to_string(x.size()));
  }
  Vector hidden_pre = matvec(block.w1, x);
  if (block.bias) {
    for (std::size_t j = 0; j < hidden_pre.size(); ++j) hidden_pre[j] += block.b1[j];
  }
  Vector hidden(hidden_pre.size());
  for (std::size_t j = 0; j < hidden.size(); ++j) hidden[j] = activate(block.hidden_act, hidden_pre[j]);

  const bool dropped = mode == Mode::train && block.dropout_rate > 0.0;
  AlphaDropoutMask mask;
  if (dropped) {
    if (rng == nullptr) throw Error(ErrorKind::config, "forward_block: dropout requires an rng");
    mask = draw_alpha_dropout(hidden.size(), block.dropout_rate, *rng);
    apply_alpha_dropout(hidden, mask);
  }

  Vector output_pre = matvec(block.w2, hidden);
  if (block.bias) {
    for (std::size_t k = 0; k < output_pre.size(); ++k) output_pre[k] += block.b2[k];
  }
  Vector output(output_pre.size());
  for (std::size_t k = 0; k < output.size(); ++k) output[k] = activate(block.output_act, output_pre[k]);

  if (!all_finite(output)) throw Error(ErrorKind::non_finite, "forward_block: non-finite output");

  if (trace != nullptr) {
    trace->input.assign(x.begin(), x.end());
    trace->hidden_pre = std::move(hidden_pre);
    trace->hidden = std::move(hidden);
    trace->output_pre = std::move(output_pre);
    trace->output = output;
    trace->dropout = std::move(mask);
    trace->dropped = dropped;
  }
  return output;
}

BlockGrad BlockGrad::zeros_like(const TwoLayerBlock& block) {
  BlockGrad g;
  g.w1 = Matrix(block.w1.rows(), block.w1.cols());
  g.w2 = Matrix(block.w2.rows(), block.w2.cols());
  g.b1 = Vector(block.b1.size(), 0.0);
  g.b2 = Vector(block.b2.size(), 0.0);
  return g;
}

void BlockGrad::clear() {
  for (auto view : parameter_views(*this)) std::fill(view.begin(), view.end(), 0.0);
}

void BlockGrad::scale(double factor) {
  for (auto view : parameter_views(*this))
    for (double& v : view) v *= factor;
}

Vector backward_block(const TwoLayerBlock& block, const BlockTrace& trace,
                      std::span<const double> grad_output, BlockGrad& grad) {
  if (grad_output.size() != block.output_dim()) {
    throw Error(ErrorKind::shape, "backward_block: gradient width mismatch");
  }
  const std::size_t hidden_dim = block.hidden_dim();
  const std::size_t input_dim = block.input_dim();

  Vector d_out_pre(grad_output.size());
  for (std::size_t k = 0; k < d_out_pre.size(); ++k) {
    d_out_pre[k] = grad_output[k] * activate_derivative(block.output_act, trace.output_pre[k]);
  }
  for (std::size_t k = 0; k < d_out_pre.size(); ++k) {
    auto row = grad.w2.row(k);
    for (std::size_t j = 0; j < hidden_dim; ++j) row[j] += d_out_pre[k] * trace.hidden[j];
    if (block.bias) grad.b2[k] += d_out_pre[k];
  }

  Vector d_hidden = matvec_transposed(block.w2, d_out_pre);
  Vector d_hidden_pre(hidden_dim);
  for (std::size_t j = 0; j < hidden_dim; ++j) {
    double d = d_hidden[j];
    if (trace.dropped) d *= trace.dropout.keep[j] ? trace.dropout.scale : 0.0;
    d_hidden_pre[j] = d * activate_derivative(block.hidden_act, trace.hidden_pre[j]);
  }
  for (std::size_t j = 0; j < hidden_dim; ++j) {
    auto row = grad.w1.row(j);
    for (std::size_t i = 0; i < input_dim; ++i) row[i] += d_hidden_pre[j] * trace.input[i];
    if (block.bias) grad.b1[j] += d_hidden_pre[j];
  }
  return matvec_transposed(block.w1, d_hidden_pre);
}

std::array<std::span<double>, 4> parameter_views(TwoLayerBlock& b) {
  return {b.w1.values(), std::span<double>(b.b1), b.w2.values(), std::span<double>(b.b2)};
}
std::array<std::span<const double>, 4> parameter_views(const TwoLayerBlock& b) {
  return {b.w1.values(), std::span<const double>(b.b1), b.w2.values(),
          std::span<const double>(b.b2)};
}
std::array<std::span<double>, 4> parameter_views(BlockGrad& g) {
  return {g.w1.values(), std::span<double>(g.b1), g.w2.values(), std::span<double>(g.b2)};
}
std::array<std::span<const double>, 4> parameter_views(const BlockGrad& g) {
  return {g.w1.values(), std::span<const double>(g.b1), g.w2.values(),
          std::span<const double>(g.b2)};
}

namespace {
void require_same_length(std::span<const double> a, std::span<const double> b, const char* who) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::shape, std::string(who) + ": length mismatch (" +
                                      std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                                      ")");
  }
  if (a.empty()) throw Error(ErrorKind::shape, std::string(who) + ": empty input");
}
}  // namespace

double huber_loss(std::span<const double> pred, std::span<const double> target, double delta) {
  require_same_length(pred, target, "huber_loss");
  if (!(delta > 0.0)) throw Error(ErrorKind::config, "huber_loss: delta must be positive");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = std::abs(pred[i] - target[i]);
    acc += e <= delta ? 0.5 * e * e : delta * (e - 0.5 * delta);
  }
  return acc / static_cast<double>(pred.size());
}

Vector huber_gradient(std::span<const double> pred, std::span<const double> target, double delta) {
  require_same_length(pred, target, "huber_gradient");
  const double n = static_cast<double>(pred.size());
  Vector g(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    g[i] = (std::abs(e) <= delta ? e : (e > 0 ? delta : -delta)) / n;
  }
  return g;
}

double mse_loss(std::span<const double> a, std::span<const double> b) {
  require_same_length(a, b, "mse_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double e = a[i] - b[i];
    acc += e * e;
  }
  return acc / static_cast<double>(a.size());
}

AdamState AdamState::for_block(const TwoLayerBlock& block) {
  return {BlockGrad::zeros_like(block), BlockGrad::zeros_like(block), 0};
}

void adam_step(TwoLayerBlock& block, const BlockGrad& grad, AdamState& state,
               const AdamHyper& hyper, double lr, std::string_view label) {
  const auto params = parameter_views(block);
  const auto grads = parameter_views(grad);
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (grads[p].size() != params[p].size()) {
      throw Error(ErrorKind::shape, "adam_step: gradient shape mismatch for " +
                                        std::string(label) + "." + std::string(kParameterNames[p]));
    }
    if (!all_finite(grads[p])) {
      throw Error(ErrorKind::non_finite, "adam_step: non-finite gradient for " +
                                             std::string(label) + "." +
                                             std::string(kParameterNames[p]));
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(hyper.beta1, t);
  const double correction2 = 1.0 - std::pow(hyper.beta2, t);
  const auto m = parameter_views(state.first);
  const auto v = parameter_views(state.second);

  for (std::size_t p = 0; p < params.size(); ++p) {
    auto param = params[p];
    const auto g = grads[p];
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[p][i] = hyper.beta1 * m[p][i] + (1.0 - hyper.beta1) * g[i];
      v[p][i] = hyper.beta2 * v[p][i] + (1.0 - hyper.beta2) * g[i] * g[i];
      const double m_hat = m[p][i] / correction1;
      const double v_hat = v[p][i] / correction2;
      if (hyper.weight_decay != 0.0) param[i] -= lr * hyper.weight_decay * param[i];
      param[i] -= lr * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
    }
  }
}

}  // namespace bellamy

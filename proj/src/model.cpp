#include "bellamy/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "bellamy/error.hpp"

namespace bellamy {

std::string ContextKey::to_string() const {
  std::ostringstream os;
  os << "node_type=" << node_type << ";job_parameters=" << job_parameters
     << ";dataset_size=" << dataset_size << ";dataset_characteristics=" << dataset_characteristics;
  return os.str();
}

const char* to_string(Component c) noexcept {
  switch (c) {
    case Component::f: return "f";
    case Component::g: return "g";
    case Component::h: return "h";
    case Component::z: return "z";
  }
  return "?";
}

void PropertySchema::validate() const {
  if (essential.empty()) {
    throw Error(ErrorKind::schema, "schema needs at least one essential property");
  }
  std::set<std::string> seen;
  for (const auto* list : {&essential, &optional}) {
    for (const auto& spec : *list) {
      if (spec.name.empty()) throw Error(ErrorKind::schema, "schema contains an empty property name");
      if (!seen.insert(spec.name).second) {
        throw Error(ErrorKind::schema, "duplicate property name '" + spec.name + "' in schema");
      }
    }
  }
}

const PropertySpec* PropertySchema::find(std::string_view name) const {
  for (const auto* list : {&essential, &optional})
    for (const auto& spec : *list)
      if (spec.name == name) return &spec;
  return nullptr;
}

std::string PropertySchema::describe() const {
  std::ostringstream os;
  os << "essential[";
  for (std::size_t i = 0; i < essential.size(); ++i)
    os << (i ? "," : "") << essential[i].name << ":" << to_string(essential[i].kind);
  os << "] optional[";
  for (std::size_t i = 0; i < optional.size(); ++i)
    os << (i ? "," : "") << optional[i].name << ":" << to_string(optional[i].kind);
  os << "]";
  return os.str();
}

ModelState ModelState::create(PropertySchema schema, Normalizer normalizer, std::uint64_t seed) {
  schema.validate();
  Rng rng(seed);
  ModelState s;
  s.f = TwoLayerBlock::create(3, kScaleOutHidden, kScaleOutEmbedding, Activation::selu,
                              Activation::selu, true, rng);
  s.g = TwoLayerBlock::create(kPropertyVectorSize, kAutoencoderHidden, kCodeDim, Activation::selu,
                              Activation::selu, false, rng);
  s.h = TwoLayerBlock::create(kCodeDim, kAutoencoderHidden, kPropertyVectorSize, Activation::selu,
                              Activation::tanh, false, rng);
  s.z = TwoLayerBlock::create(predictor_input_width(schema.essential.size()), kPredictorHidden, 1,
                              Activation::selu, Activation::selu, true, rng);
  s.normalizer = normalizer;
  s.schema = std::move(schema);
  return s;
}

TwoLayerBlock& ModelState::block(Component c) {
  switch (c) {
    case Component::f: return f;
    case Component::g: return g;
    case Component::h: return h;
    case Component::z: break;
  }
  return z;
}

const TwoLayerBlock& ModelState::block(Component c) const {
  return const_cast<ModelState*>(this)->block(c);
}

void ModelState::set_dropout(double rate) {
  for (auto c : kAllComponents) block(c).dropout_rate = rate;
}

void ModelState::validate() const {
  schema.validate();
  for (auto c : kAllComponents) block(c).validate();
  auto expect = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorKind::shape, "model: " + what);
  };
  expect(f.input_dim() == 3 && f.output_dim() == kScaleOutEmbedding, "f must map 3 -> F");
  expect(g.input_dim() == kPropertyVectorSize && g.output_dim() == kCodeDim, "g must map N -> M");
  expect(h.input_dim() == kCodeDim && h.output_dim() == kPropertyVectorSize, "h must map M -> N");
  expect(z.input_dim() == predictor_input_width(schema.essential.size()),
         "z input width must equal F + (m + 1) * M");
  expect(z.output_dim() == 1, "z must produce a scalar");
}

void set_trainable(ModelState& state, Component c, bool trainable) {
  state.trainable[static_cast<std::size_t>(c)] = trainable;
}

void reset(ModelState& state, Component c, std::uint64_t seed) {
  Rng rng(seed);
  state.block(c).reinitialize(rng);
}

void require_schema(const ModelState& state, const PropertySchema& schema) {
  if (state.schema.essential.size() != schema.essential.size()) {
    throw Error(ErrorKind::schema,
                "schema mismatch: model has " + std::to_string(state.schema.essential.size()) +
                    " essential properties, data has " + std::to_string(schema.essential.size()));
  }
  if (!(state.schema == schema)) {
    throw Error(ErrorKind::schema, "schema mismatch: model " + state.schema.describe() +
                                       " vs data " + schema.describe());
  }
}

ModelInput prepare_input(const ModelState& state, long long scale_out, const PropertyMap& props) {
  ModelInput in;
  in.scale_features = state.normalizer.normalize(scaleout_features(scale_out));
  for (const auto& [name, value] : props) {
    const PropertySpec* spec = state.schema.find(name);
    if (spec == nullptr) throw Error(ErrorKind::schema, "unknown property '" + name + "'");
    if (spec->kind != value.kind()) {
      throw Error(ErrorKind::schema, "property '" + name + "' must be " + to_string(spec->kind));
    }
  }
  for (const auto& spec : state.schema.essential) {
    const auto it = props.find(spec.name);
    if (it == props.end()) {
      throw Error(ErrorKind::schema, "missing essential property '" + spec.name + "'");
    }
    in.property_vectors.push_back(encode_property(it->second));
  }
  in.essential_count = in.property_vectors.size();
  for (const auto& spec : state.schema.optional) {
    const auto it = props.find(spec.name);
    if (it != props.end()) in.property_vectors.push_back(encode_property(it->second));
  }
  return in;
}

Prediction forward(const ModelState& state, const ModelInput& input, Mode mode, Rng* rng,
                   ForwardTrace* trace, bool reconstruct) {
  const std::size_t m = input.essential_count;
  if (m != state.schema.essential.size() || input.property_vectors.size() < m) {
    throw Error(ErrorKind::schema, "forward: input does not match the model's essential properties");
  }
  const std::size_t total = input.property_vectors.size();
  const std::size_t n_optional = total - m;
  if (trace != nullptr) {
    trace->g.resize(total);
    trace->h.resize(reconstruct ? total : 0);
  }

  Prediction out;
  const Vector e = forward_block(state.f, input.scale_features, mode, rng,
                                 trace ? &trace->f : nullptr);
  out.codes.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    out.codes.push_back(forward_block(state.g, input.property_vectors[i], mode, rng,
                                      trace ? &trace->g[i] : nullptr));
    if (reconstruct) {
      out.reconstructions.push_back(forward_block(state.h, out.codes.back(), mode, rng,
                                                  trace ? &trace->h[i] : nullptr));
    }
  }

  Vector r;
  r.reserve(predictor_input_width(m));
  r.insert(r.end(), e.begin(), e.end());
  for (std::size_t i = 0; i < m; ++i) r.insert(r.end(), out.codes[i].begin(), out.codes[i].end());
  Vector mean(kCodeDim, 0.0);
  for (std::size_t i = m; i < total; ++i)
    for (std::size_t k = 0; k < kCodeDim; ++k) mean[k] += out.codes[i][k];
  if (n_optional > 0)
    for (double& v : mean) v /= static_cast<double>(n_optional);
  r.insert(r.end(), mean.begin(), mean.end());

  out.runtime_seconds = forward_block(state.z, r, mode, rng, trace ? &trace->z : nullptr)[0];
  out.negative = out.runtime_seconds < 0.0;
  return out;
}

Prediction forward(const ModelState& state, long long scale_out, const PropertyMap& props,
                   Mode mode, Rng* rng) {
  return forward(state, prepare_input(state, scale_out, props), mode, rng);
}

double predict_runtime(const ModelState& state, long long scale_out, const PropertyMap& props) {
  return forward(state, prepare_input(state, scale_out, props), Mode::infer, nullptr, nullptr,
                 false)
      .runtime_seconds;
}

ModelGrad ModelGrad::zeros_like(const ModelState& state) {
  ModelGrad g;
  for (auto c : kAllComponents) g[c] = BlockGrad::zeros_like(state.block(c));
  return g;
}

void ModelGrad::clear() {
  for (auto& b : blocks) b.clear();
}

namespace {

std::size_t count_property_vectors(std::span<const ModelInput> inputs) {
  std::size_t n = 0;
  for (const auto& in : inputs) n += in.property_vectors.size();
  return n;
}

LossTerms evaluate_loss(const ModelState& state, std::span<const ModelInput> inputs,
                        std::span<const double> targets, const LossOptions& options, Mode mode,
                        Rng* rng, ModelGrad* grad) {
  if (inputs.empty()) throw Error(ErrorKind::insufficient_data, "joint_loss: empty batch");
  if (inputs.size() != targets.size()) throw Error(ErrorKind::shape, "joint_loss: target count mismatch");

  const bool reconstruct = options.include_reconstruction;
  const double batch = static_cast<double>(inputs.size());
  const std::size_t n_vectors = count_property_vectors(inputs);
  const double recon_norm =
      n_vectors > 0 ? 1.0 / (static_cast<double>(n_vectors) * kPropertyVectorSize) : 0.0;

  const bool train_f = grad && state.is_trainable(Component::f);
  const bool train_g = grad && state.is_trainable(Component::g);
  const bool train_h = grad && state.is_trainable(Component::h);
  const bool train_z = grad && state.is_trainable(Component::z);
  const bool need_dr = train_f || train_g;

  LossTerms terms;
  ForwardTrace trace;
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    const ModelInput& in = inputs[b];
    const Prediction p = forward(state, in, mode, rng, grad ? &trace : nullptr, reconstruct);
    const double pred[1] = {p.runtime_seconds};
    const double target[1] = {targets[b]};
    terms.runtime += huber_loss(pred, target, options.huber_delta) / batch;

    std::vector<Vector> d_recon;
    if (reconstruct) {
      for (std::size_t i = 0; i < p.reconstructions.size(); ++i) {
        const Vector& rec = p.reconstructions[i];
        const Vector& orig = in.property_vectors[i];
        Vector d(rec.size());
        for (std::size_t k = 0; k < rec.size(); ++k) {
          const double diff = rec[k] - orig[k];
          terms.reconstruction += diff * diff * recon_norm;
          d[k] = options.reconstruction_weight * 2.0 * diff * recon_norm;
        }
        d_recon.push_back(std::move(d));
      }
    }
    if (grad == nullptr) continue;

    const double d_pred = huber_gradient(pred, target, options.huber_delta)[0] / batch;
    const std::size_t m = in.essential_count;
    const std::size_t total = in.property_vectors.size();
    std::vector<Vector> d_codes(total, Vector(kCodeDim, 0.0));

    if (train_z || need_dr) {
      const double d_out[1] = {d_pred};
      const Vector dr = backward_block(state.z, trace.z, d_out, (*grad)[Component::z]);
      if (train_f) {
        backward_block(state.f, trace.f, std::span<const double>(dr).first(kScaleOutEmbedding),
                       (*grad)[Component::f]);
      }
      const std::size_t n_optional = total - m;
      for (std::size_t i = 0; i < total; ++i) {
        const bool essential = i < m;
        const std::size_t offset = kScaleOutEmbedding + (essential ? i : m) * kCodeDim;
        const double share = essential ? 1.0 : 1.0 / static_cast<double>(n_optional);
        for (std::size_t k = 0; k < kCodeDim; ++k) d_codes[i][k] = dr[offset + k] * share;
      }
    }
    if (reconstruct && (train_h || train_g)) {
      for (std::size_t i = 0; i < total; ++i) {
        const Vector dc = backward_block(state.h, trace.h[i], d_recon[i], (*grad)[Component::h]);
        for (std::size_t k = 0; k < kCodeDim; ++k) d_codes[i][k] += dc[k];
      }
    }
    if (train_g) {
      for (std::size_t i = 0; i < total; ++i) {
        backward_block(state.g, trace.g[i], d_codes[i], (*grad)[Component::g]);
      }
    }
  }
  terms.total = terms.runtime + (reconstruct ? options.reconstruction_weight * terms.reconstruction : 0.0);
  if (!std::isfinite(terms.total)) {
    throw Error(ErrorKind::non_finite, "joint_loss: loss is not finite");
  }
  return terms;
}

}  // namespace

LossTerms joint_loss(const ModelState& state, std::span<const ModelInput> inputs,
                     std::span<const double> targets, const LossOptions& options, Mode mode,
                     Rng* rng) {
  return evaluate_loss(state, inputs, targets, options, mode, rng, nullptr);
}

LossTerms joint_loss(const ModelState& state, std::span<const RunRecord> batch,
                     const LossOptions& options, Mode mode, Rng* rng) {
  std::vector<ModelInput> inputs;
  std::vector<double> targets;
  for (const auto& rec : batch) {
    inputs.push_back(prepare_input(state, rec.scale_out, rec.properties));
    targets.push_back(rec.runtime_seconds);
  }
  return evaluate_loss(state, inputs, targets, options, mode, rng, nullptr);
}

LossTerms joint_loss_gradient(const ModelState& state, std::span<const ModelInput> inputs,
                              std::span<const double> targets, const LossOptions& options,
                              Mode mode, Rng* rng, ModelGrad& grad) {
  return evaluate_loss(state, inputs, targets, options, mode, rng, &grad);
}

// ---- serialization ----

namespace {

constexpr char kMagic[8] = {'B', 'L', 'M', 'Y', 'M', 'D', 'L', '\0'};

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void raw(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    const auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    const auto b = take(n);
    return {reinterpret_cast<const char*>(b.data()), b.size()};
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw Error(ErrorKind::corrupt_file, "model file is truncated");
    const auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void write_schema_list(ByteWriter& w, const std::vector<PropertySpec>& specs) {
  w.u32(static_cast<std::uint32_t>(specs.size()));
  for (const auto& s : specs) {
    w.u8(static_cast<std::uint8_t>(s.kind));
    w.str(s.name);
  }
}

std::vector<PropertySpec> read_schema_list(ByteReader& r) {
  const std::uint32_t n = r.u32();
  if (n > 4096) throw Error(ErrorKind::corrupt_file, "implausible property count in model file");
  std::vector<PropertySpec> specs;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint8_t kind = r.u8();
    if (kind > 1) throw Error(ErrorKind::corrupt_file, "invalid property kind in model file");
    specs.push_back({r.str(), static_cast<PropertyKind>(kind)});
  }
  return specs;
}

void write_block(ByteWriter& w, const TwoLayerBlock& b) {
  w.u8(static_cast<std::uint8_t>(b.hidden_act));
  w.u8(static_cast<std::uint8_t>(b.output_act));
  w.u8(b.bias ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(b.input_dim()));
  w.u32(static_cast<std::uint32_t>(b.hidden_dim()));
  w.u32(static_cast<std::uint32_t>(b.output_dim()));
  for (auto view : parameter_views(b))
    for (double v : view) w.f64(v);
}

TwoLayerBlock read_block(ByteReader& r) {
  TwoLayerBlock b;
  const std::uint8_t acts[2] = {r.u8(), r.u8()};
  for (auto a : acts)
    if (a > 2) throw Error(ErrorKind::corrupt_file, "invalid activation tag in model file");
  b.hidden_act = static_cast<Activation>(acts[0]);
  b.output_act = static_cast<Activation>(acts[1]);
  const std::uint8_t bias = r.u8();
  if (bias > 1) throw Error(ErrorKind::corrupt_file, "invalid bias flag in model file");
  b.bias = bias == 1;
  const std::uint32_t in = r.u32(), hidden = r.u32(), out = r.u32();
  if (in == 0 || hidden == 0 || out == 0 || in > 100000 || hidden > 100000 || out > 100000) {
    throw Error(ErrorKind::corrupt_file, "implausible block dimensions in model file");
  }
  b.w1 = Matrix(hidden, in);
  b.w2 = Matrix(out, hidden);
  b.b1 = b.bias ? Vector(hidden) : Vector{};
  b.b2 = b.bias ? Vector(out) : Vector{};
  for (auto view : parameter_views(b))
    for (double& v : view) v = r.f64();
  return b;
}

std::vector<std::uint8_t> payload_bytes(const ModelState& state) {
  ByteWriter w;
  for (std::uint32_t d : {std::uint32_t{kScaleOutEmbedding}, std::uint32_t{kCodeDim},
                          std::uint32_t{kPropertyVectorSize}, std::uint32_t{kScaleOutHidden},
                          std::uint32_t{kAutoencoderHidden}, std::uint32_t{kPredictorHidden},
                          static_cast<std::uint32_t>(state.z.input_dim())})
    w.u32(d);
  write_schema_list(w, state.schema.essential);
  write_schema_list(w, state.schema.optional);
  for (double v : state.normalizer.min) w.f64(v);
  for (double v : state.normalizer.max) w.f64(v);
  for (auto c : kAllComponents) write_block(w, state.block(c));
  return std::move(w.bytes());
}

std::uint64_t fnv1a64_bytes(std::span<const std::uint8_t> bytes) {
  return fnv1a64({reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

}  // namespace

std::uint64_t ModelState::fingerprint() const { return fnv1a64_bytes(payload_bytes(*this)); }

std::string fingerprint_hex(std::uint64_t fingerprint) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fingerprint;
  return os.str();
}

std::vector<std::uint8_t> serialize(const ModelState& state) {
  state.validate();
  const auto payload = payload_bytes(state);
  ByteWriter w;
  w.raw({reinterpret_cast<const std::uint8_t*>(kMagic), sizeof(kMagic)});
  w.u32(kModelFormatVersion);
  w.raw(payload);
  w.u64(fnv1a64_bytes(payload));
  return std::move(w.bytes());
}

ModelState deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.take(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::corrupt_file, "not a bellamy model file (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion) {
    throw Error(ErrorKind::version, "unsupported model format version " + std::to_string(version) +
                                        " (expected " + std::to_string(kModelFormatVersion) + ")");
  }
  const std::size_t payload_begin = r.position();
  std::uint32_t dims[7];
  for (auto& d : dims) d = r.u32();
  if (dims[0] != kScaleOutEmbedding || dims[1] != kCodeDim || dims[2] != kPropertyVectorSize ||
      dims[3] != kScaleOutHidden || dims[4] != kAutoencoderHidden || dims[5] != kPredictorHidden) {
    throw Error(ErrorKind::version, "model file uses different network dimensions");
  }
  ModelState s;
  s.schema.essential = read_schema_list(r);
  s.schema.optional = read_schema_list(r);
  for (double& v : s.normalizer.min) v = r.f64();
  for (double& v : s.normalizer.max) v = r.f64();
  for (auto c : kAllComponents) s.block(c) = read_block(r);
  const std::size_t payload_end = r.position();
  const std::uint64_t stored = r.u64();
  if (r.remaining() != 0) throw Error(ErrorKind::corrupt_file, "trailing bytes after model payload");
  const auto payload = bytes.subspan(payload_begin, payload_end - payload_begin);
  if (fnv1a64_bytes(payload) != stored) {
    throw Error(ErrorKind::corrupt_file, "model file checksum mismatch");
  }
  if (dims[6] != s.z.input_dim()) throw Error(ErrorKind::corrupt_file, "z width header mismatch");
  try {
    s.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::corrupt_file, std::string("invalid model file: ") + e.what());
  }
  for (auto c : kAllComponents)
    for (auto view : parameter_views(s.block(c)))
      if (!all_finite(view)) throw Error(ErrorKind::corrupt_file, "model file holds non-finite weights");
  return s;
}

void save(const ModelState& state, const std::filesystem::path& path) {
  const auto bytes = serialize(state);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::io, "failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorKind::io, "cannot move model into place at " + path.string());
  }
}

ModelState load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open model file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

ModelState load(const std::filesystem::path& path, const PropertySchema& expected) {
  ModelState s = load(path);
  require_schema(s, expected);
  return s;
}

}  // namespace bellamy

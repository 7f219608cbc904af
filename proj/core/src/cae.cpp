#include "dfetrack/cae.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "dfetrack/error.hpp"
#include "dfetrack/rng.hpp"

namespace dfetrack::cae {
namespace {

using Eigen::Index;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Layer = CaeModel::Layer;
using Kind = Layer::Kind;

// Upper bound on the doubles held by one im2col chunk (32 MiB).
constexpr Index kChunkBudget = Index{1} << 22;

Index chunk_length(Index rows) { return std::max<Index>(1, kChunkBudget / std::max<Index>(rows, 1)); }

// Patches of a valid k x k window for output positions [p0, p0 + len) of
// `in`. Row (ky * k + kx) * c + ch, one column per position.
void im2col(const Tensor& in, int k, Index p0, Index len, Eigen::MatrixXd& cols) {
  const int ho = in.h - k + 1;
  const int wo = in.w - k + 1;
  const Index plane = static_cast<Index>(ho) * wo;
  const int c = in.c;
  cols.resize(static_cast<Index>(k) * k * c, len);
  for (Index q = 0; q < len; ++q) {
    const Index p = p0 + q;
    const Index b = p / plane;
    const Index r = p % plane;
    const Index y = r / wo;
    const Index x = r % wo;
    double* dst = cols.col(q).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* src = in.data.col((b * in.h + y + ky) * in.w + x + kx).data();
        std::copy(src, src + c, dst + (ky * k + kx) * c);
      }
    }
  }
}

// Adjoint of im2col: scatters patch columns for grid positions
// [p0, p0 + len) into `out`, accumulating overlaps.
void col2im_add(const Eigen::MatrixXd& cols, int k, Index p0, Tensor& out) {
  const int gh = out.h - k + 1;
  const int gw = out.w - k + 1;
  const Index plane = static_cast<Index>(gh) * gw;
  const int c = out.c;
  for (Index q = 0; q < cols.cols(); ++q) {
    const Index p = p0 + q;
    const Index b = p / plane;
    const Index r = p % plane;
    const Index y = r / gw;
    const Index x = r % gw;
    const double* src = cols.col(q).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* dst = out.data.col((b * out.h + y + ky) * out.w + x + kx).data();
        const double* s = src + (ky * k + kx) * c;
        for (int ch = 0; ch < c; ++ch) dst[ch] += s[ch];
      }
    }
  }
}

Eigen::Map<const RowMatrix> conv_weight(const ParamTensor& p, const Layer& l) {
  return {p.values.data(), l.out_channels, static_cast<Index>(l.kernel) * l.kernel * l.in_channels};
}

Eigen::Map<const RowMatrix> tconv_weight(const ParamTensor& p, const Layer& l) {
  return {p.values.data(), static_cast<Index>(l.kernel) * l.kernel * l.out_channels, l.in_channels};
}

Eigen::Map<const Eigen::VectorXd> vec(const ParamTensor& p) {
  return {p.values.data(), static_cast<Index>(p.values.size())};
}

Tensor conv_forward(const Tensor& in, const Layer& l, const std::vector<ParamTensor>& params) {
  Tensor out{in.n, l.out_channels, in.h - l.kernel + 1, in.w - l.kernel + 1, {}};
  const Index total = static_cast<Index>(out.positions());
  out.data.resize(out.c, total);
  const auto w = conv_weight(params[l.weight], l);
  Eigen::MatrixXd cols;
  const Index step = chunk_length(w.cols());
  for (Index p0 = 0; p0 < total; p0 += step) {
    const Index len = std::min(step, total - p0);
    im2col(in, l.kernel, p0, len, cols);
    out.data.middleCols(p0, len).noalias() = w * cols;
  }
  if (l.bias >= 0) out.data.colwise() += vec(params[l.bias]);
  return out;
}

Tensor tconv_forward(const Tensor& in, const Layer& l, const std::vector<ParamTensor>& params) {
  Tensor out{in.n, l.out_channels, in.h + l.kernel - 1, in.w + l.kernel - 1, {}};
  out.data = Eigen::MatrixXd::Zero(out.c, static_cast<Index>(out.positions()));
  const auto w = tconv_weight(params[l.weight], l);
  const Index total = static_cast<Index>(in.positions());
  const Index step = chunk_length(w.rows());
  Eigen::MatrixXd cols;
  for (Index p0 = 0; p0 < total; p0 += step) {
    const Index len = std::min(step, total - p0);
    cols.noalias() = w * in.data.middleCols(p0, len);
    col2im_add(cols, l.kernel, p0, out);
  }
  if (l.bias >= 0) out.data.colwise() += vec(params[l.bias]);
  return out;
}

void batchnorm_inference(Tensor& t, const Layer& l, const std::vector<ParamTensor>& params,
                         double eps) {
  const auto gamma = vec(params[l.gamma]);
  const auto beta = vec(params[l.beta]);
  const auto mean = vec(params[l.running_mean]);
  const auto var = vec(params[l.running_var]);
  const Eigen::ArrayXd scale = gamma.array() / (var.array() + eps).sqrt();
  const Eigen::VectorXd shift = beta.array() - mean.array() * scale;
  t.data = scale.matrix().asDiagonal() * t.data;
  t.data.colwise() += shift;
}

struct BatchStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;  // biased
};

BatchStats batch_stats(const Tensor& t) {
  if (t.positions() < 2) {
    throw InvalidInput("batch normalisation in training mode needs more than one value per channel");
  }
  BatchStats s;
  s.mean = t.data.rowwise().mean();
  s.var = (t.data.colwise() - s.mean).array().square().rowwise().mean();
  return s;
}

// Training-mode forward through every layer. Fills `cache` when given and
// blends batch statistics into `stats_sink` when given.
Tensor forward_training(const CaeModel& model, const Tensor& input, ForwardCache* cache,
                        std::vector<ParamTensor>* stats_sink) {
  const auto& params = model.params();
  const auto& cfg = model.config();
  if (cache) cache->entries.assign(model.layer_count(), {});
  Tensor x = input;
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    const Layer& l = model.layers()[i];
    ForwardCache::Entry* e = cache ? &cache->entries[i] : nullptr;
    if (e && (l.kind == Kind::Conv || l.kind == Kind::TransposedConv)) e->input = x;
    switch (l.kind) {
      case Kind::Conv: x = conv_forward(x, l, params); break;
      case Kind::TransposedConv: x = tconv_forward(x, l, params); break;
      case Kind::BatchNorm: {
        const BatchStats s = batch_stats(x);
        const Eigen::VectorXd inv = (s.var.array() + cfg.bn_epsilon).rsqrt();
        x.data.colwise() -= s.mean;
        x.data = inv.asDiagonal() * x.data;
        if (e) {
          e->xhat = x.data;
          e->inv_std = inv;
        }
        x.data = vec(params[l.gamma]).asDiagonal() * x.data;
        x.data.colwise() += vec(params[l.beta]);
        if (stats_sink) {
          const double m = cfg.bn_momentum;
          const double n = static_cast<double>(x.positions());
          auto& rm = (*stats_sink)[l.running_mean].values;
          auto& rv = (*stats_sink)[l.running_var].values;
          for (std::size_t ch = 0; ch < rm.size(); ++ch) {
            rm[ch] = m * rm[ch] + (1.0 - m) * s.mean[static_cast<Index>(ch)];
            rv[ch] = m * rv[ch] + (1.0 - m) * s.var[static_cast<Index>(ch)] * n / (n - 1.0);
          }
        }
        break;
      }
      case Kind::Relu: x.data = x.data.cwiseMax(0.0); break;
      case Kind::Sigmoid: x.data = 1.0 / (1.0 + (-x.data.array()).exp()); break;
    }
    if (e && (l.kind == Kind::Relu || l.kind == Kind::Sigmoid)) e->output = x;
  }
  return x;
}

void check_input(const CaeConfig& cfg, const Tensor& t, bool full_size) {
  if (t.c != cfg.input_channels) {
    throw ShapeError(fmt::format("expected {} input channels, got {}", cfg.input_channels, t.c));
  }
  if (full_size && (t.h != cfg.input_size || t.w != cfg.input_size)) {
    throw ShapeError(fmt::format("expected {0}x{0} input, got {1}x{2}", cfg.input_size, t.w, t.h));
  }
  if (t.n < 1 || t.data.rows() != t.c || t.data.cols() != static_cast<Index>(t.positions())) {
    throw ShapeError("tensor storage does not match its declared shape");
  }
}

}  // namespace

CaeConfig CaeConfig::desk_scale() {
  CaeConfig c;
  c.encoder_blocks = {{8, 7}, {16, 7}, {16, 7}, {32, 7}, {128, 7}};
  return c;
}

void CaeConfig::validate() const {
  if (input_size < 1 || input_channels < 1) throw InvalidInput("input size and channels must be positive");
  if (encoder_blocks.empty()) throw InvalidInput("autoencoder needs at least one encoder block");
  for (std::size_t i = 0; i < encoder_blocks.size(); ++i) {
    const auto& b = encoder_blocks[i];
    if (b.filters < 1) throw InvalidInput(fmt::format("block {} has {} filters", i, b.filters));
    if (b.kernel < 1 || b.kernel % 2 == 0) {
      throw InvalidInput(fmt::format("block {} kernel {} must be odd and positive", i, b.kernel));
    }
  }
  if (latent_extent() < 1) {
    throw InvalidInput(fmt::format("encoder blocks shrink a {0}x{0} input below one pixel", input_size));
  }
  if (!(bn_epsilon > 0.0)) throw InvalidInput("batch-norm epsilon must be positive");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) throw InvalidInput("batch-norm momentum must lie in [0, 1)");
}

std::vector<int> CaeConfig::encoder_extents() const {
  std::vector<int> out;
  int e = input_size;
  for (const auto& b : encoder_blocks) {
    e -= b.kernel - 1;
    out.push_back(e);
  }
  return out;
}

int CaeConfig::latent_extent() const {
  const auto e = encoder_extents();
  return e.empty() ? input_size : e.back();
}

int CaeConfig::latent_dim() const {
  const int e = latent_extent();
  return encoder_blocks.empty() ? 0 : encoder_blocks.back().filters * e * e;
}

nlohmann::json CaeConfig::to_json() const {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : encoder_blocks) blocks.push_back({{"filters", b.filters}, {"kernel", b.kernel}});
  return {{"input_size", input_size},   {"input_channels", input_channels},
          {"encoder_blocks", blocks},   {"seed", seed},
          {"bn_epsilon", bn_epsilon},   {"bn_momentum", bn_momentum}};
}

CaeConfig CaeConfig::from_json(const nlohmann::json& j) {
  CaeConfig c;
  try {
    c.input_size = j.value("input_size", c.input_size);
    c.input_channels = j.value("input_channels", c.input_channels);
    c.seed = j.value("seed", c.seed);
    c.bn_epsilon = j.value("bn_epsilon", c.bn_epsilon);
    c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
    if (j.contains("encoder_blocks")) {
      for (const auto& b : j.at("encoder_blocks")) {
        c.encoder_blocks.push_back({b.at("filters").get<int>(), b.at("kernel").get<int>()});
      }
    } else {
      c.encoder_blocks = desk_scale().encoder_blocks;
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed autoencoder config: ") + e.what());
  }
  c.validate();
  return c;
}

Tensor make_batch(std::span<const PlanarImage> crops) {
  if (crops.empty()) throw InvalidInput("empty batch");
  const auto& first = crops.front();
  Tensor t{static_cast<int>(crops.size()), first.channels(), first.height(), first.width(), {}};
  t.data.resize(t.c, static_cast<Index>(t.positions()));
  const Index plane = static_cast<Index>(t.h) * t.w;
  for (int b = 0; b < t.n; ++b) {
    const auto& img = crops[static_cast<std::size_t>(b)];
    if (img.width() != t.w || img.height() != t.h || img.channels() != t.c) {
      throw ShapeError(fmt::format("crop {} is {}x{}x{}, expected {}x{}x{}", b, img.width(), img.height(),
                                   img.channels(), t.w, t.h, t.c));
    }
    for (int c = 0; c < t.c; ++c) {
      const auto src = img.plane(c);
      for (Index p = 0; p < plane; ++p) t.data(c, b * plane + p) = src[static_cast<std::size_t>(p)];
    }
  }
  return t;
}

PlanarImage tensor_sample(const Tensor& t, int sample, ColorSpace space) {
  if (sample < 0 || sample >= t.n) throw InvalidInput("sample index out of range");
  PlanarImage img(t.w, t.h, t.c, space);
  const Index plane = static_cast<Index>(t.h) * t.w;
  for (int c = 0; c < t.c; ++c) {
    auto dst = img.plane(c);
    for (Index p = 0; p < plane; ++p) dst[static_cast<std::size_t>(p)] = t.data(c, sample * plane + p);
  }
  return img;
}

CaeModel::CaeModel(CaeConfig config) : config_(std::move(config)) {
  config_.validate();
  auto add_param = [&](std::string name, std::vector<int> shape, double fill, bool trainable) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    params_.push_back({std::move(name), std::move(shape), std::vector<double>(n, fill), trainable});
    return static_cast<int>(params_.size() - 1);
  };
  auto add_bn = [&](const std::string& prefix, int channels) {
    Layer l;
    l.kind = Kind::BatchNorm;
    l.name = prefix + ".bn";
    l.in_channels = l.out_channels = channels;
    l.gamma = add_param(l.name + ".gamma", {channels}, 1.0, true);
    l.beta = add_param(l.name + ".beta", {channels}, 0.0, true);
    l.running_mean = add_param(l.name + ".running_mean", {channels}, 0.0, false);
    l.running_var = add_param(l.name + ".running_var", {channels}, 1.0, false);
    layers_.push_back(l);
  };
  auto add_act = [&](const std::string& prefix, Kind kind) {
    Layer l;
    l.kind = kind;
    l.name = prefix + (kind == Kind::Relu ? ".relu" : ".sigmoid");
    layers_.push_back(l);
  };

  const auto& blocks = config_.encoder_blocks;
  int channels = config_.input_channels;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string prefix = fmt::format("enc{}", i);
    Layer l;
    l.kind = Kind::Conv;
    l.name = prefix + ".conv";
    l.in_channels = channels;
    l.out_channels = blocks[i].filters;
    l.kernel = blocks[i].kernel;
    l.weight = add_param(l.name + ".weight", {l.out_channels, l.kernel, l.kernel, l.in_channels}, 0.0, true);
    layers_.push_back(l);
    add_bn(prefix, l.out_channels);
    add_act(prefix, Kind::Relu);
    channels = l.out_channels;
  }
  encoder_layers_ = layers_.size();

  for (std::size_t i = blocks.size(); i-- > 0;) {
    const bool last = i == 0;
    const std::string prefix = last ? std::string("out") : fmt::format("dec{}", i);
    Layer l;
    l.kind = Kind::TransposedConv;
    l.name = prefix + ".tconv";
    l.in_channels = channels;
    l.out_channels = last ? config_.input_channels : blocks[i - 1].filters;
    l.kernel = blocks[i].kernel;
    l.weight = add_param(l.name + ".weight", {l.kernel, l.kernel, l.out_channels, l.in_channels}, 0.0, true);
    if (last) l.bias = add_param(l.name + ".bias", {l.out_channels}, 0.0, true);
    layers_.push_back(l);
    if (last) {
      add_act(prefix, Kind::Sigmoid);
    } else {
      add_bn(prefix, l.out_channels);
      add_act(prefix, Kind::Relu);
    }
    channels = l.out_channels;
  }

  // He-uniform limits for layers feeding a rectifier, LeCun-uniform for the
  // sigmoid output.
  for (const auto& l : layers_) {
    if (l.weight < 0) continue;
    const double fan_in = static_cast<double>(l.kernel) * l.kernel * l.in_channels;
    const double limit = std::sqrt((l.bias >= 0 ? 3.0 : 6.0) / fan_in);
    CounterRng rng(hash_combine(config_.seed, static_cast<std::uint64_t>(l.weight)));
    for (double& v : params_[l.weight].values) v = rng.uniform(-limit, limit);
  }
  round_to_storage();
}

const ParamTensor& CaeModel::param(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw InvalidInput("no parameter named " + name);
}

ParamTensor& CaeModel::param(const std::string& name) {
  return const_cast<ParamTensor&>(std::as_const(*this).param(name));
}

std::size_t CaeModel::trainable_parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable) n += p.size();
  }
  return n;
}

std::string CaeModel::layer_name(std::size_t layer) const { return layers_.at(layer).name; }

Tensor CaeModel::run(const Tensor& input, std::size_t begin, std::size_t end) const {
  if (begin == 0) {
    check_input(config_, input, false);
  } else if (begin == encoder_layers_ && input.c != layers_[begin].in_channels) {
    throw ShapeError(fmt::format("latent has {} channels, decoder expects {}", input.c,
                                 layers_[begin].in_channels));
  }
  Tensor x = input;
  for (std::size_t i = begin; i < end; ++i) {
    const Layer& l = layers_[i];
    switch (l.kind) {
      case Kind::Conv:
        if (x.h < l.kernel || x.w < l.kernel) {
          throw ShapeError(fmt::format("{}: {}x{} input is smaller than kernel {}", l.name, x.w, x.h, l.kernel));
        }
        x = conv_forward(x, l, params_);
        break;
      case Kind::TransposedConv: x = tconv_forward(x, l, params_); break;
      case Kind::BatchNorm: batchnorm_inference(x, l, params_, config_.bn_epsilon); break;
      case Kind::Relu: x.data = x.data.cwiseMax(0.0); break;
      case Kind::Sigmoid: x.data = 1.0 / (1.0 + (-x.data.array()).exp()); break;
    }
  }
  return x;
}

Tensor CaeModel::forward_train(const Tensor& input, ForwardCache& cache, bool update_running_stats) {
  check_input(config_, input, true);
  return forward_training(*this, input, &cache, update_running_stats ? &params_ : nullptr);
}

std::vector<std::array<int, 3>> CaeModel::symbolic_shapes() const {
  std::vector<std::array<int, 3>> out;
  int c = config_.input_channels;
  int e = config_.input_size;
  for (const auto& l : layers_) {
    if (l.kind == Kind::Conv) {
      c = l.out_channels;
      e -= l.kernel - 1;
    } else if (l.kind == Kind::TransposedConv) {
      c = l.out_channels;
      e += l.kernel - 1;
    }
    out.push_back({c, e, e});
  }
  return out;
}

std::vector<std::array<int, 3>> CaeModel::runtime_shapes(const Tensor& input) const {
  std::vector<std::array<int, 3>> out;
  Tensor x = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = run(x, i, i + 1);
    out.push_back({x.c, x.h, x.w});
  }
  return out;
}

void CaeModel::freeze_batchnorm_statistics(const Tensor& batch) {
  check_input(config_, batch, true);
  Tensor x = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (l.kind == Kind::BatchNorm) {
      const BatchStats s = batch_stats(x);
      for (Index ch = 0; ch < s.mean.size(); ++ch) {
        params_[l.running_mean].values[static_cast<std::size_t>(ch)] = s.mean[ch];
        params_[l.running_var].values[static_cast<std::size_t>(ch)] = s.var[ch];
      }
    }
    x = run(x, i, i + 1);
  }
}

void CaeModel::round_to_storage() {
  for (auto& p : params_) {
    for (double& v : p.values) v = static_cast<double>(static_cast<float>(v));
  }
}

match::Descriptor DescriptorField::at(std::size_t k) const {
  const auto col = codes.col(static_cast<Index>(k));
  return {std::vector<double>(col.data(), col.data() + col.size())};
}

namespace {

match::Descriptor flatten_latent(const Tensor& z, int sample) {
  const Index plane = static_cast<Index>(z.h) * z.w;
  match::Descriptor d;
  d.values.reserve(static_cast<std::size_t>(plane * z.c));
  for (Index p = 0; p < plane; ++p) {
    for (int c = 0; c < z.c; ++c) d.values.push_back(z.data(c, sample * plane + p));
  }
  return d;
}

void check_lab01_crop(const CaeConfig& cfg, const PlanarImage& crop) {
  if (crop.width() != cfg.input_size || crop.height() != cfg.input_size ||
      crop.channels() != cfg.input_channels) {
    throw ShapeError(fmt::format("crop is {}x{}x{}, model expects {}x{}x{}", crop.width(), crop.height(),
                                 crop.channels(), cfg.input_size, cfg.input_size, cfg.input_channels));
  }
}

}  // namespace

match::Descriptor encode(const CaeModel& model, const PlanarImage& crop) {
  check_lab01_crop(model.config(), crop);
  return flatten_latent(model.encode_tensor(make_batch({&crop, 1})), 0);
}

match::Descriptor encode(const CaeModel& model, const Crop& crop) { return encode(model, crop.image); }

std::vector<match::Descriptor> encode_batch(const CaeModel& model, std::span<const PlanarImage> crops) {
  for (const auto& c : crops) check_lab01_crop(model.config(), c);
  std::vector<match::Descriptor> out;
  if (crops.empty()) return out;
  const Tensor z = model.encode_tensor(make_batch(crops));
  out.reserve(crops.size());
  for (int b = 0; b < z.n; ++b) out.push_back(flatten_latent(z, b));
  return out;
}

DescriptorField encode_dense(const CaeModel& model, const PlanarImage& lab01) {
  const auto& cfg = model.config();
  if (cfg.latent_extent() != 1) {
    throw PreconditionError("dense encoding needs an encoder that reduces a crop to 1x1");
  }
  if (lab01.channels() != cfg.input_channels) {
    throw ShapeError(fmt::format("image has {} channels, model expects {}", lab01.channels(), cfg.input_channels));
  }
  DescriptorField field;
  field.grid = match::position_grid(lab01.width(), lab01.height(), cfg.input_size, 1);
  const Tensor z = model.encode_tensor(make_batch({&lab01, 1}));
  field.codes = z.data;
  return field;
}

match::SsrLandscape dense_landscape(const DescriptorField& field, const match::Descriptor& ref) {
  if (ref.size() != static_cast<std::size_t>(field.codes.rows())) {
    throw InvalidInput(fmt::format("reference has {} dimensions, field has {}", ref.size(), field.codes.rows()));
  }
  match::SsrLandscape land;
  land.grid = field.grid;
  land.ssr.resize(static_cast<std::size_t>(field.codes.cols()));
  for (Index k = 0; k < field.codes.cols(); ++k) {
    land.ssr[static_cast<std::size_t>(k)] =
        match::ssr(ref.view(), {field.codes.col(k).data(), static_cast<std::size_t>(field.codes.rows())});
  }
  return land;
}

PlanarImage decode(const CaeModel& model, const match::Descriptor& code) {
  const auto& cfg = model.config();
  if (code.size() != static_cast<std::size_t>(cfg.latent_dim())) {
    throw ShapeError(fmt::format("latent has {} values, model expects {}", code.size(), cfg.latent_dim()));
  }
  const int e = cfg.latent_extent();
  const int c = cfg.encoder_blocks.back().filters;
  Tensor z{1, c, e, e, Eigen::MatrixXd(c, e * e)};
  for (int p = 0; p < e * e; ++p) {
    for (int ch = 0; ch < c; ++ch) z.data(ch, p) = code.values[static_cast<std::size_t>(p * c + ch)];
  }
  return tensor_sample(model.decode_tensor(z), 0, ColorSpace::LAB01);
}

double mse(const Tensor& output, const Tensor& target) {
  if (output.data.rows() != target.data.rows() || output.data.cols() != target.data.cols()) {
    throw ShapeError("output and target shapes differ");
  }
  if (output.data.size() == 0) throw InvalidInput("empty batch");
  return (output.data - target.data).squaredNorm() / static_cast<double>(output.data.size());
}

double reconstruction_loss(const CaeModel& model, const Tensor& batch) {
  check_input(model.config(), batch, true);
  return mse(model.reconstruct(batch), batch);
}

double reconstruction_loss(const CaeModel& model, std::span<const PlanarImage> crops) {
  return reconstruction_loss(model, make_batch(crops));
}

double training_loss(const CaeModel& model, const Tensor& batch) {
  check_input(model.config(), batch, true);
  return mse(forward_training(model, batch, nullptr, nullptr), batch);
}

Gradients backward(CaeModel& model, const Tensor& batch, const BackwardOptions& options) {
  if (batch.n < 2) throw InvalidInput("backward needs a batch of at least two crops for batch normalisation");
  ForwardCache cache;
  const Tensor out = model.forward_train(batch, cache, options.update_running_stats);

  const auto& params = model.params();
  Gradients g;
  g.values.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) g.values[i].assign(params[i].size(), 0.0);
  g.loss = mse(out, batch);
  if (!std::isfinite(g.loss)) throw NumericError("reconstruction loss is not finite");

  Eigen::MatrixXd dy = (2.0 / static_cast<double>(out.data.size())) * (out.data - batch.data);
  int cur_h = out.h;
  int cur_w = out.w;
  Eigen::MatrixXd cols;
  for (std::size_t i = model.layer_count(); i-- > 0;) {
    const Layer& l = model.layers()[i];
    const auto& e = cache.entries[i];
    switch (l.kind) {
      case Kind::Sigmoid:
        dy = (dy.array() * e.output.data.array() * (1.0 - e.output.data.array())).matrix();
        break;
      case Kind::Relu: dy = (e.output.data.array() > 0.0).select(dy, 0.0); break;
      case Kind::BatchNorm: {
        const auto gamma = vec(params[l.gamma]);
        const double n = static_cast<double>(dy.cols());
        const Eigen::VectorXd sum_dy = dy.rowwise().sum();
        const Eigen::VectorXd sum_dy_xhat = dy.cwiseProduct(e.xhat).rowwise().sum();
        Eigen::Map<Eigen::VectorXd>(g.values[l.gamma].data(), gamma.size()) = sum_dy_xhat;
        Eigen::Map<Eigen::VectorXd>(g.values[l.beta].data(), gamma.size()) = sum_dy;
        const Eigen::VectorXd scale = gamma.cwiseProduct(e.inv_std) / n;
        Eigen::MatrixXd dx = n * dy;
        dx.colwise() -= sum_dy;
        dx -= sum_dy_xhat.asDiagonal() * e.xhat;
        dy = scale.asDiagonal() * dx;
        break;
      }
      case Kind::Conv: {
        const Tensor& in = e.input;
        const auto w = conv_weight(params[l.weight], l);
        Eigen::Map<RowMatrix> dw(g.values[l.weight].data(), w.rows(), w.cols());
        if (l.bias >= 0) {
          Eigen::Map<Eigen::VectorXd>(g.values[l.bias].data(), l.out_channels) = dy.rowwise().sum();
        }
        Tensor din{in.n, in.c, in.h, in.w, Eigen::MatrixXd::Zero(in.c, static_cast<Index>(in.positions()))};
        const Index total = dy.cols();
        const Index step = chunk_length(w.cols());
        Eigen::MatrixXd dcols;
        for (Index p0 = 0; p0 < total; p0 += step) {
          const Index len = std::min(step, total - p0);
          im2col(in, l.kernel, p0, len, cols);
          dw.noalias() += dy.middleCols(p0, len) * cols.transpose();
          if (i > 0) {
            dcols.noalias() = w.transpose() * dy.middleCols(p0, len);
            col2im_add(dcols, l.kernel, p0, din);
          }
        }
        dy = std::move(din.data);
        cur_h = in.h;
        cur_w = in.w;
        break;
      }
      case Kind::TransposedConv: {
        const Tensor& in = e.input;
        const auto w = tconv_weight(params[l.weight], l);
        Eigen::Map<RowMatrix> dwt(g.values[l.weight].data(), w.rows(), w.cols());
        if (l.bias >= 0) {
          Eigen::Map<Eigen::VectorXd>(g.values[l.bias].data(), l.out_channels) = dy.rowwise().sum();
        }
        const Tensor dout{in.n, l.out_channels, cur_h, cur_w, std::move(dy)};
        Eigen::MatrixXd din(in.c, static_cast<Index>(in.positions()));
        const Index total = din.cols();
        const Index step = chunk_length(w.rows());
        for (Index p0 = 0; p0 < total; p0 += step) {
          const Index len = std::min(step, total - p0);
          im2col(dout, l.kernel, p0, len, cols);
          dwt.noalias() += cols * in.data.middleCols(p0, len).transpose();
          din.middleCols(p0, len).noalias() = w.transpose() * cols;
        }
        dy = std::move(din);
        cur_h = in.h;
        cur_w = in.w;
        break;
      }
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    bool frozen = !params[i].trainable;
    for (const auto& prefix : options.frozen_prefixes) {
      frozen = frozen || params[i].name.starts_with(prefix);
    }
    if (frozen) std::fill(g.values[i].begin(), g.values[i].end(), 0.0);
  }
  return g;
}

}  // namespace dfetrack::cae

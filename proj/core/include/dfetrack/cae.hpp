#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dfetrack/matchcore.hpp"
#include "dfetrack/raster.hpp"

namespace dfetrack::cae {

// One encoder block: valid convolution -> batch normalisation -> ReLU.
struct BlockSpec {
  int filters = 0;
  int kernel = 0;
  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

// Symmetric convolutional autoencoder layout. The decoder mirrors the
// encoder with transposed convolutions; its last layer has `input_channels`
// filters and a sigmoid.
struct CaeConfig {
  int input_size = 31;
  int input_channels = 3;
  std::vector<BlockSpec> encoder_blocks;
  std::uint64_t seed = 1;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.9;

  // 31x31x3 -> 1x1x128 with five 7x7 blocks (8, 16, 16, 32, 128 filters).
  static CaeConfig desk_scale();

  void validate() const;
  std::vector<int> encoder_extents() const;  // spatial size after each block
  int latent_extent() const;
  int latent_dim() const;
  int input_dim() const { return input_size * input_size * input_channels; }
  double compression_factor() const {
    return static_cast<double>(latent_dim()) / input_dim();
  }

  nlohmann::json to_json() const;
  static CaeConfig from_json(const nlohmann::json& j);
  friend bool operator==(const CaeConfig&, const CaeConfig&) = default;
};

// Activations for a batch: rows are channels, columns enumerate
// (sample, row, column) as (n * h + y) * w + x.
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  Eigen::MatrixXd data;

  std::size_t positions() const { return static_cast<std::size_t>(n) * h * w; }
};

Tensor make_batch(std::span<const PlanarImage> crops);
PlanarImage tensor_sample(const Tensor& t, int sample, ColorSpace space);

struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
  bool trainable = true;

  std::size_t size() const { return values.size(); }
};

enum class Mode { Training, Inference };

// Per-layer intermediates kept for backpropagation.
struct ForwardCache {
  struct Entry {
    Tensor input;
    Tensor output;
    Eigen::MatrixXd xhat;  // batch norm only
    Eigen::VectorXd inv_std;
  };
  std::vector<Entry> entries;
};

class CaeModel {
 public:
  CaeModel() = default;
  // Fan-in scaled uniform initialisation driven by config.seed.
  explicit CaeModel(CaeConfig config);

  const CaeConfig& config() const { return config_; }

  std::vector<ParamTensor>& params() { return params_; }
  const std::vector<ParamTensor>& params() const { return params_; }
  const ParamTensor& param(const std::string& name) const;
  ParamTensor& param(const std::string& name);
  std::size_t trainable_parameter_count() const;

  std::size_t encoder_layer_count() const { return encoder_layers_; }
  std::size_t layer_count() const { return layers_.size(); }
  std::string layer_name(std::size_t layer) const;

  // Inference-mode forward through layers [begin, end).
  Tensor run(const Tensor& input, std::size_t begin, std::size_t end) const;
  Tensor encode_tensor(const Tensor& input) const { return run(input, 0, encoder_layers_); }
  Tensor decode_tensor(const Tensor& latent) const {
    return run(latent, encoder_layers_, layers_.size());
  }
  Tensor reconstruct(const Tensor& input) const { return run(input, 0, layers_.size()); }

  // Training-mode forward over the full network. Uses batch statistics; the
  // running statistics are blended in when update_running_stats is set.
  Tensor forward_train(const Tensor& input, ForwardCache& cache, bool update_running_stats);

  // Output shape (c, h, w) after each layer, derived from the configuration
  // alone and observed at run time respectively.
  std::vector<std::array<int, 3>> symbolic_shapes() const;
  std::vector<std::array<int, 3>> runtime_shapes(const Tensor& input) const;

  // Sets every batch-norm running mean/variance to the exact (biased)
  // statistics of `batch` as seen in training mode, layer by layer.
  void freeze_batchnorm_statistics(const Tensor& batch);

  // Rounds every parameter and buffer to float32, the persisted precision.
  void round_to_storage();

  struct Layer;
  const std::vector<Layer>& layers() const { return layers_; }

 private:
  CaeConfig config_;
  std::vector<ParamTensor> params_;
  std::vector<Layer> layers_;
  std::size_t encoder_layers_ = 0;
};

struct CaeModel::Layer {
  enum class Kind { Conv, TransposedConv, BatchNorm, Relu, Sigmoid };
  Kind kind = Kind::Relu;
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  int weight = -1;  // parameter indices, -1 when absent
  int bias = -1;
  int gamma = -1;
  int beta = -1;
  int running_mean = -1;
  int running_var = -1;
};

// Per-parameter gradients aligned with CaeModel::params(); buffers carry
// all-zero entries.
struct Gradients {
  std::vector<std::vector<double>> values;
  double loss = 0.0;
};

struct BackwardOptions {
  // Parameters whose name starts with any of these prefixes get exactly
  // zero gradient.
  std::vector<std::string> frozen_prefixes;
  bool update_running_stats = true;
};

// 128-d code of one LAB01 crop, inference mode.
match::Descriptor encode(const CaeModel& model, const Crop& crop);
match::Descriptor encode(const CaeModel& model, const PlanarImage& crop);

std::vector<match::Descriptor> encode_batch(const CaeModel& model,
                                            std::span<const PlanarImage> crops);

// Descriptors of every window-sized crop of an LAB01 image at stride 1,
// evaluated fully convolutionally. Column k belongs to grid centre k of
// match::position_grid(img.width(), img.height(), input_size, 1).
struct DescriptorField {
  match::PositionGrid grid;
  Eigen::MatrixXd codes;  // latent_dim x grid.size()

  match::Descriptor at(std::size_t k) const;
};
DescriptorField encode_dense(const CaeModel& model, const PlanarImage& lab01);

// SSR of every column against `ref`, column order preserved.
match::SsrLandscape dense_landscape(const DescriptorField& field, const match::Descriptor& ref);

PlanarImage decode(const CaeModel& model, const match::Descriptor& code);

// Mean over batch, samples, and channels of (reconstruction - input)^2.
double reconstruction_loss(const CaeModel& model, std::span<const PlanarImage> crops);
double reconstruction_loss(const CaeModel& model, const Tensor& batch);
double mse(const Tensor& output, const Tensor& target);

// Training-mode loss (batch statistics) without touching running statistics.
double training_loss(const CaeModel& model, const Tensor& batch);

// Training-mode loss and exact analytic gradient of the MSE with respect to
// every trainable parameter. Needs a batch of at least two crops.
Gradients backward(CaeModel& model, const Tensor& batch, const BackwardOptions& options = {});

// Weights file: "DFECAE01", u64 little-endian header length, UTF-8 JSON
// header, then little-endian float32 values per tensor in header order.
void save_model(const CaeModel& model, const std::filesystem::path& path,
                const nlohmann::json& training_metadata = nlohmann::json::object());
// When `expected` is given the stored tensors must match its shapes.
CaeModel load_model(const std::filesystem::path& path, const CaeConfig* expected = nullptr);
nlohmann::json read_model_header(const std::filesystem::path& path);

inline constexpr char kWeightsMagic[] = "DFECAE01";

}  // namespace dfetrack::cae

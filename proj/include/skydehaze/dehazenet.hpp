#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "skydehaze/image.hpp"

namespace skydehaze {

// H x W x C activations, channel-fastest.
template <typename T>
struct BasicTensor3 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<T> data;

  BasicTensor3() = default;
  BasicTensor3(int h, int w, int c, T fill = T{})
      : height(h), width(w), channels(c),
        data(static_cast<size_t>(h) * w * c, fill) {
    if (h < 0 || w < 0 || c < 0) throw_invalid("negative tensor dimensions");
  }

  T& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  const T& at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  bool same_shape(const BasicTensor3& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  size_t size() const { return data.size(); }
};

using Tensor3 = BasicTensor3<double>;

Tensor3 to_tensor(const ColorImage& img);
ColorImage to_image(const Tensor3& t);  // clamps to [0,1]

// Same-padded stride-1 convolution layer with optional PReLU.
// weights are laid out [ky][kx][in][out].
struct ConvLayer {
  int kernel_size = 1;
  int in_channels = 0;
  int out_channels = 0;
  bool activation = true;  // PReLU after the convolution
  std::vector<double> weights;
  std::vector<double> bias;
  std::vector<double> prelu_slopes;  // empty when activation is false

  ConvLayer() = default;
  ConvLayer(int kernel, int in, int out, bool prelu);

  size_t weight_index(int ky, int kx, int in, int out) const {
    return ((static_cast<size_t>(ky) * kernel_size + kx) * in_channels + in) *
               out_channels + out;
  }
  size_t parameter_count() const {
    return weights.size() + bias.size() + prelu_slopes.size();
  }
  // Visits weights, then bias, then slopes.
  void for_each_parameter(const std::function<void(double&)>& fn);
};

inline constexpr int kFeatureChannels = 16;
inline constexpr int kUnitCount = 3;
inline constexpr int kLayersPerUnit = 3;
inline constexpr std::array<int, 4> kBranchKernels = {1, 3, 5, 7};
inline constexpr int kFusionChannels = kFeatureChannels * 4;
inline constexpr int kLayerCount = 1 + kUnitCount * kLayersPerUnit + 4 + 1;
// Pixels of context each output depends on in every direction.
inline constexpr int kReceptiveRadius = 1 + kUnitCount * kLayersPerUnit + 3;

// Stem (3->16, 3x3) -> 3 units x 3 conv layers (16->16, 3x3) -> four
// parallel branches (1x1, 3x3, 5x5, 7x7; 16->16) concatenated to 64 maps ->
// linear 1x1 head (64->3). Every conv except the head is followed by PReLU.
struct NetworkSpec {
  ConvLayer stem;
  std::array<ConvLayer, kUnitCount * kLayersPerUnit> units;
  std::array<ConvLayer, 4> branches;
  ConvLayer head;

  // Architecture with all parameters zero (slopes included).
  static NetworkSpec zeros();
  // He-scaled Gaussian weights (gain for PReLU slope 0.25); 16->16 layers
  // get a centered identity tap plus 0.1x that noise. Zero biases, slopes 0.25.
  static NetworkSpec initialize(std::uint64_t seed);

  // Layer order: stem, units[0..8], branches[0..3], head.
  ConvLayer& layer(int index);
  const ConvLayer& layer(int index) const;
  static std::string layer_name(int index);

  size_t parameter_count() const;
  void for_each_parameter(const std::function<void(double&)>& fn);
  // Checks the fixed architecture; throws kInvalidArgument on mismatch.
  void validate_architecture() const;
};

// Stride-1 cross-correlation, zero same-padding, bias added, no activation.
Tensor3 conv2d(const Tensor3& input, const ConvLayer& layer);
// max(x,0) + a * min(0,x) per channel.
Tensor3 prelu(const Tensor3& x, std::span<const double> slopes);

// Per-layer activations kept for backpropagation and partial re-evaluation.
struct ForwardCache {
  Tensor3 input;
  std::array<Tensor3, kLayerCount> pre;   // conv outputs
  std::array<Tensor3, kLayerCount> post;  // after PReLU (head: same as pre)
  Tensor3 fused;                          // 64-channel concatenation
};

// Head output before the final clamp. Throws kNumeric naming the layer if an
// activation contains NaN.
Tensor3 forward_raw(const NetworkSpec& net, const Tensor3& hazy,
                    ForwardCache* cache = nullptr);
// Recomputes layers [first_layer, end) reusing `cache` for earlier layers.
// `cache` must come from forward_raw on the same input; it is updated.
Tensor3 forward_raw_from(const NetworkSpec& net, ForwardCache& cache, int first_layer);
// forward_raw clamped to [0,1].
Tensor3 forward(const NetworkSpec& net, const Tensor3& hazy);

// Gradients of sum(grad_out * forward_raw(hazy)) for every parameter, laid
// out as a NetworkSpec of the same shape.
NetworkSpec backward(const NetworkSpec& net, const Tensor3& hazy, const Tensor3& grad_out);
NetworkSpec backward(const NetworkSpec& net, const ForwardCache& cache,
                     const Tensor3& grad_out);

// ----------------------------------------------------------- training --

struct TrainingPair {
  Tensor3 hazy;
  Tensor3 clear;
  int group = -1;  // base-image id for the split; -1 means "own index"
};

struct TrainConfig {
  double lr = 1e-2;
  double momentum = 0.9;
  int epochs = 100;
  int batch = 2;
  std::uint64_t seed = 0;
  long max_steps = 0;     // 0: no limit besides epochs
  double clip_norm = 1.0; // global gradient-norm clip; <= 0 disables
};

struct EpochLoss {
  int epoch = 0;
  long steps = 0;
  double train = 0.0;       // mean minibatch loss over the epoch
  double validation = 0.0;  // NaN when the validation split is empty
};

struct TrainResult {
  NetworkSpec net;
  std::vector<EpochLoss> curve;
  long steps = 0;
  std::vector<size_t> train_indices;
  std::vector<size_t> validation_indices;
};

// 6:1 split by group: groups g with g % 7 == 6 go to validation.
void split_train_validation(std::span<const TrainingPair> dataset,
                            std::vector<size_t>& train, std::vector<size_t>& validation);

double mean_squared_error(const NetworkSpec& net, std::span<const TrainingPair> dataset,
                          std::span<const size_t> indices);

// Minibatch SGD with momentum on the MSE between forward_raw(hazy) and clear.
// Deterministic for a fixed seed.
TrainResult train(NetworkSpec net, std::span<const TrainingPair> dataset,
                  const TrainConfig& config,
                  const std::function<void(const EpochLoss&)>& on_epoch = {});

// ---------------------------------------------------------- inference --

struct InferenceOptions {
  int max_tile = 256;
  int overlap = 16;
};

// Runs the network (32-bit) on the image and replaces the sky pixels of a
// copy of the input. Large images are cut into cores of max_tile - 2*overlap
// pixels, each evaluated with `overlap` pixels of surrounding context; cores
// without sky pixels are skipped.
ColorImage infer_sky(const NetworkSpec& net, const ColorImage& img, const BinaryMask& sky_mask,
                     const InferenceOptions& options = {});

// ---------------------------------------------------------- checkpoint --

// "DHZN1", then per layer: kernel, in, out, slope count as little-endian
// int32, followed by weights, bias and slopes as little-endian float32.
std::vector<std::uint8_t> serialize_checkpoint(const NetworkSpec& net);
NetworkSpec parse_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const NetworkSpec& net, const std::filesystem::path& path);
NetworkSpec load_checkpoint(const std::filesystem::path& path);

}  // namespace skydehaze

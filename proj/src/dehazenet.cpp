#include "skydehaze/dehazenet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "skydehaze/codec.hpp"
#include "skydehaze/random.hpp"

namespace skydehaze {

// ------------------------------------------------------------- kernels --

namespace {

// 32-byte lanes; plain element loops are kept for the 3-channel head.
template <typename T>
struct Simd {
  typedef T type __attribute__((vector_size(32)));
  static constexpr int kLanes = 32 / sizeof(T);
  static type load(const T* p) {
    type v;
    std::memcpy(&v, p, sizeof(v));
    return v;
  }
  static void store(T* p, const type& v) { std::memcpy(p, &v, sizeof(v)); }
};

struct Window {
  int ky0, ky1, kx0, kx1;
};

inline Window clip_window(int x, int y, int w, int h, int k) {
  const int pad = (k - 1) / 2;
  return {std::max(0, pad - y), std::min(k - 1, h - 1 - y + pad), std::max(0, pad - x),
          std::min(k - 1, w - 1 - x + pad)};
}

// out[y][x][co] = bias[co] + sum in[y+ky-p][x+kx-p][ci] * w[ky][kx][ci][co]
template <typename T>
void conv_forward_generic(const T* in, int h, int w, int cin, const T* weights,
                          const T* bias, int k, int cout, T* out) {
  const int pad = (k - 1) / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      T* o = out + (static_cast<size_t>(y) * w + x) * cout;
      std::copy_n(bias, cout, o);
      const Window win = clip_window(x, y, w, h, k);
      for (int ky = win.ky0; ky <= win.ky1; ++ky) {
        for (int kx = win.kx0; kx <= win.kx1; ++kx) {
          const T* src = in + (static_cast<size_t>(y + ky - pad) * w + x + kx - pad) * cin;
          const T* wk = weights + (static_cast<size_t>(ky) * k + kx) * cin * cout;
          for (int ci = 0; ci < cin; ++ci) {
            const T v = src[ci];
            const T* wr = wk + static_cast<size_t>(ci) * cout;
            for (int co = 0; co < cout; ++co) o[co] += v * wr[co];
          }
        }
      }
    }
  }
}

template <typename T>
void conv_forward_fixed(const T* in, int h, int w, int cin, const T* weights, const T* bias,
                        int k, T* out) {
  using V = Simd<T>;
  constexpr int kVecs = kFeatureChannels / V::kLanes;
  const int pad = (k - 1) / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      typename V::type acc[kVecs];
      for (int j = 0; j < kVecs; ++j) acc[j] = V::load(bias + j * V::kLanes);
      const Window win = clip_window(x, y, w, h, k);
      for (int ky = win.ky0; ky <= win.ky1; ++ky) {
        for (int kx = win.kx0; kx <= win.kx1; ++kx) {
          const T* src = in + (static_cast<size_t>(y + ky - pad) * w + x + kx - pad) * cin;
          const T* wk = weights + (static_cast<size_t>(ky) * k + kx) * cin * kFeatureChannels;
          for (int ci = 0; ci < cin; ++ci) {
            const T v = src[ci];
            const T* wr = wk + static_cast<size_t>(ci) * kFeatureChannels;
            for (int j = 0; j < kVecs; ++j) acc[j] += v * V::load(wr + j * V::kLanes);
          }
        }
      }
      T* o = out + (static_cast<size_t>(y) * w + x) * kFeatureChannels;
      for (int j = 0; j < kVecs; ++j) V::store(o + j * V::kLanes, acc[j]);
    }
  }
}

template <typename T>
void conv_forward(const T* in, int h, int w, int cin, const T* weights, const T* bias, int k,
                  int cout, T* out) {
  if (cout == kFeatureChannels) {
    conv_forward_fixed(in, h, w, cin, weights, bias, k, out);
  } else {
    conv_forward_generic(in, h, w, cin, weights, bias, k, cout, out);
  }
}

// Accumulates weight/bias gradients and (optionally) the input gradient.
void conv_backward_generic(const double* in, int h, int w, int cin, const double* weights,
                           int k, int cout, const double* grad_out, double* grad_w,
                           double* grad_b, double* grad_in) {
  const int pad = (k - 1) / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double* g = grad_out + (static_cast<size_t>(y) * w + x) * cout;
      for (int co = 0; co < cout; ++co) grad_b[co] += g[co];
      const Window win = clip_window(x, y, w, h, k);
      for (int ky = win.ky0; ky <= win.ky1; ++ky) {
        for (int kx = win.kx0; kx <= win.kx1; ++kx) {
          const size_t src_offset =
              (static_cast<size_t>(y + ky - pad) * w + x + kx - pad) * cin;
          const size_t wk_offset = (static_cast<size_t>(ky) * k + kx) * cin * cout;
          for (int ci = 0; ci < cin; ++ci) {
            const double v = in[src_offset + ci];
            double* gw = grad_w + wk_offset + static_cast<size_t>(ci) * cout;
            for (int co = 0; co < cout; ++co) gw[co] += v * g[co];
            if (grad_in != nullptr) {
              const double* wr = weights + wk_offset + static_cast<size_t>(ci) * cout;
              double acc = 0.0;
              for (int co = 0; co < cout; ++co) acc += wr[co] * g[co];
              grad_in[src_offset + ci] += acc;
            }
          }
        }
      }
    }
  }
}

void conv_backward_fixed(const double* in, int h, int w, int cin, const double* weights,
                         int k, const double* grad_out, double* grad_w, double* grad_b,
                         double* grad_in) {
  using V = Simd<double>;
  constexpr int kVecs = kFeatureChannels / V::kLanes;
  const int pad = (k - 1) / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double* gp = grad_out + (static_cast<size_t>(y) * w + x) * kFeatureChannels;
      V::type g[kVecs];
      for (int j = 0; j < kVecs; ++j) {
        g[j] = V::load(gp + j * V::kLanes);
        V::store(grad_b + j * V::kLanes, V::load(grad_b + j * V::kLanes) + g[j]);
      }
      const Window win = clip_window(x, y, w, h, k);
      for (int ky = win.ky0; ky <= win.ky1; ++ky) {
        for (int kx = win.kx0; kx <= win.kx1; ++kx) {
          const size_t src_offset =
              (static_cast<size_t>(y + ky - pad) * w + x + kx - pad) * cin;
          const size_t wk_offset =
              (static_cast<size_t>(ky) * k + kx) * cin * kFeatureChannels;
          for (int ci = 0; ci < cin; ++ci) {
            const double v = in[src_offset + ci];
            const size_t row = wk_offset + static_cast<size_t>(ci) * kFeatureChannels;
            V::type dot{};
            for (int j = 0; j < kVecs; ++j) {
              double* gw = grad_w + row + j * V::kLanes;
              V::store(gw, V::load(gw) + v * g[j]);
              dot += V::load(weights + row + j * V::kLanes) * g[j];
            }
            if (grad_in != nullptr) {
              double sum = 0.0;
              for (int l = 0; l < V::kLanes; ++l) sum += dot[l];
              grad_in[src_offset + ci] += sum;
            }
          }
        }
      }
    }
  }
}

void conv_backward(const Tensor3& input, const ConvLayer& layer, const Tensor3& grad_out,
                   ConvLayer& grads, Tensor3* grad_in) {
  double* gin = nullptr;
  if (grad_in != nullptr) {
    *grad_in = Tensor3(input.height, input.width, input.channels);
    gin = grad_in->data.data();
  }
  if (layer.out_channels == kFeatureChannels) {
    conv_backward_fixed(input.data.data(), input.height, input.width, input.channels,
                        layer.weights.data(), layer.kernel_size, grad_out.data.data(),
                        grads.weights.data(), grads.bias.data(), gin);
  } else {
    conv_backward_generic(input.data.data(), input.height, input.width, input.channels,
                          layer.weights.data(), layer.kernel_size, layer.out_channels,
                          grad_out.data.data(), grads.weights.data(), grads.bias.data(), gin);
  }
}

// Gradient through PReLU; accumulates slope gradients.
Tensor3 prelu_backward(const Tensor3& pre, std::span<const double> slopes,
                       const Tensor3& grad_post, std::vector<double>& grad_slopes) {
  Tensor3 grad_pre(pre.height, pre.width, pre.channels);
  const int c = pre.channels;
  for (size_t i = 0; i < pre.size(); ++i) {
    const int ch = static_cast<int>(i % c);
    const double v = pre.data[i];
    if (v > 0.0) {
      grad_pre.data[i] = grad_post.data[i];
    } else {
      grad_pre.data[i] = slopes[ch] * grad_post.data[i];
      grad_slopes[ch] += v * grad_post.data[i];
    }
  }
  return grad_pre;
}

template <typename T, typename S>
void prelu_inplace(std::vector<T>& data, int channels, const S* slopes) {
  for (size_t i = 0; i < data.size(); ++i) {
    const T v = data[i];
    if (v < T{0}) data[i] = static_cast<T>(slopes[i % channels]) * v;
  }
}

template <typename T>
void check_finite(const std::vector<T>& data, int layer_index) {
  for (const T v : data) {
    if (std::isnan(v)) {
      throw Error(ErrorKind::kNumeric,
                  "NaN in activation of layer " + NetworkSpec::layer_name(layer_index));
    }
  }
}

void check_input(const NetworkSpec& net, const Tensor3& hazy) {
  if (hazy.channels != net.stem.in_channels) {
    throw_invalid("network input has " + std::to_string(hazy.channels) +
                  " channels, expected " + std::to_string(net.stem.in_channels));
  }
  if (hazy.height <= 0 || hazy.width <= 0) throw_invalid("network input is empty");
}

}  // namespace

// -------------------------------------------------------------- layers --

Tensor3 to_tensor(const ColorImage& img) {
  Tensor3 t(img.height(), img.width(), 3);
  std::copy(img.data().begin(), img.data().end(), t.data.begin());
  return t;
}

ColorImage to_image(const Tensor3& t) {
  if (t.channels != 3) throw_invalid("to_image: tensor must have 3 channels");
  ColorImage img(t.width, t.height);
  for (size_t i = 0; i < t.size(); ++i) img[i] = std::clamp(t.data[i], 0.0, 1.0);
  return img;
}

ConvLayer::ConvLayer(int kernel, int in, int out, bool prelu)
    : kernel_size(kernel), in_channels(in), out_channels(out), activation(prelu) {
  if (kernel < 1 || kernel % 2 == 0) throw_invalid("conv kernel size must be odd");
  weights.assign(static_cast<size_t>(kernel) * kernel * in * out, 0.0);
  bias.assign(out, 0.0);
  if (prelu) prelu_slopes.assign(out, 0.0);
}

void ConvLayer::for_each_parameter(const std::function<void(double&)>& fn) {
  for (auto& v : weights) fn(v);
  for (auto& v : bias) fn(v);
  for (auto& v : prelu_slopes) fn(v);
}

Tensor3 conv2d(const Tensor3& input, const ConvLayer& layer) {
  if (input.channels != layer.in_channels) {
    throw_invalid("conv2d: input has " + std::to_string(input.channels) +
                  " channels, layer expects " + std::to_string(layer.in_channels));
  }
  if (layer.kernel_size < 1 || layer.kernel_size % 2 == 0) {
    throw_invalid("conv2d: kernel size must be odd");
  }
  Tensor3 out(input.height, input.width, layer.out_channels);
  conv_forward(input.data.data(), input.height, input.width, input.channels,
               layer.weights.data(), layer.bias.data(), layer.kernel_size,
               layer.out_channels, out.data.data());
  return out;
}

Tensor3 prelu(const Tensor3& x, std::span<const double> slopes) {
  if (slopes.size() != static_cast<size_t>(x.channels)) {
    throw_invalid("prelu: slope count does not match channels");
  }
  Tensor3 out = x;
  prelu_inplace(out.data, x.channels, slopes.data());
  return out;
}

// ------------------------------------------------------------- network --

NetworkSpec NetworkSpec::zeros() {
  NetworkSpec net;
  net.stem = ConvLayer(3, 3, kFeatureChannels, true);
  for (auto& u : net.units) u = ConvLayer(3, kFeatureChannels, kFeatureChannels, true);
  for (size_t b = 0; b < net.branches.size(); ++b) {
    net.branches[b] = ConvLayer(kBranchKernels[b], kFeatureChannels, kFeatureChannels, true);
  }
  net.head = ConvLayer(1, kFusionChannels, 3, false);
  return net;
}

NetworkSpec NetworkSpec::initialize(std::uint64_t seed) {
  constexpr double kSlope = 0.25;
  constexpr double kIdentityNoise = 0.1;
  NetworkSpec net = zeros();
  Rng rng(seed);
  for (int l = 0; l < kLayerCount; ++l) {
    ConvLayer& layer = net.layer(l);
    const double fan_in =
        static_cast<double>(layer.kernel_size) * layer.kernel_size * layer.in_channels;
    const double gain = layer.activation ? std::sqrt(2.0 / (1.0 + kSlope * kSlope)) : 1.0;
    const double stddev = gain / std::sqrt(fan_in);
    const bool square = layer.in_channels == layer.out_channels;
    for (auto& w : layer.weights) {
      w = stddev * rng.normal() * (square ? kIdentityNoise : 1.0);
    }
    if (square) {
      const int c = layer.kernel_size / 2;
      for (int i = 0; i < layer.in_channels; ++i) {
        layer.weights[layer.weight_index(c, c, i, i)] += 1.0;
      }
    }
    std::fill(layer.prelu_slopes.begin(), layer.prelu_slopes.end(), kSlope);
  }
  return net;
}

ConvLayer& NetworkSpec::layer(int index) {
  return const_cast<ConvLayer&>(std::as_const(*this).layer(index));
}

const ConvLayer& NetworkSpec::layer(int index) const {
  if (index == 0) return stem;
  if (index >= 1 && index <= 9) return units[index - 1];
  if (index >= 10 && index <= 13) return branches[index - 10];
  if (index == 14) return head;
  throw_invalid("layer index out of range: " + std::to_string(index));
}

std::string NetworkSpec::layer_name(int index) {
  if (index == 0) return "stem";
  if (index >= 1 && index <= 9) {
    return "unit" + std::to_string((index - 1) / 3) + ".conv" + std::to_string((index - 1) % 3);
  }
  if (index >= 10 && index <= 13) {
    const int k = kBranchKernels[index - 10];
    return "branch" + std::to_string(k) + "x" + std::to_string(k);
  }
  if (index == 14) return "head";
  return "layer" + std::to_string(index);
}

size_t NetworkSpec::parameter_count() const {
  size_t n = 0;
  for (int l = 0; l < kLayerCount; ++l) n += layer(l).parameter_count();
  return n;
}

void NetworkSpec::for_each_parameter(const std::function<void(double&)>& fn) {
  for (int l = 0; l < kLayerCount; ++l) layer(l).for_each_parameter(fn);
}

void NetworkSpec::validate_architecture() const {
  const NetworkSpec ref = zeros();
  for (int l = 0; l < kLayerCount; ++l) {
    const ConvLayer& a = layer(l);
    const ConvLayer& b = ref.layer(l);
    if (a.kernel_size != b.kernel_size || a.in_channels != b.in_channels ||
        a.out_channels != b.out_channels || a.activation != b.activation ||
        a.weights.size() != b.weights.size() || a.bias.size() != b.bias.size() ||
        a.prelu_slopes.size() != b.prelu_slopes.size()) {
      throw_invalid("network layer " + layer_name(l) + " does not match the architecture");
    }
  }
}

namespace {

void run_layer(const NetworkSpec& net, int l, const Tensor3& input, ForwardCache& cache) {
  const ConvLayer& layer = net.layer(l);
  cache.pre[l] = conv2d(input, layer);
  check_finite(cache.pre[l].data, l);
  if (layer.activation) {
    cache.post[l] = prelu(cache.pre[l], layer.prelu_slopes);
  } else {
    cache.post[l] = cache.pre[l];
  }
}

void fuse_branch(ForwardCache& cache, int branch) {
  const Tensor3& b = cache.post[10 + branch];
  for (size_t p = 0; p < static_cast<size_t>(b.height) * b.width; ++p) {
    std::copy_n(&b.data[p * kFeatureChannels], kFeatureChannels,
                &cache.fused.data[p * kFusionChannels + branch * kFeatureChannels]);
  }
}

}  // namespace

Tensor3 forward_raw_from(const NetworkSpec& net, ForwardCache& cache, int first_layer) {
  if (first_layer < 0 || first_layer >= kLayerCount) {
    throw_invalid("forward_raw_from: layer index out of range");
  }
  const int h = cache.input.height;
  const int w = cache.input.width;
  if (first_layer <= 9) {
    for (int l = first_layer; l <= 9; ++l) {
      run_layer(net, l, l == 0 ? cache.input : cache.post[l - 1], cache);
    }
  }
  if (cache.fused.height != h || cache.fused.width != w) {
    cache.fused = Tensor3(h, w, kFusionChannels);
  }
  for (int b = 0; b < 4; ++b) {
    const int l = 10 + b;
    if (first_layer <= 9 || first_layer == l) {
      run_layer(net, l, cache.post[9], cache);
      fuse_branch(cache, b);
    }
  }
  run_layer(net, 14, cache.fused, cache);
  return cache.post[14];
}

Tensor3 forward_raw(const NetworkSpec& net, const Tensor3& hazy, ForwardCache* cache) {
  check_input(net, hazy);
  ForwardCache local;
  ForwardCache& c = cache != nullptr ? *cache : local;
  c.input = hazy;
  return forward_raw_from(net, c, 0);
}

Tensor3 forward(const NetworkSpec& net, const Tensor3& hazy) {
  Tensor3 out = forward_raw(net, hazy);
  for (auto& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

NetworkSpec backward(const NetworkSpec& net, const ForwardCache& cache,
                     const Tensor3& grad_out) {
  const Tensor3& out = cache.post[14];
  if (!grad_out.same_shape(out)) {
    throw_invalid("backward: grad_out shape does not match the network output");
  }
  NetworkSpec grads = NetworkSpec::zeros();
  Tensor3 grad_fused;
  conv_backward(cache.fused, net.head, grad_out, grads.head, &grad_fused);

  const int h = out.height;
  const int w = out.width;
  const size_t pixels = static_cast<size_t>(h) * w;
  Tensor3 grad_trunk(h, w, kFeatureChannels);
  for (int b = 0; b < 4; ++b) {
    const int l = 10 + b;
    Tensor3 grad_post(h, w, kFeatureChannels);
    for (size_t p = 0; p < pixels; ++p) {
      std::copy_n(&grad_fused.data[p * kFusionChannels + b * kFeatureChannels],
                  kFeatureChannels, &grad_post.data[p * kFeatureChannels]);
    }
    const Tensor3 grad_pre = prelu_backward(cache.pre[l], net.branches[b].prelu_slopes,
                                            grad_post, grads.branches[b].prelu_slopes);
    Tensor3 grad_in;
    conv_backward(cache.post[9], net.branches[b], grad_pre, grads.branches[b], &grad_in);
    for (size_t i = 0; i < grad_trunk.size(); ++i) grad_trunk.data[i] += grad_in.data[i];
  }
  for (int l = 9; l >= 0; --l) {
    ConvLayer& g = grads.layer(l);
    const ConvLayer& layer = net.layer(l);
    const Tensor3 grad_pre =
        prelu_backward(cache.pre[l], layer.prelu_slopes, grad_trunk, g.prelu_slopes);
    const Tensor3& input = l == 0 ? cache.input : cache.post[l - 1];
    Tensor3 grad_in;
    conv_backward(input, layer, grad_pre, g, l == 0 ? nullptr : &grad_in);
    if (l > 0) grad_trunk = std::move(grad_in);
  }
  return grads;
}

NetworkSpec backward(const NetworkSpec& net, const Tensor3& hazy, const Tensor3& grad_out) {
  ForwardCache cache;
  forward_raw(net, hazy, &cache);
  return backward(net, cache, grad_out);
}

// ------------------------------------------------------------ training --

void split_train_validation(std::span<const TrainingPair> dataset,
                            std::vector<size_t>& train, std::vector<size_t>& validation) {
  train.clear();
  validation.clear();
  for (size_t i = 0; i < dataset.size(); ++i) {
    const long group = dataset[i].group >= 0 ? dataset[i].group : static_cast<long>(i);
    (group % 7 == 6 ? validation : train).push_back(i);
  }
}

double mean_squared_error(const NetworkSpec& net, std::span<const TrainingPair> dataset,
                          std::span<const size_t> indices) {
  if (indices.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  size_t count = 0;
  for (size_t idx : indices) {
    const Tensor3 out = forward_raw(net, dataset[idx].hazy);
    for (size_t i = 0; i < out.size(); ++i) {
      const double d = out.data[i] - dataset[idx].clear.data[i];
      sum += d * d;
    }
    count += out.size();
  }
  return sum / static_cast<double>(count);
}

TrainResult train(NetworkSpec net, std::span<const TrainingPair> dataset,
                  const TrainConfig& config,
                  const std::function<void(const EpochLoss&)>& on_epoch) {
  if (dataset.empty()) throw_invalid("train: empty dataset");
  if (!(config.lr >= 0.0)) throw_invalid("train: learning rate must be >= 0");
  if (!(config.momentum >= 0.0 && config.momentum < 1.0)) {
    throw_invalid("train: momentum must lie in [0,1)");
  }
  if (config.batch < 1) throw_invalid("train: batch must be >= 1");
  if (config.epochs < 0) throw_invalid("train: epochs must be >= 0");
  net.validate_architecture();
  for (const auto& pair : dataset) {
    if (!pair.hazy.same_shape(pair.clear) || !pair.hazy.same_shape(dataset[0].hazy)) {
      throw_invalid("train: all patches must share one shape");
    }
    if (pair.hazy.channels != 3) throw_invalid("train: patches must have 3 channels");
  }

  TrainResult result;
  split_train_validation(dataset, result.train_indices, result.validation_indices);
  if (result.train_indices.empty()) throw_invalid("train: training split is empty");

  Rng rng(config.seed);
  NetworkSpec velocity = NetworkSpec::zeros();
  std::vector<size_t> order = result.train_indices;
  const double elements = static_cast<double>(dataset[0].clear.size());

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.max_steps > 0 && result.steps >= config.max_steps) break;
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double loss_sum = 0.0;
    long batches = 0;
    for (size_t start = 0; start < order.size(); start += config.batch) {
      if (config.max_steps > 0 && result.steps >= config.max_steps) break;
      const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch));
      const double scale = 1.0 / (elements * static_cast<double>(end - start));
      NetworkSpec grads = NetworkSpec::zeros();
      double batch_loss = 0.0;
      for (size_t b = start; b < end; ++b) {
        const TrainingPair& pair = dataset[order[b]];
        ForwardCache cache;
        const Tensor3 out = forward_raw(net, pair.hazy, &cache);
        Tensor3 grad_out(out.height, out.width, out.channels);
        for (size_t i = 0; i < out.size(); ++i) {
          const double d = out.data[i] - pair.clear.data[i];
          batch_loss += d * d * scale;
          grad_out.data[i] = 2.0 * d * scale;
        }
        const NetworkSpec g = backward(net, cache, grad_out);
        for (int l = 0; l < kLayerCount; ++l) {
          ConvLayer& acc = grads.layer(l);
          const ConvLayer& src = g.layer(l);
          for (size_t i = 0; i < acc.weights.size(); ++i) acc.weights[i] += src.weights[i];
          for (size_t i = 0; i < acc.bias.size(); ++i) acc.bias[i] += src.bias[i];
          for (size_t i = 0; i < acc.prelu_slopes.size(); ++i) {
            acc.prelu_slopes[i] += src.prelu_slopes[i];
          }
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw Error(ErrorKind::kNumeric, "train: loss diverged at step " +
                                             std::to_string(result.steps));
      }
      if (config.clip_norm > 0.0) {
        double norm2 = 0.0;
        grads.for_each_parameter([&](double& v) { norm2 += v * v; });
        const double norm = std::sqrt(norm2);
        if (norm > config.clip_norm) {
          const double s = config.clip_norm / norm;
          grads.for_each_parameter([&](double& v) { v *= s; });
        }
      }
      // v = momentum * v + g; p -= lr * v
      for (int l = 0; l < kLayerCount; ++l) {
        ConvLayer& p = net.layer(l);
        ConvLayer& v = velocity.layer(l);
        const ConvLayer& g = grads.layer(l);
        auto update = [&](std::vector<double>& param, std::vector<double>& vel,
                          const std::vector<double>& grad) {
          for (size_t i = 0; i < param.size(); ++i) {
            vel[i] = config.momentum * vel[i] + grad[i];
            param[i] -= config.lr * vel[i];
          }
        };
        update(p.weights, v.weights, g.weights);
        update(p.bias, v.bias, g.bias);
        update(p.prelu_slopes, v.prelu_slopes, g.prelu_slopes);
      }
      loss_sum += batch_loss;
      ++batches;
      ++result.steps;
    }
    EpochLoss entry;
    entry.epoch = epoch;
    entry.steps = result.steps;
    entry.train = batches > 0 ? loss_sum / batches : std::numeric_limits<double>::quiet_NaN();
    entry.validation = mean_squared_error(net, dataset, result.validation_indices);
    result.curve.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  result.net = std::move(net);
  return result;
}

// ----------------------------------------------------------- inference --

namespace {

struct FloatLayer {
  int kernel_size;
  int in_channels;
  int out_channels;
  bool activation;
  std::vector<float> weights;
  std::vector<float> bias;
  std::vector<float> slopes;
};

std::vector<FloatLayer> to_float(const NetworkSpec& net) {
  std::vector<FloatLayer> layers;
  for (int l = 0; l < kLayerCount; ++l) {
    const ConvLayer& src = net.layer(l);
    layers.push_back(FloatLayer{
        src.kernel_size, src.in_channels, src.out_channels, src.activation,
        std::vector<float>(src.weights.begin(), src.weights.end()),
        std::vector<float>(src.bias.begin(), src.bias.end()),
        std::vector<float>(src.prelu_slopes.begin(), src.prelu_slopes.end())});
  }
  return layers;
}

using FloatTensor = BasicTensor3<float>;

FloatTensor run_float_layer(const FloatLayer& layer, const FloatTensor& input, int index) {
  FloatTensor out(input.height, input.width, layer.out_channels);
  conv_forward(input.data.data(), input.height, input.width, input.channels,
               layer.weights.data(), layer.bias.data(), layer.kernel_size,
               layer.out_channels, out.data.data());
  if (layer.activation) prelu_inplace(out.data, layer.out_channels, layer.slopes.data());
  check_finite(out.data, index);
  return out;
}

FloatTensor forward_float(const std::vector<FloatLayer>& layers, FloatTensor x) {
  for (int l = 0; l <= 9; ++l) x = run_float_layer(layers[l], x, l);
  FloatTensor fused(x.height, x.width, kFusionChannels);
  const size_t pixels = static_cast<size_t>(x.height) * x.width;
  for (int b = 0; b < 4; ++b) {
    const FloatTensor branch = run_float_layer(layers[10 + b], x, 10 + b);
    for (size_t p = 0; p < pixels; ++p) {
      std::copy_n(&branch.data[p * kFeatureChannels], kFeatureChannels,
                  &fused.data[p * kFusionChannels + b * kFeatureChannels]);
    }
  }
  return run_float_layer(layers[14], fused, 14);
}

}  // namespace

ColorImage infer_sky(const NetworkSpec& net, const ColorImage& img, const BinaryMask& sky_mask,
                     const InferenceOptions& options) {
  require_same_size(img, sky_mask, "infer_sky");
  net.validate_architecture();
  ColorImage out = img;
  if (std::none_of(sky_mask.data().begin(), sky_mask.data().end(),
                   [](std::uint8_t v) { return v != 0; })) {
    return out;
  }
  if (options.overlap < 0) throw_invalid("infer_sky: overlap must be >= 0");
  const int w = img.width();
  const int h = img.height();
  const std::vector<FloatLayer> layers = to_float(net);

  const bool single = w <= options.max_tile && h <= options.max_tile;
  const int core = single ? std::max(w, h) : options.max_tile - 2 * options.overlap;
  if (core <= 0) throw_invalid("infer_sky: max_tile must exceed 2 * overlap");
  const int halo = single ? 0 : options.overlap;

  for (int cy0 = 0; cy0 < h; cy0 += core) {
    for (int cx0 = 0; cx0 < w; cx0 += core) {
      const int cx1 = std::min(w, cx0 + core);
      const int cy1 = std::min(h, cy0 + core);
      bool any = false;
      for (int y = cy0; y < cy1 && !any; ++y) {
        for (int x = cx0; x < cx1; ++x) {
          if (sky_mask(x, y)) {
            any = true;
            break;
          }
        }
      }
      if (!any) continue;
      const int tx0 = std::max(0, cx0 - halo);
      const int ty0 = std::max(0, cy0 - halo);
      const int tx1 = std::min(w, cx1 + halo);
      const int ty1 = std::min(h, cy1 + halo);
      FloatTensor tile(ty1 - ty0, tx1 - tx0, 3);
      for (int y = ty0; y < ty1; ++y) {
        for (int x = tx0; x < tx1; ++x) {
          for (int c = 0; c < 3; ++c) {
            tile.at(y - ty0, x - tx0, c) = static_cast<float>(img(x, y, c));
          }
        }
      }
      const FloatTensor result = forward_float(layers, std::move(tile));
      for (int y = cy0; y < cy1; ++y) {
        for (int x = cx0; x < cx1; ++x) {
          if (!sky_mask(x, y)) continue;
          for (int c = 0; c < 3; ++c) {
            out(x, y, c) =
                std::clamp(static_cast<double>(result.at(y - ty0, x - tx0, c)), 0.0, 1.0);
          }
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------- checkpoint --

namespace {

constexpr char kMagic[] = {'D', 'H', 'Z', 'N', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f32(const std::string& what) { return std::bit_cast<float>(u32(what)); }
  size_t offset() const { return pos_; }
  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(size_t n, const std::string& what) {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorKind::kDecode, "checkpoint truncated at byte offset " +
                                          std::to_string(pos_) + " reading " + what);
    }
  }
  std::span<const std::uint8_t> bytes_;
  size_t pos_ = sizeof(kMagic);
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const NetworkSpec& net) {
  net.validate_architecture();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  for (int l = 0; l < kLayerCount; ++l) {
    const ConvLayer& layer = net.layer(l);
    put_u32(out, layer.kernel_size);
    put_u32(out, layer.in_channels);
    put_u32(out, layer.out_channels);
    put_u32(out, static_cast<std::uint32_t>(layer.prelu_slopes.size()));
    for (double v : layer.weights) put_f32(out, v);
    for (double v : layer.bias) put_f32(out, v);
    for (double v : layer.prelu_slopes) put_f32(out, v);
  }
  return out;
}

NetworkSpec parse_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic) ||
      !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw Error(ErrorKind::kDecode, "checkpoint: wrong magic (expected DHZN1)");
  }
  NetworkSpec net = NetworkSpec::zeros();
  ByteReader reader(bytes);
  for (int l = 0; l < kLayerCount; ++l) {
    ConvLayer& layer = net.layer(l);
    const std::string name = NetworkSpec::layer_name(l);
    const std::uint32_t dims[4] = {reader.u32(name + " kernel"), reader.u32(name + " in"),
                                   reader.u32(name + " out"), reader.u32(name + " slopes")};
    const std::uint32_t expected[4] = {
        static_cast<std::uint32_t>(layer.kernel_size),
        static_cast<std::uint32_t>(layer.in_channels),
        static_cast<std::uint32_t>(layer.out_channels),
        static_cast<std::uint32_t>(layer.prelu_slopes.size())};
    if (!std::equal(dims, dims + 4, expected)) {
      throw Error(ErrorKind::kDecode,
                  "checkpoint: size mismatch for layer " + name + ": got " +
                      std::to_string(dims[0]) + "x" + std::to_string(dims[1]) + "->" +
                      std::to_string(dims[2]) + " (" + std::to_string(dims[3]) +
                      " slopes), expected " + std::to_string(expected[0]) + "x" +
                      std::to_string(expected[1]) + "->" + std::to_string(expected[2]) +
                      " (" + std::to_string(expected[3]) + " slopes)");
    }
    for (auto& v : layer.weights) v = reader.f32(name + " weights");
    for (auto& v : layer.bias) v = reader.f32(name + " bias");
    for (auto& v : layer.prelu_slopes) v = reader.f32(name + " slopes");
  }
  if (reader.remaining() != 0) {
    throw Error(ErrorKind::kDecode, "checkpoint: size mismatch, " +
                                        std::to_string(reader.remaining()) +
                                        " trailing bytes at offset " +
                                        std::to_string(reader.offset()));
  }
  return net;
}

void save_checkpoint(const NetworkSpec& net, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(net));
}

NetworkSpec load_checkpoint(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  try {
    return parse_checkpoint(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace skydehaze

#pragma once

#include <cstdint>
#include <type_traits>
#include <optional>
#include <string>
#include <vector>

#include "unijdot/fourier.hpp"
#include "unijdot/rng.hpp"
#include "unijdot/tensor.hpp"

namespace unijdot {

struct ModelConfig {
  int in_channels = 9;
  int seq_len = 128;
  int num_classes = 6;
  std::vector<int> conv_channels{32, 64, 64};
  std::vector<int> conv_kernels{7, 5, 3};
  bool fourier = true;
  int fourier_modes = 8;
  int fourier_out = 4;
  bool fourier_smoothing = true;

  int fourier_dim() const {
    return fourier ? 2 * fourier_out * fourier_modes : 0;
  }
  int feature_dim() const { return conv_channels.back() + fourier_dim(); }
  void validate() const;
};

struct TrainConfig {
  double lambda = 0.5;     // cross-entropy vs transport loss mix, in (0,1)
  double mu = 1.0;         // feature vs logit distance tradeoff
  double learning_rate = 0.01;
  double momentum = 0.9;
  int source_batch = 32;
  int target_batch = 32;
  int epochs = 30;
  int pretrain_epochs = 20;
  uint64_t seed = 0;
  void validate() const;
};

template <class Real>
struct ConvBlock {
  int in_ch = 0, out_ch = 0, k = 0, pad = 0;
  std::vector<Real> w, b;    // out x in x k, out
  std::vector<Real> gw, gb;  // gradients
  std::vector<Real> vw, vb;  // momentum
};

template <class Real>
struct DenseLayer {
  int in_dim = 0, out_dim = 0;
  std::vector<Real> w, b;  // out x in, out
  std::vector<Real> gw, gb;
  std::vector<Real> vw, vb;
};

// h = f(g(x)): a small 1D CNN stack with global average pooling, optionally
// fused with the spectral branch, feeding a single affine classifier.
template <class Real>
struct NetT {
  ModelConfig cfg;
  std::vector<ConvBlock<Real>> blocks;
  std::optional<SpectralWeightsT<Real>> spectral;
  DenseLayer<Real> classifier;

  static NetT init(const ModelConfig& cfg, uint64_t seed);
};

using Net = NetT<float>;

template <class Real>
struct ForwardCacheT {
  int batch = 0;
  std::vector<std::vector<Real>> stage_in;   // input to each conv block
  std::vector<std::vector<Real>> stage_out;  // post-ReLU output of each block
  std::vector<int> stage_len;                // time length entering each block
  int last_len = 0;
  FourierCache<Real> fourier;
  std::vector<Real> features;  // batch x feature_dim
  std::vector<Real> logits;    // batch x num_classes
};

using ForwardCache = ForwardCacheT<float>;

// Deterministic forward through g; fills cache.features.
template <class Real>
void feature_forward(const NetT<Real>& net, const Real* x, int batch,
                     ForwardCacheT<Real>& cache);

// Affine map f over cached features; fills cache.logits.
template <class Real>
void classifier_forward(const NetT<Real>& net, ForwardCacheT<Real>& cache);

// Mean batch loss -log softmax(logits)[label]; writes the gradient
// (softmax - onehot)/batch into grad (batch x k).
template <class Real>
Real cross_entropy(const std::vector<Real>& logits,
                   const std::vector<int>& labels, int k,
                   std::type_identity_t<std::vector<Real>>* grad);

// Reverse pass from per-sample feature and logit gradients into the
// parameter gradient slots. Either gradient input may be empty (treated as
// zero). The classifier chain adds W^T grad_logits to the feature gradient.
template <class Real>
void net_backward(NetT<Real>& net, const Real* x, const ForwardCacheT<Real>& cache,
                  const std::vector<Real>& grad_features,
                  const std::vector<Real>& grad_logits);

template <class Real>
void zero_grads(NetT<Real>& net);

// SGD with momentum: v <- momentum*v + g; p <- p - lr*v.
template <class Real>
void optimizer_step(NetT<Real>& net, double lr, double momentum = 0.9);

extern template struct NetT<float>;
extern template struct NetT<double>;
extern template void feature_forward<float>(const NetT<float>&, const float*,
                                            int, ForwardCacheT<float>&);
extern template void feature_forward<double>(const NetT<double>&, const double*,
                                             int, ForwardCacheT<double>&);
extern template void classifier_forward<float>(const NetT<float>&,
                                               ForwardCacheT<float>&);
extern template void classifier_forward<double>(const NetT<double>&,
                                                ForwardCacheT<double>&);
extern template float cross_entropy<float>(const std::vector<float>&,
                                           const std::vector<int>&, int,
                                           std::vector<float>*);
extern template double cross_entropy<double>(const std::vector<double>&,
                                             const std::vector<int>&, int,
                                             std::vector<double>*);
extern template void net_backward<float>(NetT<float>&, const float*,
                                         const ForwardCacheT<float>&,
                                         const std::vector<float>&,
                                         const std::vector<float>&);
extern template void net_backward<double>(NetT<double>&, const double*,
                                          const ForwardCacheT<double>&,
                                          const std::vector<double>&,
                                          const std::vector<double>&);
extern template void zero_grads<float>(NetT<float>&);
extern template void zero_grads<double>(NetT<double>&);
extern template void optimizer_step<float>(NetT<float>&, double, double);
extern template void optimizer_step<double>(NetT<double>&, double, double);

// Parameter enumeration in a fixed order, used by the checkpoint writer and
// the finite-difference harness.
template <class Real>
std::vector<std::pair<std::string, std::vector<Real>*>> parameter_map(
    NetT<Real>& net);

extern template std::vector<std::pair<std::string, std::vector<float>*>>
parameter_map<float>(NetT<float>&);
extern template std::vector<std::pair<std::string, std::vector<double>*>>
parameter_map<double>(NetT<double>&);

template <class Real>
std::vector<std::pair<std::string, std::vector<Real>*>> gradient_map(
    NetT<Real>& net);

extern template std::vector<std::pair<std::string, std::vector<float>*>>
gradient_map<float>(NetT<float>&);
extern template std::vector<std::pair<std::string, std::vector<double>*>>
gradient_map<double>(NetT<double>&);

// float <-> double copies of a network (shared structure, converted values)
NetT<double> widen(const Net& net);

}  // namespace unijdot

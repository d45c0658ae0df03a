#include "unijdot/model.hpp"

#include <cmath>
#include <stdexcept>

#include "unijdot/kernels.hpp"

namespace unijdot {

void ModelConfig::validate() const {
  if (in_channels < 1 || seq_len < 2 || num_classes < 2)
    throw std::invalid_argument("model config: bad input dimensions");
  if (conv_channels.empty() || conv_channels.size() != conv_kernels.size())
    throw std::invalid_argument("model config: conv block mismatch");
  for (int k : conv_kernels)
    if (k < 1) throw std::invalid_argument("model config: bad kernel size");
  if (fourier && (fourier_modes < 1 || fourier_out < 1))
    throw std::invalid_argument("model config: bad fourier sizes");
  if (fourier && fourier_modes > next_pow2(seq_len) / 2 + 1)
    throw std::invalid_argument("model config: too many fourier modes");
}

void TrainConfig::validate() const {
  if (!(lambda > 0.0 && lambda < 1.0) && lambda != 1.0)
    throw std::invalid_argument("train config: lambda must be in (0,1]");
  if (mu < 0) throw std::invalid_argument("train config: mu must be >= 0");
  if (learning_rate <= 0)
    throw std::invalid_argument("train config: learning rate must be > 0");
  if (source_batch < 2 || target_batch < 2)
    throw std::invalid_argument("train config: batch sizes must be >= 2");
}

template <class Real>
NetT<Real> NetT<Real>::init(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  NetT<Real> net;
  net.cfg = cfg;
  Rng rng(seed);

  int in_ch = cfg.in_channels;
  for (size_t i = 0; i < cfg.conv_channels.size(); ++i) {
    ConvBlock<Real> blk;
    blk.in_ch = in_ch;
    blk.out_ch = cfg.conv_channels[i];
    blk.k = cfg.conv_kernels[i];
    blk.pad = blk.k / 2;
    const int nw = blk.out_ch * blk.in_ch * blk.k;
    blk.w.resize(nw);
    const double he = std::sqrt(2.0 / (blk.in_ch * blk.k));
    for (int j = 0; j < nw; ++j)
      blk.w[j] = static_cast<Real>(rng.normal(0.0, he));
    blk.b.assign(blk.out_ch, Real(0));
    blk.gw.assign(nw, Real(0));
    blk.gb.assign(blk.out_ch, Real(0));
    blk.vw.assign(nw, Real(0));
    blk.vb.assign(blk.out_ch, Real(0));
    net.blocks.push_back(std::move(blk));
    in_ch = cfg.conv_channels[i];
  }

  if (cfg.fourier)
    net.spectral = SpectralWeightsT<Real>::init(
        cfg.in_channels, cfg.fourier_out, cfg.fourier_modes,
        cfg.fourier_smoothing, rng, 2.0 / cfg.seq_len);

  net.classifier.in_dim = cfg.feature_dim();
  net.classifier.out_dim = cfg.num_classes;
  const int nc = net.classifier.in_dim * net.classifier.out_dim;
  net.classifier.w.resize(nc);
  const double sc = std::sqrt(1.0 / net.classifier.in_dim);
  for (int j = 0; j < nc; ++j)
    net.classifier.w[j] = static_cast<Real>(rng.normal(0.0, sc));
  net.classifier.b.assign(cfg.num_classes, Real(0));
  net.classifier.gw.assign(nc, Real(0));
  net.classifier.gb.assign(cfg.num_classes, Real(0));
  net.classifier.vw.assign(nc, Real(0));
  net.classifier.vb.assign(cfg.num_classes, Real(0));
  return net;
}

template <class Real>
void feature_forward(const NetT<Real>& net, const Real* x, int batch,
                     ForwardCacheT<Real>& cache) {
  const ModelConfig& cfg = net.cfg;
  cache.batch = batch;
  cache.stage_in.clear();
  cache.stage_out.clear();
  cache.stage_len.clear();

  int t = cfg.seq_len;
  std::vector<Real> cur(x, x + static_cast<size_t>(batch) * cfg.in_channels * t);
  for (const auto& blk : net.blocks) {
    const int tout = t + 2 * blk.pad - blk.k + 1;
    if (tout < 1)
      throw std::invalid_argument("feature_forward: sequence too short");
    cache.stage_in.push_back(cur);
    cache.stage_len.push_back(t);
    std::vector<Real> out(static_cast<size_t>(batch) * blk.out_ch * tout);
    kernels::conv1d_forward(cur.data(), batch, blk.in_ch, t, blk.w.data(),
                            blk.b.data(), blk.out_ch, blk.k, blk.pad,
                            out.data());
    for (Real& v : out)
      if (v < Real(0)) v = Real(0);  // ReLU
    cur = std::move(out);
    t = tout;
    cache.stage_out.push_back(cur);
  }
  cache.last_len = t;

  const int d = cfg.feature_dim();
  const int dc = cfg.conv_channels.back();
  cache.features.assign(static_cast<size_t>(batch) * d, Real(0));
  // global average pooling over time
  for (int b = 0; b < batch; ++b) {
    for (int o = 0; o < dc; ++o) {
      Real acc = 0;
      const Real* row = cur.data() + (static_cast<size_t>(b) * dc + o) * t;
      for (int p = 0; p < t; ++p) acc += row[p];
      cache.features[static_cast<size_t>(b) * d + o] = acc / static_cast<Real>(t);
    }
  }

  if (net.spectral) {
    std::vector<Real> ff(static_cast<size_t>(batch) * net.spectral->feature_dim());
    fourier_forward(x, batch, cfg.seq_len, *net.spectral, ff.data(),
                    &cache.fourier);
    const int fd = net.spectral->feature_dim();
    for (int b = 0; b < batch; ++b)
      std::copy_n(ff.begin() + static_cast<size_t>(b) * fd, fd,
                  cache.features.begin() + static_cast<size_t>(b) * d + dc);
  }
}

template <class Real>
void classifier_forward(const NetT<Real>& net, ForwardCacheT<Real>& cache) {
  const int d = net.classifier.in_dim;
  const int k = net.classifier.out_dim;
  const int batch = cache.batch;
  if (static_cast<int>(cache.features.size()) != batch * d)
    throw std::invalid_argument("classifier_forward: feature dim mismatch");
  cache.logits.assign(static_cast<size_t>(batch) * k, Real(0));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int b = 0; b < batch; ++b) {
    const Real* f = cache.features.data() + static_cast<size_t>(b) * d;
    Real* out = cache.logits.data() + static_cast<size_t>(b) * k;
    for (int o = 0; o < k; ++o) {
      Real acc = net.classifier.b[o];
      const Real* wrow = net.classifier.w.data() + static_cast<size_t>(o) * d;
      for (int j = 0; j < d; ++j) acc += wrow[j] * f[j];
      out[o] = acc;
    }
  }
}

template <class Real>
Real cross_entropy(const std::vector<Real>& logits,
                   const std::vector<int>& labels, int k,
                   std::type_identity_t<std::vector<Real>>* grad) {
  const int batch = static_cast<int>(labels.size());
  if (static_cast<int>(logits.size()) != batch * k)
    throw std::invalid_argument("cross_entropy: shape mismatch");
  for (int lbl : labels)
    if (lbl < 0 || lbl >= k)
      throw std::invalid_argument("cross_entropy: label out of range");

  std::vector<Real> probs(logits.size());
  kernels::softmax_rows(logits.data(), batch, k, probs.data());

  Real loss = 0;
  for (int b = 0; b < batch; ++b) {
    const Real* row = logits.data() + static_cast<size_t>(b) * k;
    Real mx = row[0];
    for (int c = 1; c < k; ++c) mx = std::max(mx, row[c]);
    Real lse = 0;
    for (int c = 0; c < k; ++c) lse += std::exp(row[c] - mx);
    loss += (mx + std::log(lse)) - row[labels[b]];
  }
  loss /= static_cast<Real>(batch);

  if (grad) {
    grad->assign(logits.size(), Real(0));
    for (int b = 0; b < batch; ++b) {
      for (int c = 0; c < k; ++c)
        (*grad)[static_cast<size_t>(b) * k + c] =
            probs[static_cast<size_t>(b) * k + c] / static_cast<Real>(batch);
      (*grad)[static_cast<size_t>(b) * k + labels[b]] -=
          Real(1) / static_cast<Real>(batch);
    }
  }
  return loss;
}

template <class Real>
void net_backward(NetT<Real>& net, const Real* x,
                  const ForwardCacheT<Real>& cache,
                  const std::vector<Real>& grad_features,
                  const std::vector<Real>& grad_logits) {
  const ModelConfig& cfg = net.cfg;
  const int batch = cache.batch;
  const int d = net.classifier.in_dim;
  const int k = net.classifier.out_dim;

  std::vector<Real> gfeat(static_cast<size_t>(batch) * d, Real(0));
  if (!grad_features.empty()) {
    if (grad_features.size() != gfeat.size())
      throw std::invalid_argument("net_backward: feature grad shape");
    gfeat = grad_features;
  }

  if (!grad_logits.empty()) {
    if (static_cast<int>(grad_logits.size()) != batch * k)
      throw std::invalid_argument("net_backward: logit grad shape");
    // classifier parameters
    for (int o = 0; o < k; ++o) {
      Real gb = 0;
      for (int b = 0; b < batch; ++b)
        gb += grad_logits[static_cast<size_t>(b) * k + o];
      net.classifier.gb[o] += gb;
      Real* gw = net.classifier.gw.data() + static_cast<size_t>(o) * d;
      for (int j = 0; j < d; ++j) {
        Real acc = 0;
        for (int b = 0; b < batch; ++b)
          acc += grad_logits[static_cast<size_t>(b) * k + o] *
                 cache.features[static_cast<size_t>(b) * d + j];
        gw[j] += acc;
      }
    }
    // chain into features
    for (int b = 0; b < batch; ++b)
      for (int j = 0; j < d; ++j) {
        Real acc = 0;
        for (int o = 0; o < k; ++o)
          acc += net.classifier.w[static_cast<size_t>(o) * d + j] *
                 grad_logits[static_cast<size_t>(b) * k + o];
        gfeat[static_cast<size_t>(b) * d + j] += acc;
      }
  }

  const int dc = cfg.conv_channels.back();
  const int tlast = cache.last_len;

  // un-pool into the last conv output, applying the ReLU mask
  std::vector<Real> gcur(static_cast<size_t>(batch) * dc * tlast, Real(0));
  const auto& last_out = cache.stage_out.back();
  for (int b = 0; b < batch; ++b)
    for (int o = 0; o < dc; ++o) {
      const Real g =
          gfeat[static_cast<size_t>(b) * d + o] / static_cast<Real>(tlast);
      Real* row = gcur.data() + (static_cast<size_t>(b) * dc + o) * tlast;
      const Real* act = last_out.data() + (static_cast<size_t>(b) * dc + o) * tlast;
      for (int p = 0; p < tlast; ++p) row[p] = act[p] > Real(0) ? g : Real(0);
    }

  // conv stack, last block to first
  int tout = tlast;
  for (int bi = static_cast<int>(net.blocks.size()) - 1; bi >= 0; --bi) {
    auto& blk = net.blocks[bi];
    const int tin = cache.stage_len[bi];
    const auto& in = cache.stage_in[bi];
    kernels::conv1d_backward_weights(in.data(), batch, blk.in_ch, tin,
                                     gcur.data(), blk.out_ch, tout, blk.k,
                                     blk.pad, blk.gw.data(), blk.gb.data());
    if (bi > 0) {
      std::vector<Real> gprev(static_cast<size_t>(batch) * blk.in_ch * tin);
      kernels::conv1d_backward_data(gcur.data(), batch, blk.out_ch, tout,
                                    blk.w.data(), blk.in_ch, blk.k, blk.pad,
                                    tin, gprev.data());
      // ReLU mask of the previous block's output
      const auto& prev_out = cache.stage_out[bi - 1];
      for (size_t i = 0; i < gprev.size(); ++i)
        if (prev_out[i] <= Real(0)) gprev[i] = Real(0);
      gcur = std::move(gprev);
      tout = tin;
    }
  }

  // spectral branch gradients from the tail of the feature vector
  if (net.spectral) {
    const int fd = net.spectral->feature_dim();
    std::vector<Real> gff(static_cast<size_t>(batch) * fd);
    for (int b = 0; b < batch; ++b)
      std::copy_n(gfeat.begin() + static_cast<size_t>(b) * d + dc, fd,
                  gff.begin() + static_cast<size_t>(b) * fd);
    fourier_backward(gff.data(), x, batch, cfg.seq_len, *net.spectral,
                     cache.fourier, static_cast<Real*>(nullptr));
  }
}

template <class Real>
void zero_grads(NetT<Real>& net) {
  for (auto& blk : net.blocks) {
    std::fill(blk.gw.begin(), blk.gw.end(), Real(0));
    std::fill(blk.gb.begin(), blk.gb.end(), Real(0));
  }
  if (net.spectral) {
    std::fill(net.spectral->g_re.begin(), net.spectral->g_re.end(), Real(0));
    std::fill(net.spectral->g_im.begin(), net.spectral->g_im.end(), Real(0));
  }
  std::fill(net.classifier.gw.begin(), net.classifier.gw.end(), Real(0));
  std::fill(net.classifier.gb.begin(), net.classifier.gb.end(), Real(0));
}

namespace {
template <class Real>
void sgd_update(std::vector<Real>& p, const std::vector<Real>& g,
                std::vector<Real>& v, double lr, double momentum) {
  for (size_t i = 0; i < p.size(); ++i) {
    v[i] = static_cast<Real>(momentum * v[i] + g[i]);
    p[i] -= static_cast<Real>(lr * v[i]);
  }
}
}  // namespace

template <class Real>
void optimizer_step(NetT<Real>& net, double lr, double momentum) {
  for (auto& blk : net.blocks) {
    sgd_update(blk.w, blk.gw, blk.vw, lr, momentum);
    sgd_update(blk.b, blk.gb, blk.vb, lr, momentum);
  }
  if (net.spectral) {
    sgd_update(net.spectral->w_re, net.spectral->g_re, net.spectral->v_re, lr,
               momentum);
    sgd_update(net.spectral->w_im, net.spectral->g_im, net.spectral->v_im, lr,
               momentum);
  }
  sgd_update(net.classifier.w, net.classifier.gw, net.classifier.vw, lr,
             momentum);
  sgd_update(net.classifier.b, net.classifier.gb, net.classifier.vb, lr,
             momentum);
}

template <class Real>
std::vector<std::pair<std::string, std::vector<Real>*>> parameter_map(
    NetT<Real>& net) {
  std::vector<std::pair<std::string, std::vector<Real>*>> out;
  for (size_t i = 0; i < net.blocks.size(); ++i) {
    out.emplace_back("conv" + std::to_string(i) + ".w", &net.blocks[i].w);
    out.emplace_back("conv" + std::to_string(i) + ".b", &net.blocks[i].b);
  }
  if (net.spectral) {
    out.emplace_back("spectral.re", &net.spectral->w_re);
    out.emplace_back("spectral.im", &net.spectral->w_im);
  }
  out.emplace_back("classifier.w", &net.classifier.w);
  out.emplace_back("classifier.b", &net.classifier.b);
  return out;
}

template <class Real>
std::vector<std::pair<std::string, std::vector<Real>*>> gradient_map(
    NetT<Real>& net) {
  std::vector<std::pair<std::string, std::vector<Real>*>> out;
  for (size_t i = 0; i < net.blocks.size(); ++i) {
    out.emplace_back("conv" + std::to_string(i) + ".w", &net.blocks[i].gw);
    out.emplace_back("conv" + std::to_string(i) + ".b", &net.blocks[i].gb);
  }
  if (net.spectral) {
    out.emplace_back("spectral.re", &net.spectral->g_re);
    out.emplace_back("spectral.im", &net.spectral->g_im);
  }
  out.emplace_back("classifier.w", &net.classifier.gw);
  out.emplace_back("classifier.b", &net.classifier.gb);
  return out;
}

NetT<double> widen(const Net& net) {
  NetT<double> out;
  out.cfg = net.cfg;
  for (const auto& blk : net.blocks) {
    ConvBlock<double> nb;
    nb.in_ch = blk.in_ch;
    nb.out_ch = blk.out_ch;
    nb.k = blk.k;
    nb.pad = blk.pad;
    nb.w.assign(blk.w.begin(), blk.w.end());
    nb.b.assign(blk.b.begin(), blk.b.end());
    nb.gw.assign(blk.w.size(), 0.0);
    nb.gb.assign(blk.b.size(), 0.0);
    nb.vw.assign(blk.w.size(), 0.0);
    nb.vb.assign(blk.b.size(), 0.0);
    out.blocks.push_back(std::move(nb));
  }
  if (net.spectral) {
    SpectralWeightsT<double> s;
    s.modes = net.spectral->modes;
    s.in_channels = net.spectral->in_channels;
    s.out_channels = net.spectral->out_channels;
    s.smoothing = net.spectral->smoothing;
    s.w_re.assign(net.spectral->w_re.begin(), net.spectral->w_re.end());
    s.w_im.assign(net.spectral->w_im.begin(), net.spectral->w_im.end());
    s.g_re.assign(s.w_re.size(), 0.0);
    s.g_im.assign(s.w_im.size(), 0.0);
    s.v_re.assign(s.w_re.size(), 0.0);
    s.v_im.assign(s.w_im.size(), 0.0);
    out.spectral = std::move(s);
  }
  out.classifier.in_dim = net.classifier.in_dim;
  out.classifier.out_dim = net.classifier.out_dim;
  out.classifier.w.assign(net.classifier.w.begin(), net.classifier.w.end());
  out.classifier.b.assign(net.classifier.b.begin(), net.classifier.b.end());
  out.classifier.gw.assign(net.classifier.w.size(), 0.0);
  out.classifier.gb.assign(net.classifier.b.size(), 0.0);
  out.classifier.vw.assign(net.classifier.w.size(), 0.0);
  out.classifier.vb.assign(net.classifier.b.size(), 0.0);
  return out;
}

template struct NetT<float>;
template struct NetT<double>;
template void feature_forward<float>(const NetT<float>&, const float*, int,
                                     ForwardCacheT<float>&);
template void feature_forward<double>(const NetT<double>&, const double*, int,
                                      ForwardCacheT<double>&);
template void classifier_forward<float>(const NetT<float>&,
                                        ForwardCacheT<float>&);
template void classifier_forward<double>(const NetT<double>&,
                                         ForwardCacheT<double>&);
template float cross_entropy<float>(const std::vector<float>&,
                                    const std::vector<int>&, int,
                                    std::vector<float>*);
template double cross_entropy<double>(const std::vector<double>&,
                                      const std::vector<int>&, int,
                                      std::vector<double>*);
template void net_backward<float>(NetT<float>&, const float*,
                                  const ForwardCacheT<float>&,
                                  const std::vector<float>&,
                                  const std::vector<float>&);
template void net_backward<double>(NetT<double>&, const double*,
                                   const ForwardCacheT<double>&,
                                   const std::vector<double>&,
                                   const std::vector<double>&);
template void zero_grads<float>(NetT<float>&);
template void zero_grads<double>(NetT<double>&);
template void optimizer_step<float>(NetT<float>&, double, double);
template void optimizer_step<double>(NetT<double>&, double, double);
template std::vector<std::pair<std::string, std::vector<float>*>>
parameter_map<float>(NetT<float>&);
template std::vector<std::pair<std::string, std::vector<double>*>>
parameter_map<double>(NetT<double>&);
template std::vector<std::pair<std::string, std::vector<float>*>>
gradient_map<float>(NetT<float>&);
template std::vector<std::pair<std::string, std::vector<double>*>>
gradient_map<double>(NetT<double>&);

}  // namespace unijdot

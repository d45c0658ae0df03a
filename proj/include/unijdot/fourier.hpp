#pragma once

#include <cmath>
#include <cstdint>
#include <type_traits>
#include <vector>

#include "unijdot/rng.hpp"

namespace unijdot {

// Smallest power of two >= n.
int next_pow2(int n);

// Unnormalized real-input DFT: X_k = sum_t x_t exp(-2*pi*i*k*t/P), where P is
// the input length zero-padded to the next power of two. Returns modes
// 0..P/2 interleaved (re, im). Radix-2, computed with double twiddles.
template <class Real>
std::vector<Real> rfft(const std::vector<Real>& x);

// Inverse of rfft for test use: reconstructs the first t_len samples.
template <class Real>
std::vector<Real> irfft(const std::vector<Real>& spectrum, int t_len);

// Linear mix of the retained low modes of each input channel, with a
// quarter-cosine attenuation s_k = cos(pi*k / (2*(M-1))) over modes (s_0 = 1,
// s_{M-1} = 0), read out in polar coordinates. Output per sample is the
// amplitude block followed by the phase block, each out_channels x modes.
template <class Real>
struct SpectralWeightsT {
  int modes = 0;        // retained low frequencies M
  int in_channels = 0;
  int out_channels = 0;
  bool smoothing = true;
  std::vector<Real> w_re, w_im;  // out x in x modes
  std::vector<Real> g_re, g_im;  // gradient slots
  std::vector<Real> v_re, v_im;  // optimizer momentum slots

  int weight_count() const { return out_channels * in_channels * modes; }
  int feature_dim() const { return 2 * out_channels * modes; }

  // weight_scale compensates the unnormalized spectrum magnitude (~T/2 for
  // unit-amplitude signals), keeping initial output features near unit scale
  static SpectralWeightsT init(int in_channels, int out_channels, int modes,
                               bool smoothing, Rng& rng,
                               double weight_scale = 1.0) {
    SpectralWeightsT s;
    s.modes = modes;
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.smoothing = smoothing;
    const int n = s.weight_count();
    s.w_re.resize(n);
    s.w_im.resize(n);
    const double scale =
        weight_scale / std::sqrt(static_cast<double>(in_channels * modes));
    for (int i = 0; i < n; ++i) {
      s.w_re[i] = static_cast<Real>(rng.normal(0.0, scale));
      s.w_im[i] = static_cast<Real>(rng.normal(0.0, scale));
    }
    s.g_re.assign(n, Real(0));
    s.g_im.assign(n, Real(0));
    s.v_re.assign(n, Real(0));
    s.v_im.assign(n, Real(0));
    return s;
  }

  double smoothing_factor(int k) const {
    if (!smoothing || modes <= 1) return 1.0;
    return std::cos(M_PI * k / (2.0 * (modes - 1)));
  }
};

template <class Real>
struct FourierCache {
  int batch = 0, t_len = 0, padded = 0;
  std::vector<Real> spectra;  // batch x in x (padded/2+1) x 2
  std::vector<Real> mixed;    // batch x out x modes x 2 (the z values)
};

// outputs: batch x feature_dim, layout [amplitudes | phases] per sample.
// Phase of an exactly-zero coefficient is 0.
template <class Real>
void fourier_forward(const Real* x, int batch, int t_len,
                     const SpectralWeightsT<Real>& w, Real* out,
                     std::type_identity_t<FourierCache<Real>>* cache);

// Accumulates into w.g_re/g_im and, when gx != nullptr, writes input
// gradients (batch x in_channels x t_len). Exact reverse of fourier_forward;
// |z| and atan2 take subgradient 0 at z = 0.
template <class Real>
void fourier_backward(const Real* grad_out, const Real* x, int batch,
                      int t_len, SpectralWeightsT<Real>& w,
                      const FourierCache<Real>& cache,
                      std::type_identity_t<Real>* gx);

extern template std::vector<float> rfft<float>(const std::vector<float>&);
extern template std::vector<double> rfft<double>(const std::vector<double>&);
extern template std::vector<float> irfft<float>(const std::vector<float>&, int);
extern template std::vector<double> irfft<double>(const std::vector<double>&, int);
extern template struct SpectralWeightsT<float>;
extern template struct SpectralWeightsT<double>;
extern template void fourier_forward<float>(const float*, int, int,
                                            const SpectralWeightsT<float>&,
                                            float*, FourierCache<float>*);
extern template void fourier_forward<double>(const double*, int, int,
                                             const SpectralWeightsT<double>&,
                                             double*, FourierCache<double>*);
extern template void fourier_backward<float>(const float*, const float*, int,
                                             int, SpectralWeightsT<float>&,
                                             const FourierCache<float>&,
                                             float*);
extern template void fourier_backward<double>(const double*, const double*,
                                              int, int,
                                              SpectralWeightsT<double>&,
                                              const FourierCache<double>&,
                                              double*);

}  // namespace unijdot

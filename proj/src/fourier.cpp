#include "unijdot/fourier.hpp"

#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace unijdot {

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace {

// In-place iterative radix-2 complex FFT (sign = -1 forward, +1 inverse,
// both unnormalized).
template <class Real>
void fft_inplace(std::vector<Real>& re, std::vector<Real>& im, int sign) {
  const int n = static_cast<int>(re.size());
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * M_PI / len;
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (int i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (int j = 0; j < len / 2; ++j) {
        const double ur = re[i + j], ui = im[i + j];
        const double vr = re[i + j + len / 2] * cr - im[i + j + len / 2] * ci;
        const double vi = re[i + j + len / 2] * ci + im[i + j + len / 2] * cr;
        re[i + j] = static_cast<Real>(ur + vr);
        im[i + j] = static_cast<Real>(ui + vi);
        re[i + j + len / 2] = static_cast<Real>(ur - vr);
        im[i + j + len / 2] = static_cast<Real>(ui - vi);
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

}  // namespace

template <class Real>
std::vector<Real> rfft(const std::vector<Real>& x) {
  const int t = static_cast<int>(x.size());
  if (t < 2) throw std::invalid_argument("rfft: need at least 2 samples");
  const int p = next_pow2(t);
  std::vector<Real> re(p, Real(0)), im(p, Real(0));
  std::copy(x.begin(), x.end(), re.begin());
  fft_inplace(re, im, -1);
  std::vector<Real> out(2 * (p / 2 + 1));
  for (int k = 0; k <= p / 2; ++k) {
    out[2 * k] = re[k];
    out[2 * k + 1] = im[k];
  }
  return out;
}

template <class Real>
std::vector<Real> irfft(const std::vector<Real>& spectrum, int t_len) {
  const int half = static_cast<int>(spectrum.size()) / 2;  // p/2 + 1
  const int p = 2 * (half - 1);
  std::vector<Real> re(p), im(p);
  for (int k = 0; k < half; ++k) {
    re[k] = spectrum[2 * k];
    im[k] = spectrum[2 * k + 1];
  }
  for (int k = half; k < p; ++k) {  // conjugate symmetry
    re[k] = spectrum[2 * (p - k)];
    im[k] = -spectrum[2 * (p - k) + 1];
  }
  fft_inplace(re, im, +1);
  std::vector<Real> out(t_len);
  for (int i = 0; i < t_len; ++i) out[i] = static_cast<Real>(re[i] / p);
  return out;
}

template <class Real>
void fourier_forward(const Real* x, int batch, int t_len,
                     const SpectralWeightsT<Real>& w, Real* out,
                     std::type_identity_t<FourierCache<Real>>* cache) {
  const int cin = w.in_channels;
  const int cout = w.out_channels;
  const int modes = w.modes;
  const int p = next_pow2(t_len);
  const int half = p / 2 + 1;
  if (modes > half)
    throw std::invalid_argument("fourier_forward: modes exceed spectrum size");

  std::vector<Real> spectra(static_cast<size_t>(batch) * cin * half * 2);
  std::vector<Real> mixed(static_cast<size_t>(batch) * cout * modes * 2);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < cin; ++c) {
      const Real* sig = x + (static_cast<size_t>(b) * cin + c) * t_len;
      const auto sp = rfft(std::vector<Real>(sig, sig + t_len));
      std::copy(sp.begin(), sp.end(),
                spectra.begin() + (static_cast<size_t>(b) * cin + c) * half * 2);
    }
    for (int o = 0; o < cout; ++o) {
      for (int k = 0; k < modes; ++k) {
        const Real s = static_cast<Real>(w.smoothing_factor(k));
        Real zr = 0, zi = 0;
        for (int c = 0; c < cin; ++c) {
          const Real* sp =
              spectra.data() + (static_cast<size_t>(b) * cin + c) * half * 2;
          const Real ur = s * sp[2 * k];
          const Real ui = s * sp[2 * k + 1];
          const size_t wi_ = (static_cast<size_t>(o) * cin + c) * modes + k;
          zr += w.w_re[wi_] * ur - w.w_im[wi_] * ui;
          zi += w.w_re[wi_] * ui + w.w_im[wi_] * ur;
        }
        const size_t mi = ((static_cast<size_t>(b) * cout + o) * modes + k) * 2;
        mixed[mi] = zr;
        mixed[mi + 1] = zi;
        const Real amp = std::sqrt(zr * zr + zi * zi);
        const Real phase =
            (zr == Real(0) && zi == Real(0)) ? Real(0) : std::atan2(zi, zr);
        Real* dst = out + static_cast<size_t>(b) * w.feature_dim();
        dst[o * modes + k] = amp;
        dst[cout * modes + o * modes + k] = phase;
      }
    }
  }

  if (cache) {
    cache->batch = batch;
    cache->t_len = t_len;
    cache->padded = p;
    cache->spectra = std::move(spectra);
    cache->mixed = std::move(mixed);
  }
}

template <class Real>
void fourier_backward(const Real* grad_out, const Real* /*x*/, int batch,
                      int t_len, SpectralWeightsT<Real>& w,
                      const FourierCache<Real>& cache,
                      std::type_identity_t<Real>* gx) {
  const int cin = w.in_channels;
  const int cout = w.out_channels;
  const int modes = w.modes;
  const int p = cache.padded;
  const int half = p / 2 + 1;
  const int fdim = w.feature_dim();

  // dz for every mixed coefficient (shared by weight and input passes)
  std::vector<Real> dz(static_cast<size_t>(batch) * cout * modes * 2);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int b = 0; b < batch; ++b) {
    const Real* g = grad_out + static_cast<size_t>(b) * fdim;
    for (int o = 0; o < cout; ++o) {
      for (int k = 0; k < modes; ++k) {
        const size_t mi = ((static_cast<size_t>(b) * cout + o) * modes + k) * 2;
        const Real zr = cache.mixed[mi], zi = cache.mixed[mi + 1];
        const Real r2 = zr * zr + zi * zi;
        Real dzr = 0, dzi = 0;
        if (r2 > Real(0)) {
          const Real r = std::sqrt(r2);
          const Real ga = g[o * modes + k];
          const Real gp = g[cout * modes + o * modes + k];
          dzr = ga * zr / r - gp * zi / r2;
          dzi = ga * zi / r + gp * zr / r2;
        }
        dz[mi] = dzr;
        dz[mi + 1] = dzi;
      }
    }
  }

  // weight gradients: one thread per output channel, batch accumulated in order
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int o = 0; o < cout; ++o) {
    for (int b = 0; b < batch; ++b) {
      for (int k = 0; k < modes; ++k) {
        const Real s = static_cast<Real>(w.smoothing_factor(k));
        const size_t mi = ((static_cast<size_t>(b) * cout + o) * modes + k) * 2;
        const Real dzr = dz[mi], dzi = dz[mi + 1];
        for (int c = 0; c < cin; ++c) {
          const Real* sp = cache.spectra.data() +
                           (static_cast<size_t>(b) * cin + c) * half * 2;
          const Real ur = s * sp[2 * k];
          const Real ui = s * sp[2 * k + 1];
          const size_t wi_ = (static_cast<size_t>(o) * cin + c) * modes + k;
          w.g_re[wi_] += dzr * ur + dzi * ui;
          w.g_im[wi_] += dzi * ur - dzr * ui;
        }
      }
    }
  }

  if (!gx) return;
  std::fill(gx, gx + static_cast<size_t>(batch) * cin * t_len, Real(0));

  // input gradients through the retained modes of the DFT:
  // Re X_k = sum_t x_t cos(2 pi k t / P), Im X_k = -sum_t x_t sin(...)
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < cin; ++c) {
      Real* gxr = gx + (static_cast<size_t>(b) * cin + c) * t_len;
      for (int k = 0; k < modes; ++k) {
        const Real s = static_cast<Real>(w.smoothing_factor(k));
        Real gsr = 0, gsi = 0;  // gradient on the (unsmoothed) spectrum
        for (int o = 0; o < cout; ++o) {
          const size_t mi = ((static_cast<size_t>(b) * cout + o) * modes + k) * 2;
          const size_t wi_ = (static_cast<size_t>(o) * cin + c) * modes + k;
          gsr += dz[mi] * w.w_re[wi_] + dz[mi + 1] * w.w_im[wi_];
          gsi += dz[mi + 1] * w.w_re[wi_] - dz[mi] * w.w_im[wi_];
        }
        gsr *= s;
        gsi *= s;
        if (gsr == Real(0) && gsi == Real(0)) continue;
        for (int t = 0; t < t_len; ++t) {
          const double ang = 2.0 * M_PI * k * t / p;
          gxr[t] += static_cast<Real>(gsr * std::cos(ang) - gsi * std::sin(ang));
        }
      }
    }
  }
}

template std::vector<float> rfft<float>(const std::vector<float>&);
template std::vector<double> rfft<double>(const std::vector<double>&);
template std::vector<float> irfft<float>(const std::vector<float>&, int);
template std::vector<double> irfft<double>(const std::vector<double>&, int);
template struct SpectralWeightsT<float>;
template struct SpectralWeightsT<double>;
template void fourier_forward<float>(const float*, int, int,
                                     const SpectralWeightsT<float>&, float*,
                                     FourierCache<float>*);
template void fourier_forward<double>(const double*, int, int,
                                      const SpectralWeightsT<double>&, double*,
                                      FourierCache<double>*);
template void fourier_backward<float>(const float*, const float*, int, int,
                                      SpectralWeightsT<float>&,
                                      const FourierCache<float>&, float*);
template void fourier_backward<double>(const double*, const double*, int, int,
                                       SpectralWeightsT<double>&,
                                       const FourierCache<double>&, double*);

}  // namespace unijdot

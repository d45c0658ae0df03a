#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "unijdot/fourier.hpp"
#include "unijdot/rng.hpp"

using namespace unijdot;

namespace {

// O(T^2) reference DFT in double
std::vector<std::complex<double>> dft_oracle(const std::vector<double>& x) {
  const int p = next_pow2(static_cast<int>(x.size()));
  std::vector<std::complex<double>> out(p / 2 + 1);
  for (int k = 0; k <= p / 2; ++k) {
    std::complex<double> acc = 0;
    for (size_t t = 0; t < x.size(); ++t)
      acc += x[t] * std::polar(1.0, -2.0 * M_PI * k * t / p);
    out[k] = acc;
  }
  return out;
}

}  // namespace

TEST_CASE("rfft of a constant signal is DC only") {
  const std::vector<double> x(8, 3.5);
  const auto sp = rfft(x);
  CHECK(sp[0] == doctest::Approx(8 * 3.5).epsilon(1e-9));
  CHECK(std::abs(sp[1]) < 1e-6);
  for (size_t k = 1; k < sp.size() / 2; ++k) {
    CHECK(std::abs(sp[2 * k]) < 1e-6);
    CHECK(std::abs(sp[2 * k + 1]) < 1e-6);
  }
}

TEST_CASE("rfft localizes a pure tone") {
  std::vector<double> x(8);
  for (int t = 0; t < 8; ++t) x[t] = std::cos(2.0 * M_PI * 2 * t / 8);
  const auto sp = rfft(x);
  for (int k = 0; k <= 4; ++k) {
    const double re = sp[2 * k], im = sp[2 * k + 1];
    if (k == 2) {
      CHECK(re == doctest::Approx(4.0).epsilon(1e-9));
      CHECK(std::abs(im) < 1e-6);
    } else {
      CHECK(std::abs(re) < 1e-6);
      CHECK(std::abs(im) < 1e-6);
    }
  }
}

TEST_CASE("rfft satisfies Parseval on random signals") {
  Rng rng(1);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> x(16);
    for (auto& v : x) v = rng.uniform(-2, 2);
    const auto sp = rfft(x);
    double time_energy = 0;
    for (double v : x) time_energy += v * v;
    double freq_energy = sp[0] * sp[0] + sp[1] * sp[1];
    for (int k = 1; k < 8; ++k)
      freq_energy += 2 * (sp[2 * k] * sp[2 * k] + sp[2 * k + 1] * sp[2 * k + 1]);
    freq_energy += sp[16] * sp[16] + sp[17] * sp[17];
    freq_energy /= 16;
    CHECK(freq_energy == doctest::Approx(time_energy).epsilon(1e-6));
  }
}

TEST_CASE("rfft is linear") {
  Rng rng(2);
  std::vector<double> x(32), y(32);
  for (auto& v : x) v = rng.uniform(-1, 1);
  for (auto& v : y) v = rng.uniform(-1, 1);
  const double a = 2.5, b = -0.75;
  std::vector<double> z(32);
  for (int i = 0; i < 32; ++i) z[i] = a * x[i] + b * y[i];
  const auto sx = rfft(x), sy = rfft(y), sz = rfft(z);
  for (size_t i = 0; i < sz.size(); ++i)
    CHECK(std::abs(sz[i] - (a * sx[i] + b * sy[i])) < 1e-6);
}

TEST_CASE("rfft matches the direct DFT and inverts, non-power-of-two") {
  Rng rng(3);
  std::vector<double> x(12);
  for (auto& v : x) v = rng.uniform(-1, 1);
  const auto sp = rfft(x);  // zero-padded to 16
  const auto ref = dft_oracle(x);
  REQUIRE(sp.size() == 2 * ref.size());
  for (size_t k = 0; k < ref.size(); ++k) {
    CHECK(sp[2 * k] == doctest::Approx(ref[k].real()).epsilon(1e-9));
    CHECK(sp[2 * k + 1] == doctest::Approx(ref[k].imag()).epsilon(1e-9));
  }
  const auto back = irfft(sp, 12);
  for (int i = 0; i < 12; ++i)
    CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-5));
}

TEST_CASE("rfft rejects tiny inputs") {
  CHECK_THROWS_AS(rfft(std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("smoothing window endpoints") {
  Rng rng(4);
  auto w = SpectralWeightsT<double>::init(1, 1, 6, true, rng);
  CHECK(w.smoothing_factor(0) == doctest::Approx(1.0));
  CHECK(std::abs(w.smoothing_factor(5)) < 1e-15);
  for (int k = 1; k < 5; ++k) {
    CHECK(w.smoothing_factor(k) < w.smoothing_factor(k - 1));
    CHECK(w.smoothing_factor(k) > 0);
  }
}

TEST_CASE("fourier layer with zero weights outputs zero") {
  Rng rng(5);
  auto w = SpectralWeightsT<double>::init(2, 3, 4, true, rng);
  std::fill(w.w_re.begin(), w.w_re.end(), 0.0);
  std::fill(w.w_im.begin(), w.w_im.end(), 0.0);
  std::vector<double> x(2 * 2 * 16);
  for (auto& v : x) v = rng.uniform(-1, 1);
  std::vector<double> out(2 * w.feature_dim());
  fourier_forward(x.data(), 2, 16, w, out.data(), nullptr);
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("fourier layer passes DC through an identity weight") {
  Rng rng(6);
  auto w = SpectralWeightsT<double>::init(1, 1, 1, true, rng);
  w.w_re = {1.0};
  w.w_im = {0.0};
  const double c = 2.25;
  std::vector<double> x(8, c);
  std::vector<double> out(2);
  fourier_forward(x.data(), 1, 8, w, out.data(), nullptr);
  CHECK(out[0] == doctest::Approx(8 * c).epsilon(1e-9));  // amplitude
  CHECK(out[1] == doctest::Approx(0.0));                  // phase
}

TEST_CASE("fourier forward matches a direct composition oracle") {
  Rng rng(7);
  const int cin = 2, cout = 3, modes = 4, t = 16, batch = 2;
  auto w = SpectralWeightsT<double>::init(cin, cout, modes, true, rng);
  std::vector<double> x(batch * cin * t);
  for (auto& v : x) v = rng.uniform(-1, 1);
  std::vector<double> out(batch * w.feature_dim());
  fourier_forward(x.data(), batch, t, w, out.data(), nullptr);

  for (int b = 0; b < batch; ++b) {
    // per-channel direct DFT
    std::vector<std::vector<std::complex<double>>> spectra;
    for (int c = 0; c < cin; ++c) {
      std::vector<double> sig(x.begin() + (b * cin + c) * t,
                              x.begin() + (b * cin + c + 1) * t);
      spectra.push_back(dft_oracle(sig));
    }
    for (int o = 0; o < cout; ++o)
      for (int k = 0; k < modes; ++k) {
        const double s = std::cos(M_PI * k / (2.0 * (modes - 1)));
        std::complex<double> z = 0;
        for (int c = 0; c < cin; ++c) {
          const std::complex<double> wc(w.w_re[(o * cin + c) * modes + k],
                                        w.w_im[(o * cin + c) * modes + k]);
          z += wc * (s * spectra[c][k]);
        }
        const double amp = out[b * w.feature_dim() + o * modes + k];
        const double ph =
            out[b * w.feature_dim() + cout * modes + o * modes + k];
        CHECK(amp == doctest::Approx(std::abs(z)).epsilon(1e-5));
        CHECK(ph == doctest::Approx(std::arg(z)).epsilon(1e-5));
      }
  }
}

TEST_CASE("phases stay in (-pi, pi]") {
  Rng rng(8);
  const int cin = 2, cout = 2, modes = 5, t = 16, batch = 4;
  auto w = SpectralWeightsT<float>::init(cin, cout, modes, true, rng);
  std::vector<float> x(batch * cin * t);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-1, 1));
  std::vector<float> out(batch * w.feature_dim());
  fourier_forward(x.data(), batch, t, w, out.data(), nullptr);
  const int half = cout * modes;
  for (int b = 0; b < batch; ++b)
    for (int i = 0; i < half; ++i) {
      const float ph = out[b * w.feature_dim() + half + i];
      CHECK(ph > -static_cast<float>(M_PI));
      CHECK(ph <= static_cast<float>(M_PI));
    }
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  Rng rng(9);
  auto w = SpectralWeightsT<double>::init(2, 2, 3, true, rng);
  std::vector<double> x(2 * 2 * 8);
  for (auto& v : x) v = rng.uniform(-1, 1);
  std::vector<double> out(2 * w.feature_dim());
  FourierCache<double> cache;
  fourier_forward(x.data(), 2, 8, w, out.data(), &cache);
  std::vector<double> gout(out.size(), 0.0);
  std::vector<double> gx(x.size());
  fourier_backward(gout.data(), x.data(), 2, 8, w, cache, gx.data());
  for (double g : w.g_re) CHECK(g == 0.0);
  for (double g : w.g_im) CHECK(g == 0.0);
  for (double g : gx) CHECK(g == 0.0);
}

namespace {

// scalar loss = sum of fixed random coefficients times layer outputs
struct FdProbe {
  SpectralWeightsT<double> w;
  std::vector<double> x;
  std::vector<double> coeff;
  int batch, t;

  double loss() const {
    SpectralWeightsT<double> wc = w;
    std::vector<double> out(batch * wc.feature_dim());
    fourier_forward(x.data(), batch, t, wc, out.data(), nullptr);
    double acc = 0;
    for (size_t i = 0; i < out.size(); ++i) acc += coeff[i] * out[i];
    return acc;
  }
};

}  // namespace

TEST_CASE("fourier backward matches central finite differences") {
  Rng rng(10);
  for (int inst = 0; inst < 20; ++inst) {
    FdProbe p;
    p.batch = 1;
    p.t = 8;
    p.w = SpectralWeightsT<double>::init(2, 2, 3, true, rng);
    p.x.resize(p.batch * 2 * p.t);
    for (auto& v : p.x) v = rng.uniform(-1, 1);
    p.coeff.resize(p.batch * p.w.feature_dim());
    for (auto& v : p.coeff) v = rng.uniform(-1, 1);

    std::vector<double> out(p.coeff.size());
    FourierCache<double> cache;
    fourier_forward(p.x.data(), p.batch, p.t, p.w, out.data(), &cache);
    std::vector<double> gx(p.x.size());
    fourier_backward(p.coeff.data(), p.x.data(), p.batch, p.t, p.w, cache,
                     gx.data());

    const double step = 1e-4;
    auto check_grad = [&](double* param, double analytic) {
      const double save = *param;
      *param = save + step;
      const double up = p.loss();
      *param = save - step;
      const double down = p.loss();
      *param = save;
      const double fd = (up - down) / (2 * step);
      const double tol = 1e-4 * std::max({1.0, std::abs(fd), std::abs(analytic)});
      CHECK(std::abs(fd - analytic) <= tol);
    };

    for (size_t i = 0; i < p.x.size(); ++i) check_grad(&p.x[i], gx[i]);
    for (size_t i = 0; i < p.w.w_re.size(); ++i)
      check_grad(&p.w.w_re[i], p.w.g_re[i]);
    for (size_t i = 0; i < p.w.w_im.size(); ++i)
      check_grad(&p.w.w_im[i], p.w.g_im[i]);
  }
}

TEST_CASE("amplitude gradients are scale invariant") {
  Rng rng(11);
  auto w = SpectralWeightsT<double>::init(1, 2, 4, true, rng);
  std::vector<double> x(16);
  for (auto& v : x) v = rng.uniform(0.5, 1.5);

  auto amp_grad = [&](const std::vector<double>& input) {
    SpectralWeightsT<double> wc = w;
    std::vector<double> out(wc.feature_dim());
    FourierCache<double> cache;
    fourier_forward(input.data(), 1, 16, wc, out.data(), &cache);
    // amplitude-only loss: sum of the amplitude block
    std::vector<double> gout(out.size(), 0.0);
    for (int i = 0; i < wc.out_channels * wc.modes; ++i) gout[i] = 1.0;
    std::vector<double> gx(input.size());
    fourier_backward(gout.data(), input.data(), 1, 16, wc, cache, gx.data());
    return gx;
  };

  std::vector<double> x2(x);
  for (auto& v : x2) v *= 2.0;
  const auto g1 = amp_grad(x);
  const auto g2 = amp_grad(x2);
  // |z| is homogeneous of degree 1, so its input gradient is unchanged
  for (size_t i = 0; i < g1.size(); ++i)
    CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-9));
}

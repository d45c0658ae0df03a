// Timing comparison between the serial reference kernels and the OpenMP
// entry points. Run: bench_kernels [repeats]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "unijdot/kernels.hpp"
#include "unijdot/rng.hpp"

using namespace unijdot;
using clock_type = std::chrono::steady_clock;

namespace {

double time_ms(int repeats, const std::function<void()>& fn) {
  fn();  // warm up
  const auto t0 = clock_type::now();
  for (int r = 0; r < repeats; ++r) fn();
  const auto t1 = clock_type::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / repeats;
}

void report(const char* name, double serial_ms, double parallel_ms) {
  std::printf("%-28s %10.3f ms %10.3f ms %8.2fx\n", name, serial_ms,
              parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 20;
  std::printf("threads: %d, repeats: %d\n", kernels::thread_count(), repeats);
  std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

  Rng rng(1);

  {
    const int n = 512, m = 512, d = 64;
    std::vector<float> a(n * d), b(m * d), out(n * m);
    for (auto& x : a) x = static_cast<float>(rng.uniform(-1, 1));
    for (auto& x : b) x = static_cast<float>(rng.uniform(-1, 1));
    const double s = time_ms(repeats, [&] {
      kernels::serial::pairwise_sq_dist(a.data(), n, b.data(), m, d, out.data());
    });
    const double p = time_ms(repeats, [&] {
      kernels::pairwise_sq_dist(a.data(), n, b.data(), m, d, out.data());
    });
    report("pairwise_sq_dist 512x512x64", s, p);
  }

  {
    const int rows = 2048, cols = 128;
    std::vector<float> in(rows * cols), out(rows * cols);
    for (auto& x : in) x = static_cast<float>(rng.uniform(-5, 5));
    const double s = time_ms(repeats, [&] {
      kernels::serial::softmax_rows(in.data(), rows, cols, out.data());
    });
    const double p = time_ms(repeats, [&] {
      kernels::softmax_rows(in.data(), rows, cols, out.data());
    });
    report("softmax_rows 2048x128", s, p);
  }

  {
    const int n = 256, m = 256;
    std::vector<double> logk(n * m), v(m, 0.0), out(n);
    for (auto& x : logk) x = rng.uniform(-50, 0);
    const double s = time_ms(repeats, [&] {
      kernels::serial::lse_rows(logk.data(), n, m, v.data(), out.data());
    });
    const double p = time_ms(repeats, [&] {
      kernels::lse_rows(logk.data(), n, m, v.data(), out.data());
    });
    report("sinkhorn row update 256x256", s, p);
  }

  {
    const int batch = 64, cin = 9, t = 128, cout = 32, k = 7, pad = 3;
    std::vector<float> x(batch * cin * t), w(cout * cin * k), b(cout);
    std::vector<float> y(static_cast<size_t>(batch) * cout * t);
    for (auto& v : x) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : w) v = static_cast<float>(rng.uniform(-1, 1));
    const double s = time_ms(repeats, [&] {
      kernels::serial::conv1d_forward(x.data(), batch, cin, t, w.data(),
                                      b.data(), cout, k, pad, y.data());
    });
    const double p = time_ms(repeats, [&] {
      kernels::conv1d_forward(x.data(), batch, cin, t, w.data(), b.data(),
                              cout, k, pad, y.data());
    });
    report("conv1d fwd 64x9x128 -> 32", s, p);
  }

  {
    const int n = 4096, L = 16, d = 64;
    std::vector<float> pts(static_cast<size_t>(n) * d), cen(L * d);
    std::vector<int> assign(n);
    for (auto& v : pts) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : cen) v = static_cast<float>(rng.uniform(-1, 1));
    const double s = time_ms(repeats, [&] {
      kernels::serial::assign_nearest(pts.data(), n, cen.data(), L, d,
                                      assign.data(),
                                      static_cast<float*>(nullptr));
    });
    const double p = time_ms(repeats, [&] {
      kernels::assign_nearest(pts.data(), n, cen.data(), L, d, assign.data(),
                              static_cast<float*>(nullptr));
    });
    report("assign_nearest 4096x16x64", s, p);
  }

  return 0;
}

#include "unijdot/thresholding.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace unijdot {

ThresholdMethod threshold_method_from_string(const std::string& s) {
  if (s == "yen") return ThresholdMethod::Yen;
  if (s == "otsu") return ThresholdMethod::Otsu;
  if (s == "triangle") return ThresholdMethod::Triangle;
  if (s == "li") return ThresholdMethod::Li;
  throw std::invalid_argument("unknown threshold method: " + s);
}

std::string to_string(ThresholdMethod m) {
  switch (m) {
    case ThresholdMethod::Yen: return "yen";
    case ThresholdMethod::Otsu: return "otsu";
    case ThresholdMethod::Triangle: return "triangle";
    case ThresholdMethod::Li: return "li";
  }
  return "?";
}

namespace {

bool degenerate_result(const Histogram& h, ThresholdMethod m,
                       ThresholdResult& out) {
  if (h.occupied_bins() >= 2) return false;
  out.method = m;
  out.degenerate = true;
  out.tau = h.lo;
  for (int i = 0; i < h.bin_count; ++i)
    if (h.counts[i] > 0) {
      out.tau = h.edge(i);
      break;
    }
  return true;
}

std::vector<double> probabilities(const Histogram& h) {
  std::vector<double> p(h.bin_count);
  for (int i = 0; i < h.bin_count; ++i)
    p[i] = static_cast<double>(h.counts[i]) / static_cast<double>(h.total);
  return p;
}

ThresholdResult from_split(const Histogram& h, ThresholdMethod m, int split) {
  ThresholdResult r;
  r.method = m;
  r.tau = h.edge(split + 1);
  return r;
}

}  // namespace

ThresholdResult otsu(const Histogram& h) {
  ThresholdResult out;
  if (degenerate_result(h, ThresholdMethod::Otsu, out)) return out;

  const auto p = probabilities(h);
  // bin centers as class values
  double mu_total = 0;
  for (int i = 0; i < h.bin_count; ++i) mu_total += p[i] * (i + 0.5);

  int best = 0;
  double best_crit = -1;
  double w0 = 0, mu0w = 0;
  for (int t = 0; t < h.bin_count - 1; ++t) {
    w0 += p[t];
    mu0w += p[t] * (t + 0.5);
    const double w1 = 1.0 - w0;
    if (w0 <= 0 || w1 <= 0) continue;
    const double mu0 = mu0w / w0;
    const double mu1 = (mu_total - mu0w) / w1;
    const double crit = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (crit > best_crit) {
      best_crit = crit;
      best = t;
    }
  }
  return from_split(h, ThresholdMethod::Otsu, best);
}

ThresholdResult yen(const Histogram& h) {
  ThresholdResult out;
  if (degenerate_result(h, ThresholdMethod::Yen, out)) return out;

  const auto p = probabilities(h);
  int best = 0;
  double best_crit = -std::numeric_limits<double>::infinity();
  double p0 = 0, g0 = 0;  // cumulative mass and squared mass
  double gtot = 0;
  for (double x : p) gtot += x * x;

  for (int t = 0; t < h.bin_count - 1; ++t) {
    p0 += p[t];
    g0 += p[t] * p[t];
    const double p1 = 1.0 - p0;
    const double g1 = gtot - g0;
    if (p0 <= 0 || p1 <= 0 || g0 <= 0 || g1 <= 0) continue;
    const double crit =
        -std::log(g0) - std::log(g1) + 2.0 * (std::log(p0) + std::log(p1));
    if (crit > best_crit) {
      best_crit = crit;
      best = t;
    }
  }
  return from_split(h, ThresholdMethod::Yen, best);
}

ThresholdResult li(const Histogram& h) {
  ThresholdResult out;
  if (degenerate_result(h, ThresholdMethod::Li, out)) return out;

  const auto p = probabilities(h);
  const double w = h.bin_width();
  // the iteration takes logarithms of class means, so shift values positive
  const double shift = (h.lo <= 0) ? (-h.lo + w) : 0.0;

  auto center = [&](int i) { return h.lo + (i + 0.5) * w + shift; };

  double t = 0;  // running estimate, in shifted value units
  for (int i = 0; i < h.bin_count; ++i) t += p[i] * center(i);

  for (int iter = 0; iter < 256; ++iter) {
    double m0 = 0, w0 = 0, m1 = 0, w1 = 0;
    for (int i = 0; i < h.bin_count; ++i) {
      if (center(i) <= t) {
        w0 += p[i];
        m0 += p[i] * center(i);
      } else {
        w1 += p[i];
        m1 += p[i] * center(i);
      }
    }
    if (w0 <= 0 || w1 <= 0) break;  // one-sided: keep current estimate
    const double mu0 = m0 / w0, mu1 = m1 / w1;
    const double tn = (mu0 - mu1) / (std::log(mu0) - std::log(mu1));
    const double delta = std::abs(tn - t);
    t = tn;
    if (delta < 0.5 * w) break;
  }

  out.method = ThresholdMethod::Li;
  out.tau = t - shift;
  return out;
}

ThresholdResult triangle(const Histogram& h) {
  ThresholdResult out;
  if (degenerate_result(h, ThresholdMethod::Triangle, out)) return out;

  const auto p = probabilities(h);
  int peak = 0;
  for (int i = 1; i < h.bin_count; ++i)
    if (p[i] > p[peak]) peak = i;  // ties keep the lower bin

  int first_nz = 0, last_nz = h.bin_count - 1;
  while (p[first_nz] <= 0) ++first_nz;
  while (p[last_nz] <= 0) --last_nz;

  // tail on the side with the longer nonzero extent from the peak
  const int left_ext = peak - first_nz;
  const int right_ext = last_nz - peak;
  const int tail = (right_ext >= left_ext) ? last_nz : first_nz;

  // maximize perpendicular distance from (i, p_i) to the peak-tail line
  const double x0 = peak, y0 = p[peak];
  const double x1 = tail, y1 = p[tail];
  const double nx = y1 - y0, ny = -(x1 - x0);
  const double norm = std::sqrt(nx * nx + ny * ny);

  int best = std::min(peak, tail);
  double best_d = -1;
  const int lo = std::min(peak, tail), hi = std::max(peak, tail);
  for (int i = lo; i <= hi; ++i) {
    const double d = std::abs(nx * (i - x0) + ny * (p[i] - y0)) / norm;
    if (d > best_d) {
      best_d = d;
      best = i;
    }
  }
  return from_split(h, ThresholdMethod::Triangle, best);
}

ThresholdResult auto_threshold(const std::vector<double>& values,
                               ThresholdMethod method, int bin_count) {
  const Histogram h = build_histogram(values, bin_count);
  switch (method) {
    case ThresholdMethod::Otsu: return otsu(h);
    case ThresholdMethod::Yen: return yen(h);
    case ThresholdMethod::Triangle: return triangle(h);
    case ThresholdMethod::Li: return li(h);
  }
  throw std::logic_error("auto_threshold: unreachable");
}

}  // namespace unijdot

#pragma once

#include <string>
#include <vector>

#include "unijdot/numerics.hpp"

namespace unijdot {

enum class ThresholdMethod { Yen, Otsu, Triangle, Li };

ThresholdMethod threshold_method_from_string(const std::string& s);
std::string to_string(ThresholdMethod m);

struct ThresholdResult {
  double tau = 0;  // threshold in value units
  ThresholdMethod method = ThresholdMethod::Yen;
  bool degenerate = false;  // histogram had mass in fewer than 2 bins
};

// All methods share the split convention: a split after bin i separates
// bins [0, i] from [i+1, ...) and reports tau = lo + (i+1) * bin_width.
// Criterion ties break toward the lower boundary. Degenerate histograms
// report the lower edge of the single occupied bin.
ThresholdResult otsu(const Histogram& h);       // max between-class variance
ThresholdResult yen(const Histogram& h);        // max correlation criterion
ThresholdResult li(const Histogram& h);         // iterative min cross-entropy
ThresholdResult triangle(const Histogram& h);   // max distance to peak-tail line

// Builds the histogram over [min, max] and dispatches.
ThresholdResult auto_threshold(const std::vector<double>& values,
                               ThresholdMethod method, int bin_count);

}  // namespace unijdot

#include "unijdot/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "unijdot/errors.hpp"

using nlohmann::json;

namespace unijdot {

InferenceMode inference_mode_from_string(const std::string& s) {
  if (s == "last") return InferenceMode::LastTrainThreshold;
  if (s == "valbatch") return InferenceMode::ValidationBatch;
  throw std::invalid_argument("unknown inference mode: " + s);
}

std::string to_string(InferenceMode m) {
  return m == InferenceMode::LastTrainThreshold ? "last" : "valbatch";
}

double h_score(double a_common, double a_unknown) {
  if (a_common < 0 || a_common > 1 || a_unknown < 0 || a_unknown > 1)
    throw std::invalid_argument("h_score: accuracies must be in [0,1]");
  const double denom = a_common + a_unknown;
  if (denom <= 0) return 0.0;
  return 2.0 * a_common * a_unknown / denom;
}

namespace {

// batched forward + joint decision; returns per-sample (argmax, confidence)
std::vector<std::pair<int, double>> score_samples(const Net& net,
                                                  const ClassMemory& mem,
                                                  const float* x, int n,
                                                  bool joint) {
  const int k = net.cfg.num_classes;
  const int d = net.cfg.feature_dim();
  ForwardCache cache;
  feature_forward(net, x, n, cache);
  classifier_forward(net, cache);

  std::vector<std::pair<int, double>> out(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int i = 0; i < n; ++i) {
    std::vector<float> h(cache.logits.begin() + static_cast<size_t>(i) * k,
                         cache.logits.begin() + static_cast<size_t>(i + 1) * k);
    std::vector<float> p;
    if (joint) {
      const auto dist = distance_vector(
          cache.features.data() + static_cast<size_t>(i) * d, mem);
      p = joint_decision(h, dist);
    } else {
      p = softmax(h);
    }
    const auto mx = std::max_element(p.begin(), p.end());
    out[i] = {static_cast<int>(mx - p.begin()), static_cast<double>(*mx)};
  }
  return out;
}

}  // namespace

int infer(const Net& net, const ClassMemory& mem, const float* sample,
          double tau, bool joint) {
  const auto scored = score_samples(net, mem, sample, 1, joint);
  if (scored[0].second < tau) return kUnknownLabel;
  return scored[0].first;
}

double inference_threshold(const Net& net, const ClassMemory& mem,
                           InferenceMode mode,
                           std::optional<double> last_train_tau,
                           const float* validation_batch, int validation_n,
                           const PseudoLabelConfig& plc) {
  if (mode == InferenceMode::LastTrainThreshold) {
    if (!last_train_tau)
      throw std::invalid_argument(
          "inference_threshold: no recorded training threshold");
    return *last_train_tau;
  }
  if (!validation_batch || validation_n < 1)
    throw std::invalid_argument(
        "inference_threshold: validation batch required");
  const int k = net.cfg.num_classes;
  const int d = net.cfg.feature_dim();
  ForwardCache cache;
  feature_forward(net, validation_batch, validation_n, cache);
  classifier_forward(net, cache);
  const auto pl = pseudo_label_batch(cache.logits, cache.features,
                                     validation_n, k, d, mem, plc);
  return pl.tau;
}

EvalReport evaluate(const Net& net, const ClassMemory& mem,
                    const TimeSeriesDataset& test, double tau, bool joint) {
  const int k = net.cfg.num_classes;
  const int n = test.n();
  EvalReport rep;
  rep.num_classes = k;
  rep.tau_used = tau;
  rep.confusion.assign(k + 1, std::vector<int64_t>(k + 1, 0));

  const auto scored =
      score_samples(net, mem, test.samples.data.data(), n, joint);

  int64_t common_total = 0, common_correct = 0;
  int64_t unknown_total = 0, unknown_correct = 0;
  std::vector<int64_t> class_total(k, 0), class_correct(k, 0);

  for (int i = 0; i < n; ++i) {
    const int truth = test.labels[i];
    const int pred = scored[i].second < tau ? kUnknownLabel : scored[i].first;
    const int ti = truth == kUnknownLabel ? k : truth;
    const int pi = pred == kUnknownLabel ? k : pred;
    ++rep.confusion[ti][pi];
    if (truth == kUnknownLabel) {
      ++unknown_total;
      if (pred == kUnknownLabel) ++unknown_correct;
    } else {
      ++common_total;
      ++class_total[truth];
      if (pred == truth) {
        ++common_correct;
        ++class_correct[truth];
      }
    }
  }

  if (common_total > 0)
    rep.a_common = static_cast<double>(common_correct) / common_total;
  if (unknown_total > 0)
    rep.a_unknown = static_cast<double>(unknown_correct) / unknown_total;
  rep.undefined_group = !rep.a_common.has_value() || !rep.a_unknown.has_value();
  rep.h_score = rep.undefined_group
                    ? 0.0
                    : h_score(*rep.a_common, *rep.a_unknown);
  rep.per_class_accuracy.assign(k, 0.0);
  for (int c = 0; c < k; ++c)
    rep.per_class_accuracy[c] =
        class_total[c] > 0
            ? static_cast<double>(class_correct[c]) / class_total[c]
            : 0.0;
  return rep;
}

void write_report_json(const std::string& path, const EvalReport& rep) {
  json j;
  j["a_common"] = rep.a_common ? json(*rep.a_common) : json(nullptr);
  j["a_unknown"] = rep.a_unknown ? json(*rep.a_unknown) : json(nullptr);
  j["h_score"] = rep.h_score;
  j["undefined_group"] = rep.undefined_group;
  j["tau_used"] = rep.tau_used;
  j["mode"] = to_string(rep.mode);
  j["per_class_accuracy"] = rep.per_class_accuracy;
  j["confusion"] = rep.confusion;
  j["num_classes"] = rep.num_classes;
  std::ofstream f(path);
  f << j.dump(2) << "\n";
}

void write_report_csv(const std::string& path, const EvalReport& rep) {
  std::ofstream f(path);
  f << "a_common,a_unknown,h_score,tau_used,mode,num_classes\n";
  f << (rep.a_common ? std::to_string(*rep.a_common) : "") << ","
    << (rep.a_unknown ? std::to_string(*rep.a_unknown) : "") << ","
    << rep.h_score << "," << rep.tau_used << "," << to_string(rep.mode) << ","
    << rep.num_classes << "\n";
}

EvalReport parse_report_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f)
    throw DataError(DataErrorCode::MissingFile, "cannot open report " + path);
  std::string header, row;
  std::getline(f, header);
  std::getline(f, row);
  std::vector<std::string> cells;
  std::stringstream ss(row);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (cells.size() < 6)
    throw DataError(DataErrorCode::MalformedMeta,
                    "report row has too few columns: " + path);
  EvalReport rep;
  if (!cells[0].empty()) rep.a_common = std::stod(cells[0]);
  if (!cells[1].empty()) rep.a_unknown = std::stod(cells[1]);
  rep.h_score = std::stod(cells[2]);
  rep.tau_used = std::stod(cells[3]);
  rep.mode = inference_mode_from_string(cells[4]);
  rep.num_classes = std::stoi(cells[5]);
  return rep;
}

}  // namespace unijdot

#include "unijdot/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "unijdot/errors.hpp"
#include "unijdot/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace unijdot {

TimeSeriesDataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  const fs::path meta_path = root / "meta.json";
  if (!fs::exists(meta_path))
    throw DataError(DataErrorCode::MissingFile,
                    "missing meta.json in " + dir);

  json meta;
  try {
    std::ifstream f(meta_path);
    meta = json::parse(f);
  } catch (const json::exception& e) {
    throw DataError(DataErrorCode::MalformedMeta,
                    "malformed meta.json in " + dir + ": " + e.what());
  }

  auto require = [&](const char* key) -> const json& {
    if (!meta.contains(key))
      throw DataError(DataErrorCode::MalformedMeta,
                      std::string("meta.json missing field '") + key + "'");
    return meta.at(key);
  };

  try {
    const int version = require("version").get<int>();
    if (version != 1)
      throw DataError(DataErrorCode::UnknownVersion,
                      "unsupported dataset version " + std::to_string(version));
    const int64_t n = require("n").get<int64_t>();
    const int64_t channels = require("channels").get<int64_t>();
    const int64_t t = require("t").get<int64_t>();
    const auto classes = require("classes").get<std::vector<std::string>>();
    const auto dtype = require("dtype").get<std::string>();
    const auto split = require("split").get<std::string>();
    if (dtype != "f32le")
      throw DataError(DataErrorCode::MalformedMeta,
                      "unsupported dtype '" + dtype + "'");
    if (split != "train" && split != "test")
      throw DataError(DataErrorCode::MalformedMeta,
                      "split must be 'train' or 'test', got '" + split + "'");
    if (n < 0 || channels < 1 || t < 1)
      throw DataError(DataErrorCode::MalformedMeta, "non-positive dimensions");

    const int64_t sample_bytes = n * channels * t * 4;
    const fs::path samples_path = root / "samples.bin";
    const fs::path labels_path = root / "labels.bin";
    if (!fs::exists(samples_path))
      throw DataError(DataErrorCode::MissingFile, "missing samples.bin");
    if (!fs::exists(labels_path))
      throw DataError(DataErrorCode::MissingFile, "missing labels.bin");
    const int64_t actual = static_cast<int64_t>(fs::file_size(samples_path));
    if (actual != sample_bytes)
      throw DataError(DataErrorCode::SizeMismatch,
                      "samples.bin size mismatch: expected " +
                          std::to_string(sample_bytes) + " bytes, found " +
                          std::to_string(actual));
    const int64_t label_bytes = n * 4;
    const int64_t actual_l = static_cast<int64_t>(fs::file_size(labels_path));
    if (actual_l != label_bytes)
      throw DataError(DataErrorCode::SizeMismatch,
                      "labels.bin size mismatch: expected " +
                          std::to_string(label_bytes) + " bytes, found " +
                          std::to_string(actual_l));

    TimeSeriesDataset ds;
    ds.class_names = classes;
    ds.split = split;
    std::vector<float> data(static_cast<size_t>(n * channels * t));
    {
      std::ifstream f(samples_path, std::ios::binary);
      f.read(reinterpret_cast<char*>(data.data()), sample_bytes);
      if (!f)
        throw DataError(DataErrorCode::SizeMismatch,
                        "samples.bin read failed");
    }
    ds.samples = Tensor({n, channels, t}, std::move(data));
    {
      std::vector<int32_t> raw(static_cast<size_t>(n));
      std::ifstream f(labels_path, std::ios::binary);
      f.read(reinterpret_cast<char*>(raw.data()), label_bytes);
      if (!f)
        throw DataError(DataErrorCode::SizeMismatch, "labels.bin read failed");
      ds.labels.assign(raw.begin(), raw.end());
    }
    const int k = static_cast<int>(classes.size());
    for (int lbl : ds.labels)
      if (lbl < 0 || lbl >= k)
        throw DataError(DataErrorCode::InvalidLabels,
                        "label " + std::to_string(lbl) +
                            " outside declared class count " +
                            std::to_string(k));
    return ds;
  } catch (const json::exception& e) {
    throw DataError(DataErrorCode::MalformedMeta,
                    std::string("meta.json field error: ") + e.what());
  }
}

void save_dataset(const std::string& dir, const TimeSeriesDataset& ds) {
  fs::create_directories(dir);
  const fs::path root(dir);
  json meta{{"version", 1},
            {"n", ds.n()},
            {"channels", ds.channels()},
            {"t", ds.t()},
            {"classes", ds.class_names},
            {"dtype", "f32le"},
            {"split", ds.split}};
  {
    std::ofstream f(root / "meta.json");
    f << meta.dump(2) << "\n";
  }
  {
    std::ofstream f(root / "samples.bin", std::ios::binary);
    f.write(reinterpret_cast<const char*>(ds.samples.data.data()),
            static_cast<std::streamsize>(ds.samples.data.size() * 4));
  }
  {
    std::vector<int32_t> raw(ds.labels.begin(), ds.labels.end());
    std::ofstream f(root / "labels.bin", std::ios::binary);
    f.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * 4));
  }
}

namespace {

constexpr int kDropped = -9;  // remap code: sample leaves the dataset

TimeSeriesDataset filter_relabel(const TimeSeriesDataset& ds,
                                 const std::vector<int>& remap,
                                 bool keep_unknown) {
  TimeSeriesDataset out;
  out.split = ds.split;
  const int ch = ds.channels(), t = ds.t();
  std::vector<float> data;
  for (int i = 0; i < ds.n(); ++i) {
    const int mapped = remap[ds.labels[i]];
    if (mapped == kDropped) continue;
    if (mapped == kUnknownLabel && !keep_unknown) continue;
    data.insert(data.end(),
                ds.samples.data.begin() + static_cast<size_t>(i) * ch * t,
                ds.samples.data.begin() + static_cast<size_t>(i + 1) * ch * t);
    out.labels.push_back(mapped);
  }
  out.samples = Tensor({static_cast<int64_t>(out.labels.size()), ch, t},
                       std::move(data));
  return out;
}

}  // namespace

Scenario build_unida_scenario(const TimeSeriesDataset& source_train,
                              const TimeSeriesDataset& source_test,
                              const TimeSeriesDataset& target_train,
                              const TimeSeriesDataset& target_test,
                              int source_private, int target_private) {
  const int k_total = source_train.num_classes();
  if (source_private == target_private)
    throw std::invalid_argument(
        "build_unida_scenario: private classes must differ");
  auto has_class = [](const TimeSeriesDataset& ds, int c) {
    return std::find(ds.labels.begin(), ds.labels.end(), c) != ds.labels.end();
  };
  for (int c : {source_private, target_private}) {
    if (c < 0 || c >= k_total)
      throw std::invalid_argument("build_unida_scenario: class out of range");
    if (!has_class(source_train, c) || !has_class(target_train, c))
      throw std::invalid_argument("build_unida_scenario: class " +
                                  std::to_string(c) +
                                  " absent from a domain");
  }

  Scenario sc;
  // source keeps everything but the target-private class, relabeled [0, K)
  std::vector<int> source_remap(k_total, kUnknownLabel);
  int next = 0;
  for (int c = 0; c < k_total; ++c) {
    if (c == target_private) continue;
    source_remap[c] = next++;
  }
  sc.num_source_classes = next;
  sc.label_remap = source_remap;

  sc.source_train = filter_relabel(source_train, source_remap, false);
  sc.source_test = filter_relabel(source_test, source_remap, false);

  // target drops the source-private class and keeps its own private class
  // under the unknown marker
  std::vector<int> target_remap(k_total, kDropped);
  for (int c = 0; c < k_total; ++c) {
    if (c == source_private) continue;
    target_remap[c] = (c == target_private) ? kUnknownLabel : source_remap[c];
  }
  sc.target_train = filter_relabel(target_train, target_remap, true);
  sc.target_test = filter_relabel(target_test, target_remap, true);

  for (int c = 0; c < k_total; ++c) {
    if (c == source_private)
      sc.source_private_labels.push_back(c);
    else if (c == target_private)
      sc.target_private_labels.push_back(c);
    else
      sc.common_labels.push_back(c);
  }

  // class names for the remapped source label space
  sc.source_train.class_names.resize(sc.num_source_classes);
  for (int c = 0; c < k_total; ++c)
    if (source_remap[c] != kUnknownLabel)
      sc.source_train.class_names[source_remap[c]] =
          c < static_cast<int>(source_train.class_names.size())
              ? source_train.class_names[c]
              : std::to_string(c);
  sc.source_test.class_names = sc.source_train.class_names;
  sc.target_train.class_names = sc.source_train.class_names;
  sc.target_test.class_names = sc.source_train.class_names;
  return sc;
}

SynthPair synth_generate(const SynthConfig& cfg) {
  // fixed per-(class, channel) amplitude table, shared by the two domains
  Rng table_rng(Rng::mix(cfg.seed, 0xA));
  std::vector<double> amp_table(static_cast<size_t>(cfg.num_classes) *
                                cfg.channels);
  for (auto& a : amp_table) a = table_rng.uniform(0.7, 1.3);

  // per-channel target amplitude shift, drawn once per generation
  Rng shift_rng(Rng::mix(cfg.seed, 0xB));
  std::vector<double> target_scale(cfg.channels);
  for (auto& s : target_scale) s = shift_rng.uniform(cfg.amp_lo, cfg.amp_hi);

  auto make_domain = [&](bool target, uint64_t stream) {
    Rng rng(Rng::mix(cfg.seed, stream));
    const int n = cfg.num_classes * cfg.per_class;
    std::vector<float> data(static_cast<size_t>(n) * cfg.channels * cfg.t);
    std::vector<int> labels(n);
    const double noise = target ? cfg.target_noise : cfg.source_noise;
    int row = 0;
    for (int c = 0; c < cfg.num_classes; ++c) {
      // disjoint spectral bands per class
      const double f0 = c + 1;
      const double f1 = cfg.num_classes + 1 + c;
      for (int s = 0; s < cfg.per_class; ++s, ++row) {
        const double phase0 = rng.uniform(0.0, 2.0 * M_PI);
        const double phase1 = rng.uniform(0.0, 2.0 * M_PI);
        const double jitter =
            target ? rng.normal(0.0, cfg.phase_jitter) : 0.0;
        for (int ch = 0; ch < cfg.channels; ++ch) {
          const double amp =
              amp_table[static_cast<size_t>(c) * cfg.channels + ch] *
              (target ? target_scale[ch] : 1.0);
          float* dst =
              data.data() + (static_cast<size_t>(row) * cfg.channels + ch) *
                                cfg.t;
          const double chphase = 0.7 * ch;
          for (int t = 0; t < cfg.t; ++t) {
            const double x = 2.0 * M_PI * t / cfg.t;
            double v = amp * std::sin(f0 * x + phase0 + chphase + jitter) +
                       0.4 * amp * std::sin(f1 * x + phase1 + jitter);
            v += rng.normal(0.0, noise);
            dst[t] = static_cast<float>(v);
          }
        }
        labels[row] = c;
      }
    }

    // seeded split into train/test
    auto perm = rng.permutation(n);
    const int n_train = static_cast<int>(std::lround(n * cfg.train_fraction));
    TimeSeriesDataset train, test;
    train.split = "train";
    test.split = "test";
    for (int i = 0; i < cfg.num_classes; ++i) {
      train.class_names.push_back("class" + std::to_string(i));
      test.class_names.push_back("class" + std::to_string(i));
    }
    std::vector<float> dtr, dte;
    const size_t stride = static_cast<size_t>(cfg.channels) * cfg.t;
    for (int i = 0; i < n; ++i) {
      const int src = perm[i];
      auto& dat = (i < n_train) ? dtr : dte;
      auto& lab = (i < n_train) ? train.labels : test.labels;
      dat.insert(dat.end(), data.begin() + src * stride,
                 data.begin() + (src + 1) * stride);
      lab.push_back(labels[src]);
    }
    train.samples = Tensor({static_cast<int64_t>(train.labels.size()),
                            cfg.channels, cfg.t},
                           std::move(dtr));
    test.samples = Tensor({static_cast<int64_t>(test.labels.size()),
                           cfg.channels, cfg.t},
                          std::move(dte));
    return std::make_pair(train, test);
  };

  SynthPair out;
  auto [st, se] = make_domain(false, 1);
  auto [tt, te] = make_domain(true, 2);
  out.source_train = std::move(st);
  out.source_test = std::move(se);
  out.target_train = std::move(tt);
  out.target_test = std::move(te);
  return out;
}

std::vector<std::vector<int>> batch_iter(int n, int batch_size, uint64_t seed,
                                         int epoch, bool training) {
  if (training && batch_size < 2)
    throw std::invalid_argument("batch_iter: training batches need >= 2 samples");
  if (batch_size < 1) throw std::invalid_argument("batch_iter: bad batch size");
  Rng rng(Rng::mix(seed, static_cast<uint64_t>(epoch)));
  auto perm = rng.permutation(n);
  std::vector<std::vector<int>> out;
  for (int start = 0; start < n; start += batch_size) {
    const int end = std::min(n, start + batch_size);
    if (training && end - start < batch_size) break;  // drop last partial
    out.emplace_back(perm.begin() + start, perm.begin() + end);
  }
  return out;
}

std::vector<float> gather_samples(const Tensor& samples,
                                  const std::vector<int>& idx) {
  const size_t stride = static_cast<size_t>(samples.shape[1]) * samples.shape[2];
  std::vector<float> out(idx.size() * stride);
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy_n(samples.data.begin() + idx[i] * stride, stride,
                out.begin() + i * stride);
  return out;
}

}  // namespace unijdot

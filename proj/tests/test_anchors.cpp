#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "unijdot/anchors.hpp"
#include "unijdot/kernels.hpp"
#include "unijdot/numerics.hpp"
#include "unijdot/rng.hpp"

using namespace unijdot;

TEST_CASE("one anchor is the feature mean") {
  Rng rng(1);
  const int n = 20, d = 3;
  std::vector<float> feats(n * d);
  for (auto& v : feats) v = static_cast<float>(rng.uniform(-2, 2));
  const auto set = init_anchors(feats, n, d, 1, 4, 0.1f, 0);
  for (int j = 0; j < d; ++j) {
    double mean = 0;
    for (int i = 0; i < n; ++i) mean += feats[i * d + j];
    mean /= n;
    CHECK(set.centroids[j] == doctest::Approx(mean).epsilon(1e-5));
  }
}

TEST_CASE("as many anchors as samples reproduces the samples") {
  Rng rng(2);
  const int n = 5, d = 2;
  std::vector<float> feats(n * d);
  for (auto& v : feats) v = static_cast<float>(rng.uniform(-2, 2));
  const auto set = init_anchors(feats, n, d, n, 3, 0.1f, 1);
  std::multiset<std::pair<float, float>> got, want;
  for (int i = 0; i < n; ++i) {
    got.insert({set.centroids[i * d], set.centroids[i * d + 1]});
    want.insert({feats[i * d], feats[i * d + 1]});
  }
  CHECK(got == want);
}

TEST_CASE("anchor initialization replays per seed and shares the kmeans path") {
  Rng rng(3);
  const int n = 60, d = 4, L = 3;
  std::vector<float> feats(n * d);
  for (auto& v : feats) v = static_cast<float>(rng.uniform(-1, 1));
  const auto s1 = init_anchors(feats, n, d, L, 5, 0.1f, 11);
  const auto s2 = init_anchors(feats, n, d, L, 5, 0.1f, 11);
  CHECK(s1.centroids == s2.centroids);

  const auto km = kmeans(Tensor({n, d}, feats), L, 100, 11);
  CHECK(s1.centroids == km.centroids.data);

  CHECK_THROWS_AS(init_anchors(feats, 2, d, 3, 5, 0.1f, 0),
                  std::invalid_argument);
}

TEST_CASE("update with an empty batch is a no-op") {
  Rng rng(4);
  std::vector<float> feats(30);
  for (auto& v : feats) v = static_cast<float>(rng.uniform(-1, 1));
  auto set = init_anchors(feats, 10, 3, 2, 4, 0.1f, 0);
  const auto before = set.centroids;
  update_anchors(set, {}, 0);
  CHECK(set.centroids == before);
}

TEST_CASE("momentum one replaces a centroid by the assigned mean") {
  std::vector<float> feats{0.f, 0.f, 10.f, 10.f};
  auto set = init_anchors(feats, 2, 2, 2, 3, 1.0f, 0);
  // all unknowns huddle near the first centroid's position
  const float cx = set.centroids[0], cy = set.centroids[1];
  std::vector<float> unknowns{cx + 0.2f, cy, cx - 0.2f, cy,
                              cx, cy + 0.4f};
  update_anchors(set, unknowns, 3);
  CHECK(set.centroids[0] == doctest::Approx(cx).epsilon(1e-5));
  CHECK(set.centroids[1] == doctest::Approx(cy + 0.4f / 3).epsilon(1e-5));
}

TEST_CASE("moving average tracks a stationary stream") {
  Rng rng(5);
  // two distant centroids; a gaussian cloud around (3, 3) pulls only one
  std::vector<float> feats{0.f, 0.f, 100.f, 100.f};
  auto set = init_anchors(feats, 2, 2, 2, 3, 0.1f, 0);
  const int near = set.centroids[0] < 50.f ? 0 : 1;
  for (int step = 0; step < 200; ++step) {
    std::vector<float> batch(8 * 2);
    for (int i = 0; i < 8; ++i) {
      batch[i * 2] = static_cast<float>(rng.normal(3.0, 0.3));
      batch[i * 2 + 1] = static_cast<float>(rng.normal(3.0, 0.3));
    }
    update_anchors(set, batch, 8);
  }
  CHECK(std::abs(set.centroids[near * 2] - 3.f) < 0.05f);
  CHECK(std::abs(set.centroids[near * 2 + 1] - 3.f) < 0.05f);
  // the far centroid never saw an assignment
  CHECK(set.centroids[(1 - near) * 2] == doctest::Approx(100.f));
}

TEST_CASE("updates stay inside the hull of old centroid and batch mean") {
  Rng rng(6);
  std::vector<float> feats(40);
  for (auto& v : feats) v = static_cast<float>(rng.uniform(-1, 1));
  auto set = init_anchors(feats, 10, 4, 2, 3, 0.3f, 0);
  const auto before = set.centroids;

  std::vector<float> batch(12);
  for (auto& v : batch) v = static_cast<float>(rng.uniform(-1, 1));
  // assignment per the same nearest rule the implementation uses
  std::vector<int> assign(3);
  kernels::assign_nearest(batch.data(), 3, before.data(), 2, 4, assign.data(),
                          static_cast<float*>(nullptr));
  update_anchors(set, batch, 3);

  for (int l = 0; l < 2; ++l) {
    std::vector<double> mean(4, 0);
    int cnt = 0;
    for (int i = 0; i < 3; ++i)
      if (assign[i] == l) {
        ++cnt;
        for (int j = 0; j < 4; ++j) mean[j] += batch[i * 4 + j];
      }
    if (cnt == 0) {
      for (int j = 0; j < 4; ++j)
        CHECK(set.centroids[l * 4 + j] == before[l * 4 + j]);
      continue;
    }
    for (int j = 0; j < 4; ++j) {
      mean[j] /= cnt;
      const double lo = std::min<double>(before[l * 4 + j], mean[j]) - 1e-6;
      const double hi = std::max<double>(before[l * 4 + j], mean[j]) + 1e-6;
      CHECK(set.centroids[l * 4 + j] >= lo);
      CHECK(set.centroids[l * 4 + j] <= hi);
    }
  }
}

TEST_CASE("decision anchor is the uniform maximal-entropy vector") {
  const auto r2 = decision_anchor(2);
  CHECK(r2 == std::vector<float>{0.5f, 0.5f});
  const auto r5 = decision_anchor(5);
  for (float v : r5) CHECK(v == doctest::Approx(0.2f));

  for (int k : {2, 3, 7, 12}) {
    const auto r = decision_anchor(k);
    double entropy = 0, sum = 0;
    for (float v : r) {
      entropy -= v * std::log(v);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(entropy == doctest::Approx(std::log(k)).epsilon(1e-6));
  }
  CHECK_THROWS_AS(decision_anchor(1), std::invalid_argument);
}

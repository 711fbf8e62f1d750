#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "fedsim/aggregate.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

namespace {

std::vector<RoundUpdate> make_updates(const std::vector<std::vector<double>>& deltas,
                                      const std::vector<double>& losses = {}) {
  std::vector<RoundUpdate> out;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    RoundUpdate u;
    u.device = static_cast<int>(i);
    u.delta = Eigen::Map<const Vector>(deltas[i].data(), deltas[i].size());
    u.train_loss = losses.empty() ? 0.0 : losses[i];
    u.norm = u.delta.norm();
    out.push_back(std::move(u));
  }
  return out;
}

std::vector<RoundUpdate> random_updates(int m, int d, RngStream& rng, bool with_losses) {
  std::vector<RoundUpdate> out;
  for (int i = 0; i < m; ++i) {
    RoundUpdate u;
    u.device = i;
    u.delta.resize(d);
    for (int j = 0; j < d; ++j) u.delta[j] = rng.normal(0, 2);
    u.train_loss = with_losses ? rng.uniform() * 5 : 0.0;
    u.norm = u.delta.norm();
    out.push_back(std::move(u));
  }
  return out;
}

// Plain quadratic-time reference for the distance-score selection rule,
// written as differently as possible from the library version.
std::vector<double> reference_scores(const std::vector<RoundUpdate>& updates, int f) {
  const int m = static_cast<int>(updates.size());
  std::vector<double> scores(m);
  for (int i = 0; i < m; ++i) {
    std::vector<double> d2;
    for (int j = 0; j < m; ++j) {
      if (i == j) continue;
      double s = 0;
      for (Eigen::Index c = 0; c < updates[i].delta.size(); ++c) {
        double diff = updates[i].delta[c] - updates[j].delta[c];
        s += diff * diff;
      }
      d2.push_back(s);
    }
    std::sort(d2.begin(), d2.end());
    double total = 0;
    for (int t = 0; t < m - f - 2; ++t) total += d2[t];
    scores[i] = total;
  }
  return scores;
}

Vector reference_median(const std::vector<RoundUpdate>& updates) {
  const int m = static_cast<int>(updates.size());
  const Eigen::Index d = updates[0].delta.size();
  Vector out(d);
  for (Eigen::Index c = 0; c < d; ++c) {
    std::vector<double> col;
    for (int i = 0; i < m; ++i) col.push_back(updates[i].delta[c]);
    std::nth_element(col.begin(), col.begin() + m / 2, col.end());
    if (m % 2 == 1) {
      out[c] = col[m / 2];
    } else {
      double hi = col[m / 2];
      double lo = *std::max_element(col.begin(), col.begin() + m / 2);
      out[c] = (hi + lo) / 2;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("mean aggregation, optionally weighted") {
  auto updates = make_updates({{1, 2}, {3, 4}, {5, 6}});
  Vector m = aggregate::agg_mean(updates);
  CHECK(m[0] == doctest::Approx(3));
  CHECK(m[1] == doctest::Approx(4));

  std::vector<double> w{1, 0, 1};
  Vector wm = aggregate::agg_mean(updates, w);
  CHECK(wm[0] == doctest::Approx(3));
  CHECK(wm[1] == doctest::Approx(4));

  std::vector<double> skew{0, 0, 2};
  Vector sm = aggregate::agg_mean(updates, skew);
  CHECK(sm[0] == doctest::Approx(5));

  CHECK_THROWS_AS(aggregate::agg_mean(updates, std::vector<double>{1, 2}), DimensionError);
  CHECK_THROWS_AS(aggregate::agg_mean(updates, std::vector<double>{0, 0, 0}), ConfigError);
  CHECK_THROWS_AS(aggregate::agg_mean(updates, std::vector<double>{-1, 1, 1}), ConfigError);
  CHECK_THROWS_AS(aggregate::agg_mean({}), ConfigError);
}

TEST_CASE("coordinate median: hand cases and randomized reference") {
  auto odd = make_updates({{10, -5}, {0, 0}, {-10, 5}});
  Vector mo = aggregate::agg_coord_median(odd);
  CHECK(mo[0] == 0);
  CHECK(mo[1] == 0);

  auto even = make_updates({{0}, {1}, {9}, {10}});
  CHECK(aggregate::agg_coord_median(even)[0] == doctest::Approx(5));

  // One far outlier cannot move the median much.
  auto out = make_updates({{0.1}, {0.2}, {0.3}, {1e9}, {0.0}});
  CHECK(aggregate::agg_coord_median(out)[0] == doctest::Approx(0.2));

  RngStream rng(13);
  for (int rep = 0; rep < 100; ++rep) {
    int m = 1 + static_cast<int>(rng.uniform_int(12));
    int d = 1 + static_cast<int>(rng.uniform_int(5));
    auto u = random_updates(m, d, rng, false);
    Vector got = aggregate::agg_coord_median(u);
    Vector want = reference_median(u);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("distance-score selection matches the brute-force reference") {
  RngStream rng(17);
  for (int rep = 0; rep < 100; ++rep) {
    int f = static_cast<int>(rng.uniform_int(3));
    int m = f + 3 + static_cast<int>(rng.uniform_int(8));
    int d = 1 + static_cast<int>(rng.uniform_int(5));
    auto u = random_updates(m, d, rng, false);

    auto scores = aggregate::krum_scores(u, f);
    auto want = reference_scores(u, f);
    for (int i = 0; i < m; ++i) CHECK(scores[i] == doctest::Approx(want[i]).epsilon(1e-12));

    int sel = aggregate::krum_select(u, f);
    int ref = static_cast<int>(std::min_element(want.begin(), want.end()) - want.begin());
    CHECK(scores[sel] == doctest::Approx(want[ref]).epsilon(1e-12));

    // Multi variant: average of the m - f best scores.
    std::vector<int> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return want[a] < want[b]; });
    Vector acc = Vector::Zero(d);
    for (int i = 0; i < m - f; ++i) acc += u[idx[i]].delta;
    acc /= (m - f);
    Vector got = aggregate::agg_multi_krum(u, f);
    CHECK((got - acc).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("selection picks a benign update when the outlier is far away") {
  auto u = make_updates({{0.1, 0.1}, {0.2, 0.0}, {0.0, 0.2}, {50, 50}});
  int sel = aggregate::krum_select(u, 1);
  CHECK(sel < 3);
  auto scores = aggregate::krum_scores(u, 1);
  CHECK(scores[3] > scores[sel]);
}

TEST_CASE("score ties break toward the lower device id") {
  // Two identical clusters; within a cluster every update has the same score.
  auto u = make_updates({{1, 0}, {1, 0}, {1, 0}, {1, 0}});
  CHECK(aggregate::krum_select(u, 0) == 0);
}

TEST_CASE("selection needs f + 3 updates") {
  auto u = make_updates({{1}, {2}, {3}});
  CHECK_NOTHROW(aggregate::krum_select(u, 0));
  CHECK_THROWS_AS(aggregate::krum_select(u, 1), ConfigError);
  CHECK_THROWS_AS(aggregate::krum_scores(u, -1), ConfigError);
}

TEST_CASE("norm clipping rescales above the median norm") {
  auto u = make_updates({{3, 4}, {0.6, 0.8}, {0.3, 0.4}});  // norms 5, 1, 0.5
  Vector got = aggregate::agg_clipping(u);
  // Threshold 1: first update shrinks to norm 1, direction kept.
  Vector want = (Vector(2) << (0.6 + 0.6 + 0.3) / 3.0, (0.8 + 0.8 + 0.4) / 3.0).finished();
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);

  // Even count: threshold is the mean of the two middle norms.
  auto u4 = make_updates({{1, 0}, {2, 0}, {4, 0}, {100, 0}});  // median (2+4)/2 = 3
  Vector got4 = aggregate::agg_clipping(u4);
  CHECK(got4[0] == doctest::Approx((1 + 2 + 3 + 3) / 4.0));

  RngStream rng(23);
  for (int rep = 0; rep < 50; ++rep) {
    int m = 1 + static_cast<int>(rng.uniform_int(10));
    auto ru = random_updates(m, 3, rng, false);
    std::vector<double> norms;
    for (auto& x : ru) norms.push_back(x.delta.norm());
    std::sort(norms.begin(), norms.end());
    double thr = m % 2 ? norms[m / 2] : 0.5 * (norms[m / 2 - 1] + norms[m / 2]);
    Vector acc = Vector::Zero(3);
    for (auto& x : ru) {
      double nn = x.delta.norm();
      acc += nn > thr ? (thr / nn) * x.delta : x.delta;
    }
    acc /= m;
    CHECK((aggregate::agg_clipping(ru) - acc).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("k-norm filtering drops the k largest norms") {
  auto u = make_updates({{1, 0}, {0, 2}, {10, 0}, {0, 20}});
  Vector got = aggregate::agg_k_norm(u, 2);
  CHECK(got[0] == doctest::Approx(0.5));
  CHECK(got[1] == doctest::Approx(1.0));
  CHECK_THROWS_AS(aggregate::agg_k_norm(u, 4), ConfigError);
  CHECK_THROWS_AS(aggregate::agg_k_norm(u, -1), ConfigError);
  // k = 0 is the plain mean.
  CHECK((aggregate::agg_k_norm(u, 0) - aggregate::agg_mean(u)).norm() < 1e-15);

  // Norm ties drop the lower device id first (descending order, id ascending).
  auto tied = make_updates({{1, 0}, {-1, 0}, {0.5, 0}});
  Vector kept = aggregate::agg_k_norm(tied, 1);  // drops device 0
  CHECK(kept[0] == doctest::Approx((-1 + 0.5) / 2.0));
}

TEST_CASE("loss-rank selection keeps exactly the (k+1)-th largest loss") {
  auto u = make_updates({{1, 0}, {2, 0}, {3, 0}, {4, 0}}, {0.7, 0.1, 0.9, 0.4});
  // Losses sorted descending: 0.9 (dev 2), 0.7 (dev 0), 0.4 (dev 3), 0.1 (dev 1).
  CHECK(aggregate::agg_k_loss(u, 0)[0] == 3);  // largest loss
  CHECK(aggregate::agg_k_loss(u, 1)[0] == 1);  // 2nd largest
  CHECK(aggregate::agg_k_loss(u, 2)[0] == 4);
  CHECK(aggregate::agg_k_loss(u, 3)[0] == 2);
  CHECK_THROWS_AS(aggregate::agg_k_loss(u, 4), ConfigError);

  // Tied losses: descending with lower id first among equals.
  auto tied = make_updates({{10, 0}, {20, 0}, {30, 0}}, {0.5, 0.5, 0.1});
  CHECK(aggregate::agg_k_loss(tied, 0)[0] == 10);
  CHECK(aggregate::agg_k_loss(tied, 1)[0] == 20);
}

TEST_CASE("tilted weights interpolate between mean and max-loss") {
  auto u = make_updates({{0, 0}, {4, 0}}, {1.0, 2.0});
  Vector near_mean = aggregate::agg_tilted(u, 1e-9);
  CHECK(near_mean[0] == doctest::Approx(2.0).epsilon(1e-6));
  Vector near_max = aggregate::agg_tilted(u, 50.0);
  CHECK(near_max[0] == doctest::Approx(4.0).epsilon(1e-6));

  // Known softmax weights at t = 1: exp(1), exp(2).
  double w0 = std::exp(1.0) / (std::exp(1.0) + std::exp(2.0));
  Vector at1 = aggregate::agg_tilted(u, 1.0);
  CHECK(at1[0] == doctest::Approx((1 - w0) * 4.0));

  // Huge losses stay finite thanks to the max-shift.
  auto big = make_updates({{1, 0}, {2, 0}}, {1e5, 1e5 + 1});
  Vector stable = aggregate::agg_tilted(big, 1.0);
  CHECK(all_finite(stable));
  CHECK_THROWS_AS(aggregate::agg_tilted(u, std::numeric_limits<double>::infinity()),
                  ConfigError);
}

TEST_CASE("non-finite updates or losses are rejected everywhere") {
  auto bad = make_updates({{1, 0}, {std::nan(""), 0}});
  CHECK_THROWS_AS(aggregate::agg_mean(bad), NumericError);
  CHECK_THROWS_AS(aggregate::agg_coord_median(bad), NumericError);
  CHECK_THROWS_AS(aggregate::agg_clipping(bad), NumericError);

  auto bad_loss = make_updates({{1}, {2}}, {0.5, std::numeric_limits<double>::infinity()});
  CHECK_THROWS_AS(aggregate::agg_tilted(bad_loss, 1.0), NumericError);

  auto mixed = make_updates({{1, 2}});
  mixed.push_back(make_updates({{1}})[0]);
  CHECK_THROWS_AS(aggregate::agg_mean(mixed), DimensionError);
}

TEST_CASE("budget resolution rounds the adversary fraction") {
  CHECK(aggregate::resolve_budget(std::nullopt, 0.2, 10) == 2);
  CHECK(aggregate::resolve_budget(std::nullopt, 0.25, 10) == 3);  // lround half away
  CHECK(aggregate::resolve_budget(std::nullopt, 0.0, 10) == 0);
  CHECK(aggregate::resolve_budget(5, 0.2, 10) == 5);  // explicit wins
}

TEST_CASE("dispatch applies the configured rule with the resolved budget") {
  RngStream rng(31);
  auto u = random_updates(10, 3, rng, true);
  AggregatorSpec spec;

  spec.variant = AggVariant::KNorm;
  Vector via_dispatch = aggregate::aggregate(spec, u, 0.3);  // k = 3
  Vector direct = aggregate::agg_k_norm(u, 3);
  CHECK((via_dispatch - direct).norm() == 0);

  spec.variant = AggVariant::Krum;
  spec.f = 2;
  Vector sel = aggregate::aggregate(spec, u, 0.0);
  CHECK((sel - u[aggregate::krum_select(u, 2)].delta).norm() == 0);

  spec = AggregatorSpec{};
  spec.variant = AggVariant::Tilted;
  spec.tilt = 2.5;
  CHECK((aggregate::aggregate(spec, u, 0.0) - aggregate::agg_tilted(u, 2.5)).norm() == 0);
}

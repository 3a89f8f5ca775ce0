#include <doctest.h>

#include "clickseg/postprocess.hpp"
#include "test_support.hpp"

using namespace clickseg;
using namespace testing;

namespace {

/// Two tight clusters far apart along x.
PointCloud two_clusters(std::size_t per, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec3> p, n;
  for (std::size_t i = 0; i < 2 * per; ++i) {
    const double cx = i < per ? 0.0 : 10.0;
    p.emplace_back(cx + rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    n.push_back(Vec3::UnitZ());
  }
  return PointCloud(p, n);
}

}  // namespace

TEST_SUITE("postprocess") {
  TEST_CASE("connected mask with a positive is unchanged") {
    const PointCloud c = two_clusters(40, 1);
    SegmentMask m(80);
    for (std::size_t i = 0; i < 40; ++i) m.set(i);
    const std::vector<PointIndex> pos{3};
    CHECK(outlier_removal(c, m, pos, 3) == m);
  }

  TEST_CASE("separated cluster without a positive is removed") {
    const PointCloud c = two_clusters(40, 2);
    const SegmentMask all(80, true);
    const std::vector<PointIndex> pos{5};
    const SegmentMask out = outlier_removal(c, all, pos, 3);
    for (std::size_t i = 0; i < 80; ++i) CHECK(out[i] == (i < 40));
  }

  TEST_CASE("isolated annotated point is removed") {
    std::vector<Vec3> p;
    for (int i = 0; i < 10; ++i) p.emplace_back(i * 0.1, 0, 0);
    p.emplace_back(0.5, 8.0, 0);
    for (int i = 0; i < 10; ++i) p.emplace_back(i * 0.1, 10.0, 0);
    const PointCloud c(p, std::vector<Vec3>(p.size(), Vec3::UnitZ()));
    SegmentMask m(21);
    for (std::size_t i = 0; i <= 10; ++i) m.set(i);
    const std::vector<PointIndex> pos{0};
    const SegmentMask out = outlier_removal(c, m, pos, 3);
    CHECK(out.count() == 10);
    CHECK_FALSE(out[10]);
  }

  TEST_CASE("no positives leaves the mask unchanged") {
    const PointCloud c = two_clusters(10, 3);
    Rng rng(1);
    const SegmentMask m = random_mask(20, 0.5, rng);
    CHECK(outlier_removal(c, m, {}, 3) == m);
  }

  TEST_CASE("smoothing adds a fully surrounded point and leaves isolated ones") {
    std::vector<Vec3> p;
    for (int x = 0; x < 7; ++x)
      for (int y = 0; y < 7; ++y) p.emplace_back(x, y, 0);
    const PointCloud c(p, std::vector<Vec3>(p.size(), Vec3::UnitZ()));
    SegmentMask m(49, true);
    m.set(24, false);  // centre (3,3)
    m.set(0, false);
    const SegmentMask out = segment_smoothing(c, m, 4, 0.7, 5);
    CHECK(out[24]);

    SegmentMask lone(49);
    lone.set(48);
    CHECK(segment_smoothing(c, lone, 4, 0.7, 5) == lone);
  }

  TEST_CASE("outlier removal matches a BFS oracle") {
    Rng rng(11);
    for (int t = 0; t < 200; ++t) {
      const std::size_t n = 2 + rng.uniform_index(300);
      const PointCloud c = t % 3 == 0 ? grid_cloud(n, 6, rng.next()) : random_cloud(n, rng.next());
      const auto k = static_cast<int>(1 + rng.uniform_index(6));
      const auto nbrs = brute_knn_all(c.positions(), static_cast<std::size_t>(k));
      const SegmentMask m = random_mask(n, rng.uniform(0.1, 0.9), rng);
      std::vector<PointIndex> pos;
      for (std::size_t i = 0, cnt = rng.uniform_index(4); i < cnt; ++i) pos.push_back(static_cast<PointIndex>(rng.uniform_index(n)));
      const SegmentMask got = outlier_removal(c, m, pos, k);
      REQUIRE(got == brute_outlier_removal(nbrs, m, pos, static_cast<std::size_t>(k)));
      CHECK(subset_of(got, m));
      CHECK(outlier_removal(c, got, pos, k) == got);
    }
  }

  TEST_CASE("smoothing matches a round simulation") {
    Rng rng(12);
    for (int t = 0; t < 200; ++t) {
      const std::size_t n = 2 + rng.uniform_index(300);
      const PointCloud c = t % 3 == 0 ? grid_cloud(n, 5, rng.next()) : random_cloud(n, rng.next());
      const auto k = static_cast<int>(1 + rng.uniform_index(40));
      const double gamma = t % 4 == 0 ? 0.5 : rng.uniform(0.05, 1.0);
      const int rounds = static_cast<int>(rng.uniform_index(7));
      const auto nbrs = brute_knn_all(c.positions(), static_cast<std::size_t>(k));
      const SegmentMask m = random_mask(n, rng.uniform(0.2, 0.9), rng);
      const SegmentMask got = segment_smoothing(c, m, k, gamma, rounds);
      REQUIRE(got == brute_smoothing(nbrs, m, static_cast<std::size_t>(k), gamma, rounds));
      CHECK(subset_of(m, got));
      if (gamma + 0.1 <= 1.0) CHECK(subset_of(segment_smoothing(c, m, k, gamma + 0.1, rounds), got));
    }
  }

  TEST_CASE("smoothing fixed point") {
    Rng rng(13);
    for (int t = 0; t < 50; ++t) {
      const PointCloud c = random_cloud(150, rng.next());
      const SegmentMask m = random_mask(150, 0.6, rng);
      const SegmentMask once = segment_smoothing(c, m, 8, 0.5, 1);
      if (once == m) CHECK(segment_smoothing(c, m, 8, 0.5, 10) == m);
      const SegmentMask many = segment_smoothing(c, m, 8, 0.5, 200);
      CHECK(segment_smoothing(c, many, 8, 0.5, 200) == many);
    }
  }

  TEST_CASE("pipeline runs outlier removal before smoothing") {
    const PointCloud c = two_clusters(40, 4);
    SegmentMask m(80);
    for (std::size_t i = 0; i < 80; ++i)
      if (i % 4 != 0) m.set(i);
    const std::vector<PointIndex> pos{1};
    PostProcessConfig cfg;
    cfg.n_smooth = 8;
    const KnnTable knn = postprocess_neighbors(c, cfg);
    const SegmentMask expected = segment_smoothing(knn, outlier_removal(knn, m, pos, 3), 8, 0.7, 5);
    CHECK(postprocess(knn, m, pos, cfg) == expected);
    for (std::size_t i = 40; i < 80; ++i) CHECK_FALSE(expected[i]);
    cfg.outlier_removal = false;
    cfg.smoothing = false;
    CHECK(postprocess(knn, m, pos, cfg) == m);
  }

  TEST_CASE("config defaults and validation") {
    const PostProcessConfig c;
    CHECK(c.n_neighbor == 3);
    CHECK(c.n_smooth == 32);
    CHECK(c.gamma == 0.7);
    CHECK(c.n_iter == 5);
    PostProcessConfig bad;
    bad.gamma = 1.5;
    CHECK_THROWS(bad.validate());
    nlohmann::json j = c;
    CHECK(j.get<PostProcessConfig>() == c);
  }
}

#include <doctest.h>

#include "clickseg/backend.hpp"
#include "clickseg/finetune.hpp"
#include "clickseg/shape_forge.hpp"
#include "test_support.hpp"

using namespace clickseg;
using namespace testing;

namespace {

EmbeddingMatrix rows_of(const EmbeddingMatrix& z, const std::vector<PointIndex>& idx) {
  EmbeddingMatrix out(static_cast<Eigen::Index>(idx.size()), z.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = z.row(idx[i]);
  return out;
}

ClickSet random_clicks(std::size_t n, std::size_t pos, std::size_t neg, Rng& rng) {
  std::vector<PointIndex> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
  ClickSet c;
  c.positives.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(pos));
  c.negatives.assign(perm.begin() + static_cast<std::ptrdiff_t>(pos), perm.begin() + static_cast<std::ptrdiff_t>(pos + neg));
  return c;
}

Session session_with(const EmbeddingMatrix& z, const ClickSet& c, std::uint64_t seed) {
  auto cloud = std::make_shared<const PointCloud>(random_cloud(static_cast<std::size_t>(z.rows()), seed));
  Session s(cloud, std::make_shared<const EmbeddingMatrix>(z));
  for (PointIndex p : c.positives) s.add_click(ClickKind::Positive, p);
  for (PointIndex q : c.negatives) s.add_click(ClickKind::Negative, q);
  return s;
}

}  // namespace

TEST_SUITE("online_tune") {
  TEST_CASE("energy examples") {
    EmbeddingMatrix pos(1, 1), neg(1, 1);
    pos << 0.0;
    neg << 0.25;
    CHECK(finetune_energy(pos, neg, 0.75) == doctest::Approx(0.5));
    neg << 1.0;
    CHECK(finetune_energy(pos, neg, 0.75) == 0.0);
    CHECK(finetune_energy(pos, EmbeddingMatrix(0, 1), 0.75) == 0.0);
    CHECK_THROWS_AS(finetune_energy(EmbeddingMatrix(0, 1), neg, 0.75), std::invalid_argument);
  }

  TEST_CASE("energy invariances") {
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
      const EmbeddingMatrix p = random_embedding(1 + rng.uniform_index(5), 3, rng.next(), 0.3);
      const EmbeddingMatrix q = random_embedding(1 + rng.uniform_index(5), 3, rng.next(), 0.3);
      const double e = finetune_energy(p, q, 0.75);
      CHECK(e >= 0.0);
      EmbeddingMatrix pr = p.colwise().reverse();  // row permutation
      EmbeddingMatrix qr = q.colwise().reverse();
      CHECK(finetune_energy(pr, qr, 0.75) == doctest::Approx(e));
      EmbeddingMatrix ps = p, qs = q;
      ps.rowwise() += Eigen::RowVector3d(1, -2, 0.5);
      qs.rowwise() += Eigen::RowVector3d(1, -2, 0.5);
      CHECK(finetune_energy(ps, qs, 0.75) == doctest::Approx(e));
    }
  }

  TEST_CASE("energy gradient matches central differences") {
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
      const std::size_t n = 6 + rng.uniform_index(20);
      EmbeddingMatrix z = random_embedding(n, 1 + static_cast<int>(rng.uniform_index(6)), rng.next(), 0.25);
      const ClickSet c = random_clicks(n, 1 + rng.uniform_index(3), 1 + rng.uniform_index(3), rng);
      const EnergyGradient g = finetune_energy_gradient(z, c, 0.75);
      CHECK(g.energy == doctest::Approx(finetune_energy(rows_of(z, c.positives), rows_of(z, c.negatives), 0.75)));
      const double h = 1e-7;
      Eigen::VectorXd fd(z.size());
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double keep = z.data()[i];
        z.data()[i] = keep + h;
        const double up = finetune_energy_gradient(z, c, 0.75).energy;
        z.data()[i] = keep - h;
        const double down = finetune_energy_gradient(z, c, 0.75).energy;
        z.data()[i] = keep;
        fd[i] = (up - down) / (2 * h);
      }
      const Eigen::VectorXd an = Eigen::Map<const Eigen::VectorXd>(g.grad.data(), g.grad.size());
      CHECK((an - fd).norm() <= 1e-4 * std::max(1e-8, std::max(an.norm(), fd.norm())) + 1e-9);
    }
  }

  TEST_CASE("zero steps leave the session unchanged") {
    Rng rng(3);
    const EmbeddingMatrix z = random_embedding(40, 4, 3, 0.1);
    Session s = session_with(z, random_clicks(40, 2, 2, rng), 3);
    const Session before = s;
    FinetuneOptions o;
    o.steps = 0;
    const auto r = finetune(s, nullptr, o);
    CHECK(r.accepted_steps == 0);
    CHECK(s.same_state(before));
    CHECK(s.undo_depth() == before.undo_depth());
  }

  TEST_CASE("zero energy leaves the session unchanged") {
    EmbeddingMatrix z = EmbeddingMatrix::Zero(10, 2);
    z(5, 0) = 2.0;
    ClickSet c;
    c.positives = {0};
    c.negatives = {5};
    Session s = session_with(z, c, 4);
    const Session before = s;
    const auto r = finetune(s, nullptr, FinetuneOptions{});
    CHECK(r.energy_before == 0.0);
    CHECK(r.accepted_steps == 0);
    CHECK(s.same_state(before));
  }

  TEST_CASE("accepted steps never raise the energy") {
    Rng rng(5);
    for (int t = 0; t < 40; ++t) {
      const std::size_t n = 30 + rng.uniform_index(50);
      const EmbeddingMatrix z = random_embedding(n, 3, rng.next(), 0.2);
      Session s = session_with(z, random_clicks(n, 1 + rng.uniform_index(3), 1 + rng.uniform_index(4), rng), rng.next());
      FinetuneOptions o;
      o.step_size = rng.uniform(1e-3, 2.0);
      o.steps = 1 + static_cast<int>(rng.uniform_index(20));
      double prev = finetune_energy_gradient(s.embeddings(), s.clicks(), o.eps_cte).energy;
      for (int round = 0; round < 3; ++round) {
        const auto r = finetune(s, nullptr, o);
        CHECK(r.energy_before == doctest::Approx(prev));
        CHECK(r.energy_after <= r.energy_before);
        const double now = finetune_energy_gradient(s.embeddings(), s.clicks(), o.eps_cte).energy;
        CHECK(now == doctest::Approx(r.energy_after));
        prev = now;
      }
    }
  }

  TEST_CASE("driving the energy to zero unflags every negative") {
    Rng rng(6);
    for (int t = 0; t < 20; ++t) {
      const std::size_t n = 50;
      const EmbeddingMatrix z = random_embedding(n, 4, rng.next(), 0.1);
      const ClickSet c = random_clicks(n, 3, 4, rng);
      Session s = session_with(z, c, rng.next());
      FinetuneOptions o;
      o.step_size = 0.5;
      o.steps = 400;
      const auto r = finetune(s, nullptr, o);
      REQUIRE(r.energy_after == 0.0);
      ClickSet only_pos = s.clicks();
      only_pos.negatives.clear();
      for (PointIndex q : s.clicks().negatives) {
        for (PointIndex p : s.clicks().positives)
          CHECK((s.embeddings().row(q) - s.embeddings().row(p)).norm() >= s.clicks().alpha);
        CHECK_FALSE(annotate(s.embeddings(), only_pos)[static_cast<std::size_t>(q)]);
      }
    }
  }

  TEST_CASE("a negative equidistant from two positives still descends") {
    EmbeddingMatrix z = EmbeddingMatrix::Zero(6, 2);
    z(0, 0) = -0.3;
    z(1, 0) = 0.3;
    ClickSet c;
    c.positives = {0, 1};
    c.negatives = {2};
    Session s = session_with(z, c, 9);
    FinetuneOptions o;
    o.steps = 50;
    const auto r = finetune(s, nullptr, o);
    CHECK(r.energy_before == doctest::Approx(0.45));
    CHECK(r.accepted_steps == 50);
    CHECK(r.energy_after < r.energy_before - 0.01);
  }

  TEST_CASE("network backends tune parameters") {
    ForgeConfig fc;
    fc.k_min = 2;
    fc.k_max = 3;
    fc.n_points = 200;
    const auto shape = reshuffle_compose(default_primitive_repository(), fc, 2).shape;
    NetworkShape ns;
    ns.hidden = 8;
    ns.output_dim = 6;
    ns.aggregate_k = 4;
    PointNetwork net(ns);
    net.initialize(1);
    net.parameters() *= 0.05;
    const TrainedBackend backend(net);
    auto cloud = std::make_shared<const PointCloud>(shape.cloud());
    Session s(cloud, std::make_shared<const EmbeddingMatrix>(backend.embed(*cloud)));
    s.add_click(ClickKind::Positive, 0);
    s.add_click(ClickKind::Negative, 1);
    s.add_click(ClickKind::Negative, 100);
    FinetuneOptions o;
    o.step_size = 0.05;
    const auto r = finetune(s, &backend, o);
    CHECK(r.tuned_parameters);
    CHECK(r.energy_after <= r.energy_before);
    if (r.accepted_steps > 0) {
      REQUIRE(s.tuned_network() != nullptr);
      const TrainedBackend tuned(*s.tuned_network());
      CHECK((tuned.embed(*cloud) - s.embeddings()).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(finetune_energy_gradient(s.embeddings(), s.clicks(), 0.75).energy == doctest::Approx(r.energy_after));
    }
    CHECK(r.energy_after < r.energy_before);
  }

  TEST_CASE("error contract") {
    Rng rng(7);
    const EmbeddingMatrix z = random_embedding(20, 3, 1, 0.1);
    Session s = session_with(z, random_clicks(20, 1, 1, rng), 1);
    FinetuneOptions o;
    o.allow_offsets = false;
    const DescriptorBackend descriptor;
    CHECK_THROWS_WITH(finetune(s, &descriptor, o), "backend not tunable");
    Session empty = session_with(z, ClickSet{}, 1);
    CHECK_THROWS_AS(finetune(empty, nullptr, FinetuneOptions{}), std::invalid_argument);
    FinetuneOptions bad;
    bad.step_size = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    nlohmann::json j = FinetuneOptions{};
    CHECK(j.get<FinetuneOptions>() == FinetuneOptions{});
  }
}

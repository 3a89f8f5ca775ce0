#include <doctest.h>

#include <map>
#include <set>

#include "clickseg/cloud_io.hpp"
#include "clickseg/shape_forge.hpp"
#include "test_support.hpp"

using namespace clickseg;
using namespace testing;

namespace {

PrimitiveSpec spec(PrimitiveKind kind, double a, double b) {
  PrimitiveSpec s;
  s.kind = kind;
  s.a = a;
  s.b = b;
  return s;
}

ForgeConfig small_forge(int kmin, int kmax, std::size_t n) {
  ForgeConfig c;
  c.k_min = kmin;
  c.k_max = kmax;
  c.n_points = n;
  return c;
}

}  // namespace

TEST_SUITE("shape_forge") {
  TEST_CASE("plane samples lie in z = 0 with +z normals") {
    const auto patch = sample_primitive_local(spec(PrimitiveKind::Plane, 1.0, 0.5), 200, 1);
    REQUIRE(patch.positions.size() == 200);
    for (std::size_t i = 0; i < 200; ++i) {
      CHECK(patch.positions[i].z() == 0.0);
      CHECK(std::abs(patch.positions[i].x()) <= 0.5);
      CHECK(std::abs(patch.positions[i].y()) <= 0.25);
      CHECK(patch.normals[i] == Vec3::UnitZ());
    }
  }

  TEST_CASE("cylinder samples sit at radius r") {
    const auto patch = sample_primitive_local(spec(PrimitiveKind::Cylinder, 0.3, 1.0), 300, 2);
    for (std::size_t i = 0; i < 300; ++i) {
      const Vec3& p = patch.positions[i];
      CHECK(std::hypot(p.x(), p.y()) == doctest::Approx(0.3).epsilon(1e-6));
      CHECK(std::abs(p.z()) <= 0.5 + 1e-12);
      CHECK(patch.normals[i].dot(Vec3(p.x(), p.y(), 0).normalized()) == doctest::Approx(1.0));
    }
  }

  TEST_CASE("sphere samples have norm r and radial normals") {
    const auto patch = sample_primitive_local(spec(PrimitiveKind::Sphere, 0.4, 1.0), 300, 3);
    for (std::size_t i = 0; i < 300; ++i) {
      CHECK(patch.positions[i].norm() == doctest::Approx(0.4).epsilon(1e-6));
      CHECK((patch.normals[i] - patch.positions[i] / 0.4).norm() < 1e-6);
    }
  }

  TEST_CASE("every kind samples onto its own surface after posing") {
    Rng rng(5);
    for (auto kind : {PrimitiveKind::Plane, PrimitiveKind::Sphere, PrimitiveKind::Cylinder, PrimitiveKind::Cone,
                      PrimitiveKind::Torus}) {
      PrimitiveSpec s = spec(kind, 0.5, kind == PrimitiveKind::Torus ? 0.15 : 0.8);
      s.pose.rotation = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
      s.pose.translation = Vec3(rng.normal(), rng.normal(), rng.normal());
      s.pose.scale = 1.7;
      const auto patch = sample_primitive(s, 256, 9);
      for (std::size_t i = 0; i < patch.positions.size(); ++i) {
        CHECK(s.surface_distance(patch.positions[i]) < 1e-9);
        CHECK(patch.normals[i].norm() == doctest::Approx(1.0));
        CHECK(s.pose.to_world(s.pose.to_local(patch.positions[i])).isApprox(patch.positions[i], 1e-12));
      }
    }
  }

  TEST_CASE("area-uniform sampling on a sphere balances hemispheres") {
    const auto patch = sample_primitive_local(spec(PrimitiveKind::Sphere, 1.0, 1.0), 20000, 4);
    // Uniform area: z is uniform in [-1, 1], so each third of the z range holds a third of the points.
    int bands[3] = {0, 0, 0};
    for (const auto& p : patch.positions) ++bands[std::min(2, static_cast<int>((p.z() + 1.0) * 1.5))];
    for (int b : bands) CHECK(std::abs(b - 20000.0 / 3.0) < 300);
  }

  TEST_CASE("invalid specs are rejected") {
    CHECK_THROWS_AS(spec(PrimitiveKind::Sphere, 0.0, 1.0).validate(), GeometryError);
    CHECK_THROWS_AS(spec(PrimitiveKind::Plane, 1.0, -1.0).validate(), GeometryError);
    CHECK_THROWS_AS(spec(PrimitiveKind::Torus, 0.2, 0.3).validate(), GeometryError);
    CHECK_THROWS_AS(sample_primitive(spec(PrimitiveKind::Cone, -1.0, 1.0), 64, 0), GeometryError);
    CHECK_THROWS(sample_primitive(spec(PrimitiveKind::Cone, 1.0, 1.0), 8, 0));
    CHECK(primitive_kind_from_string(to_string(PrimitiveKind::Torus)) == PrimitiveKind::Torus);
  }

  TEST_CASE("forced K composes a two-segment shape") {
    const auto c = reshuffle_compose(default_primitive_repository(), small_forge(2, 2, 512), 11);
    CHECK(c.shape.segment_count() == 2);
    CHECK(c.shape.size() == 512);
    CHECK(c.primitives.size() == 2);
  }

  TEST_CASE("paper-sized composition") {
    const auto c = reshuffle_compose(default_primitive_repository(), small_forge(3, 12, 4096), 1);
    CHECK(c.shape.size() == 4096);
    CHECK(c.shape.segment_count() >= 3);
    CHECK(c.shape.segment_count() <= 12);
  }

  TEST_CASE("composition invariants over many seeds") {
    const auto repo = default_primitive_repository();
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const auto c = reshuffle_compose(repo, small_forge(2, 8, 1024), seed);
      const auto& shape = c.shape;
      REQUIRE(shape.size() == 1024);
      std::vector<int> counts(static_cast<std::size_t>(shape.segment_count()), 0);
      for (int l : shape.labels()) {
        REQUIRE(l >= 0);
        REQUIRE(l < shape.segment_count());
        ++counts[static_cast<std::size_t>(l)];
      }
      for (int n : counts) CHECK(n >= 16);
      double max_norm = 0.0;
      for (std::size_t i = 0; i < shape.size(); ++i) {
        max_norm = std::max(max_norm, shape.cloud().position(i).norm());
        const auto& prim = c.primitives[static_cast<std::size_t>(shape.labels()[i])];
        CHECK(prim.surface_distance(shape.cloud().position(i)) < 1e-5);
      }
      CHECK(max_norm == doctest::Approx(1.0));
    }
  }

  TEST_CASE("composition is deterministic") {
    const auto repo = default_primitive_repository();
    const auto a = reshuffle_compose(repo, small_forge(3, 6, 768), 77);
    const auto b = reshuffle_compose(repo, small_forge(3, 6, 768), 77);
    CHECK(a.shape == b.shape);
    CHECK_FALSE(a.shape == reshuffle_compose(repo, small_forge(3, 6, 768), 78).shape);
  }

  TEST_CASE("labeled shape validation") {
    const PointCloud c = random_cloud(4, 1);
    CHECK_THROWS_AS(LabeledShape(c, {0, 1, 1}), GeometryError);
    CHECK_THROWS_AS(LabeledShape(c, {0, 2, 2, 0}), GeometryError);
    const LabeledShape s(c, {1, 0, 1, 0});
    CHECK(s.segment_count() == 2);
    CHECK(s.segment(1) == std::vector<PointIndex>{0, 2});
  }

  TEST_CASE("parts are unions of adjacent whole primitives") {
    const auto c = reshuffle_compose(default_primitive_repository(), small_forge(5, 10, 1024), 3);
    const auto parts = group_parts(c.shape, 4, 9);
    std::map<int, std::set<int>> members;
    std::map<int, int> part_of_label;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const int l = c.shape.labels()[i];
      if (part_of_label.count(l)) CHECK(part_of_label[l] == parts[i]);
      part_of_label[l] = parts[i];
      members[parts[i]].insert(l);
    }
    for (const auto& [p, m] : members) {
      CHECK(m.size() >= 1);
      CHECK(m.size() <= 4);
    }
    CHECK(group_parts(c.shape, 4, 9) == parts);
    CHECK(complexity_category(3) == "simple");
    CHECK(complexity_category(7) == "moderate");
    CHECK(complexity_category(12) == "complex");
  }

  TEST_CASE("dataset generation writes a manifest and is idempotent") {
    TempDir dir("forge");
    const ForgeConfig cfg = small_forge(2, 4, 256);
    const auto first = generate_dataset(10, cfg, dir.path(), 5);
    CHECK(first.generated == 10);
    CHECK(first.skipped == 0);
    const auto entries = list_dataset(dir.path());
    REQUIRE(entries.size() == 10);
    std::map<std::string, std::filesystem::file_time_type> stamps;
    for (const auto& f : std::filesystem::directory_iterator(dir.path()))
      stamps[f.path().filename().string()] = f.last_write_time();
    std::size_t shape_files = 0;
    for (const auto& [name, t] : stamps) shape_files += name.ends_with(".xyzn") ? 1 : 0;
    CHECK(shape_files == 10);

    const std::string manifest = read_file(first.manifest);
    const auto second = generate_dataset(10, cfg, dir.path(), 5);
    CHECK(second.generated == 0);
    CHECK(second.skipped == 10);
    CHECK(read_file(second.manifest) == manifest);
    for (const auto& f : std::filesystem::directory_iterator(dir.path()))
      CHECK(stamps[f.path().filename().string()] == f.last_write_time());

    const auto shape = load_dataset_shape(dir.path(), entries[3]);
    CHECK(shape.shape.segment_count() == entries[3].segment_count);
    CHECK(shape.parts.size() == shape.shape.size());
    CHECK(shape.category == complexity_category(entries[3].segment_count));
    const auto direct = load_labeled_shape(dir.path() / (entries[3].name + ".xyzn"));
    CHECK(direct == shape.shape);
  }

  TEST_CASE("dataset is independent of thread count") {
    TempDir a("forge_a"), b("forge_b");
    const ForgeConfig cfg = small_forge(2, 4, 256);
    generate_dataset(6, cfg, a.path(), 8, 1);
    generate_dataset(6, cfg, b.path(), 8, 3);
    CHECK(read_file(a / "manifest.json") == read_file(b / "manifest.json"));
  }

  TEST_CASE("forge config round trip and validation") {
    ForgeConfig c = small_forge(3, 5, 512);
    c.noise_sigma = 0.01;
    CHECK(ForgeConfig::from_json(c.to_json()) == c);
    CHECK_THROWS(small_forge(1, 5, 512).validate());
    CHECK_THROWS(small_forge(3, 20, 512).validate());
  }
}

#include <doctest.h>

#include <chrono>
#include <cstring>
#include <set>
#include <thread>

#include "clickseg/cloud_io.hpp"
#include "clickseg/service.hpp"
#include "clickseg/shape_forge.hpp"
#include "test_support.hpp"

#include <httplib.h>

using namespace clickseg;
using namespace testing;
using nlohmann::json;

namespace {

std::string shape_text(std::size_t n, std::uint64_t seed) {
  ForgeConfig fc;
  fc.k_min = 3;
  fc.k_max = 5;
  fc.n_points = n;
  return format_xyzn(reshuffle_compose(default_primitive_repository(), fc, seed).shape.cloud());
}

ServiceConfig service_config(const std::filesystem::path& dir) {
  ServiceConfig c;
  c.data_dir = dir;
  c.max_points = 5000;
  return c;
}

std::vector<PointIndex> ints(const json& j) { return j.get<std::vector<PointIndex>>(); }

/// Offline replay of a click history on the stored cloud.
SegmentMask replay(const std::filesystem::path& data_dir, const std::string& shape_id, const json& clicks,
                   const AppConfig& cfg = {}) {
  auto cloud = std::make_shared<const PointCloud>(load_cloud(data_dir / "shapes" / (shape_id + ".xyzn")));
  auto z = std::make_shared<const EmbeddingMatrix>(DescriptorBackend().embed(*cloud));
  Session s(cloud, z, cfg.interact);
  for (const Click& c : parse_click_script(clicks)) s.add_click(c.kind, c.index);
  return s.mask();
}

struct Fixture {
  TempDir dir{"service"};
  AnnotatorService service{service_config(dir.path())};
  std::string shape_id;
  std::string session_id;

  Fixture() {
    const auto up = service.upload_shape(shape_text(1024, 5));
    REQUIRE(up.status == 201);
    shape_id = up.body.at("id").get<std::string>();
    const auto s = service.create_session({{"shape_id", shape_id}});
    REQUIRE(s.status == 201);
    session_id = s.body.at("id").get<std::string>();
  }
  ServiceResponse op(json body) { return service.session_op(session_id, body); }
};

}  // namespace

TEST_SUITE("annotator_service") {
  TEST_CASE("upload contract") {
    TempDir dir("upload");
    AnnotatorService svc(service_config(dir.path()));
    CHECK(svc.health().body.at("status") == "ok");
    const std::string text = shape_text(4096, 1);
    const auto a = svc.upload_shape(text);
    REQUIRE(a.status == 201);
    CHECK(a.body.at("points") == 4096);
    const auto b = svc.upload_shape(text);
    CHECK(b.status == 201);
    CHECK(b.body.at("id") == a.body.at("id"));
    CHECK(svc.upload_shape(shape_text(512, 2)).body.at("id") != a.body.at("id"));

    std::string bad;
    for (int i = 1; i <= 20; ++i) bad += i == 17 ? "0 0 0 0 0\n" : std::to_string(i) + " 0 0 0 0 1\n";
    const auto e = svc.upload_shape(bad);
    CHECK(e.status == 422);
    CHECK(e.body.at("line") == 17);
    CHECK(e.body.at("error").get<std::string>().find("line 17") != std::string::npos);

    ServiceConfig small = service_config(dir.path());
    small.max_points = 100;
    CHECK(AnnotatorService(small).upload_shape(text).status == 413);
  }

  TEST_CASE("binary shape download") {
    Fixture f;
    const auto r = f.service.get_shape(f.shape_id);
    CHECK(r.content_type == "application/octet-stream");
    REQUIRE(r.raw.size() == 4 + 1024 * 24);
    std::uint32_t n = 0;
    std::memcpy(&n, r.raw.data(), 4);
    CHECK(n == 1024);
    const PointCloud stored = load_cloud(f.dir / ("shapes/" + f.shape_id + ".xyzn"));
    float first[6];
    std::memcpy(first, r.raw.data() + 4, sizeof first);
    CHECK(first[0] == static_cast<float>(stored.position(0).x()));
    CHECK(first[5] == static_cast<float>(stored.normal(0).z()));
    CHECK(f.service.get_shape_meta(f.shape_id).body.at("points") == 1024);
    CHECK(f.service.get_shape("0000000000000000").status == 404);
    CHECK(f.service.get_shape("../etc").status == 404);
  }

  TEST_CASE("session creation errors") {
    Fixture f;
    CHECK(f.service.create_session({{"shape_id", "ffffffffffffffff"}}).status == 404);
    CHECK(f.service.create_session({{"shape_id", f.shape_id}, {"backend", "bogus"}}).status == 422);
    CHECK(f.service.create_session({{"shape_id", f.shape_id}, {"backend", "ckpt:../../x"}}).status == 422);
    CHECK(f.service.create_session({{"shape_id", f.shape_id}, {"ground_truth", {1, 5000}}}).status == 422);
    CHECK(f.service.create_session({{"shape_id", f.shape_id}, {"backend", "random:3"}}).status == 201);
  }

  TEST_CASE("add and undo deltas") {
    Fixture f;
    const auto a = f.op({{"op", "add"}, {"kind", "positive"}, {"index", 10}});
    REQUIRE(a.status == 200);
    const auto added = ints(a.body.at("added"));
    CHECK(std::find(added.begin(), added.end(), 10) != added.end());
    CHECK(a.body.at("removed").empty());
    const auto n = f.op({{"op", "add"}, {"kind", "negative"}, {"index", 11}});
    const auto u = f.op({{"op", "undo"}});
    CHECK(ints(u.body.at("added")) == ints(n.body.at("removed")));
    CHECK(ints(u.body.at("removed")) == ints(n.body.at("added")));
    CHECK(f.service.get_mask(f.session_id).body.at("indices") == a.body.at("added"));
  }

  TEST_CASE("op errors") {
    Fixture f;
    CHECK(f.service.session_op("nope", {{"op", "undo"}}).status == 404);
    CHECK(f.op({{"op", "explode"}}).status == 409);
    CHECK(f.op(json::object()).status == 409);
    CHECK(f.op({{"op", "undo"}}).status == 409);
    CHECK(f.op({{"op", "add"}, {"index", 5000}}).status == 409);
    f.op({{"op", "add"}, {"index", 3}});
    CHECK(f.op({{"op", "add"}, {"kind", "negative"}, {"index", 3}}).status == 409);
    CHECK(f.op({{"op", "remove"}, {"index", 4}}).status == 409);
    CHECK(f.op({{"op", "scribble"}, {"indices", "x"}}).status == 409);
  }

  TEST_CASE("scribble equals sequential negatives") {
    Fixture f;
    f.op({{"op", "add"}, {"index", 0}});
    const auto other = f.service.create_session({{"shape_id", f.shape_id}}).body.at("id").get<std::string>();
    f.service.session_op(other, {{"op", "add"}, {"index", 0}});
    std::vector<PointIndex> scribble;
    Rng rng(3);
    for (int i = 0; i < 30; ++i) scribble.push_back(static_cast<PointIndex>(1 + rng.uniform_index(1000)));
    const auto r = f.op({{"op", "scribble"}, {"indices", scribble}});
    REQUIRE(r.status == 200);
    for (PointIndex i : scribble) f.service.session_op(other, {{"op", "add"}, {"kind", "negative"}, {"index", i}});
    CHECK(f.service.get_mask(f.session_id).body.at("indices") == f.service.get_mask(other).body.at("indices"));
  }

  TEST_CASE("server mask equals offline replay") {
    Fixture f;
    Rng rng(9);
    for (int step = 0; step < 30; ++step) {
      const auto i = static_cast<PointIndex>(rng.uniform_index(1024));
      const double u = rng.uniform();
      if (u < 0.5) f.op({{"op", "add"}, {"kind", "positive"}, {"index", i}});
      else if (u < 0.85) f.op({{"op", "add"}, {"kind", "negative"}, {"index", i}});
      else if (u < 0.9) f.op({{"op", "scribble"}, {"indices", {i, i + 1 < 1024 ? i + 1 : 0}}});
      else f.op({{"op", "undo"}});
      const json m = f.service.get_mask(f.session_id).body;
      REQUIRE(ints(m.at("indices")) == replay(f.dir.path(), f.shape_id, m.at("clicks")).indices());
    }
  }

  TEST_CASE("ground truth iou and finetune op") {
    Fixture f;
    const auto s = f.service.create_session({{"shape_id", f.shape_id}, {"ground_truth", {0, 1, 2, 3}}});
    const std::string id = s.body.at("id").get<std::string>();
    const auto a = f.service.session_op(id, {{"op", "add"}, {"index", 0}});
    CHECK(a.body.contains("iou"));
    f.service.session_op(id, {{"op", "add"}, {"kind", "negative"}, {"index", 1}});
    const auto t = f.service.finetune_session(id, {{"steps", 5}});
    REQUIRE(t.status == 200);
    CHECK(t.body.at("energy_after").get<double>() <= t.body.at("energy_before").get<double>());
    CHECK(f.service.finetune_session(f.session_id, json::object()).status == 409);
  }

  TEST_CASE("checkpoint backends resolve under the models directory") {
    Fixture f;
    NetworkShape ns;
    ns.hidden = 4;
    ns.output_dim = 3;
    ns.aggregate_k = 4;
    PointNetwork net(ns);
    net.initialize(1);
    save_checkpoint(f.dir / "models/tiny.ckpt", net);
    CHECK(f.service.create_session({{"shape_id", f.shape_id}, {"backend", "ckpt:tiny"}}).status == 201);
    CHECK(f.service.create_session({{"shape_id", f.shape_id}, {"backend", "ckpt:missing"}}).status == 422);
  }

  TEST_CASE("commit, list, export and restart") {
    Fixture f;
    f.session_id = f.service.create_session({{"shape_id", f.shape_id}, {"backend", "random:3"}})
                       .body.at("id")
                       .get<std::string>();
    CHECK(f.service.commit(f.session_id, {{"label", "empty"}}).status == 409);
    f.op({{"op", "add"}, {"index", 0}});
    const auto history = f.service.get_mask(f.session_id).body.at("clicks");
    const auto first_mask = ints(f.service.get_mask(f.session_id).body.at("indices"));
    const auto c1 = f.service.commit(f.session_id, {{"label", "leg"}});
    REQUIRE(c1.status == 201);
    CHECK(c1.body.at("label_id") == 0);
    CHECK(f.service.get_mask(f.session_id).body.at("indices").empty());

    PointIndex far = 0;
    for (PointIndex i = 0; i < 1024; ++i)
      if (std::find(first_mask.begin(), first_mask.end(), i) == first_mask.end()) {
        far = i;
        break;
      }
    f.op({{"op", "add"}, {"index", far}});
    const auto second_mask = ints(f.service.get_mask(f.session_id).body.at("indices"));
    REQUIRE(f.service.commit(f.session_id, {{"label", "seat"}}).status == 201);

    const auto list = f.service.list_annotations(f.shape_id).body.at("annotations");
    REQUIRE(list.size() == 2);
    CHECK(list[0].at("label") == "leg");
    CHECK(list[0].at("clicks") == history);
    CHECK(ints(list[1].at("indices")) == second_mask);

    const auto labels = parse_labels(f.service.export_labels(f.shape_id).raw);
    REQUIRE(labels.size() == 1024);
    std::set<int> values(labels.begin(), labels.end());
    CHECK(values == std::set<int>{-1, 0, 1});
    for (PointIndex i : second_mask) CHECK(labels[static_cast<std::size_t>(i)] == 1);

    AnnotatorService restarted(service_config(f.dir.path()));
    CHECK(restarted.list_annotations(f.shape_id).body.at("annotations") == list);
    CHECK(restarted.export_labels(f.shape_id).raw == f.service.export_labels(f.shape_id).raw);
    CHECK(restarted.session_op(f.session_id, {{"op", "undo"}}).status == 404);
    for (const auto& e : std::filesystem::recursive_directory_iterator(f.dir.path()))
      CHECK(e.path().extension() != ".tmp");
  }

  TEST_CASE("fifo mutex serves waiters in arrival order") {
    FifoMutex m;
    std::vector<int> order;
    std::mutex order_mutex;
    m.lock();
    std::vector<std::thread> threads;
    for (int i = 0; i < 5; ++i) {
      threads.emplace_back([&, i] {
        std::lock_guard lock(m);
        std::lock_guard o(order_mutex);
        order.push_back(i);
      });
      std::this_thread::sleep_for(std::chrono::milliseconds(30));
    }
    m.unlock();
    for (auto& t : threads) t.join();
    CHECK(order == std::vector<int>{0, 1, 2, 3, 4});
  }

  TEST_CASE("concurrent mutations on one session are serialized") {
    Fixture f;
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t)
      threads.emplace_back([&, t] { f.op({{"op", "add"}, {"kind", t % 2 ? "negative" : "positive"}, {"index", 100 + t}}); });
    for (auto& t : threads) t.join();
    const json m = f.service.get_mask(f.session_id).body;
    CHECK(m.at("clicks").size() == 8);
    CHECK(ints(m.at("indices")) == replay(f.dir.path(), f.shape_id, m.at("clicks")).indices());
  }

  TEST_CASE("http routes") {
    Fixture f;
    HttpFrontend http(f.service);
    const int port = http.bind("127.0.0.1", 0);
    std::thread server([&] { http.run(); });
    httplib::Client cli("127.0.0.1", port);
    cli.set_read_timeout(10, 0);

    auto health = cli.Get("/healthz");
    REQUIRE(health);
    CHECK(health->status == 200);

    auto up = cli.Post("/shapes", shape_text(512, 8), "text/plain");
    REQUIRE(up);
    CHECK(up->status == 201);
    const std::string sid = json::parse(up->body).at("id");

    auto bin = cli.Get("/shapes/" + sid);
    REQUIRE(bin);
    CHECK(bin->body.size() == 4 + 512 * 24);
    CHECK(json::parse(cli.Get("/shapes/" + sid + "/meta")->body).at("points") == 512);

    auto sess = cli.Post("/sessions", json{{"shape_id", sid}}.dump(), "application/json");
    REQUIRE(sess);
    CHECK(sess->status == 201);
    const std::string id = json::parse(sess->body).at("id");

    auto add = cli.Post("/sessions/" + id + "/ops", json{{"op", "add"}, {"kind", "positive"}, {"index", 4}}.dump(),
                        "application/json");
    REQUIRE(add);
    CHECK(add->status == 200);
    const auto added = ints(json::parse(add->body).at("added"));
    CHECK(std::find(added.begin(), added.end(), 4) != added.end());

    auto mask = cli.Get("/sessions/" + id + "/mask");
    CHECK(ints(json::parse(mask->body).at("indices")) == added);
    CHECK(cli.Post("/sessions/" + id + "/finetune", "{}", "application/json")->status == 200);
    CHECK(cli.Post("/sessions/" + id + "/ops", "{not json", "application/json")->status == 400);
    CHECK(cli.Post("/sessions/unknown/ops", R"({"op":"undo"})", "application/json")->status == 404);
    CHECK(cli.Post("/sessions/" + id + "/commit", R"({"label":"a"})", "application/json")->status == 201);
    CHECK(json::parse(cli.Get("/shapes/" + sid + "/annotations")->body).at("annotations").size() == 1);
    auto labels = cli.Get("/shapes/" + sid + "/labels");
    CHECK(parse_labels(labels->body).size() == 512);
    CHECK(cli.Get("/nothing")->status == 404);

    http.stop();
    server.join();
  }
}

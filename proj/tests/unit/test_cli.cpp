#include <doctest.h>

#include <sstream>

#include "clickseg/backend.hpp"
#include "clickseg/benchmark.hpp"
#include "clickseg/cli.hpp"
#include "clickseg/cloud_io.hpp"
#include "clickseg/shape_forge.hpp"
#include "test_support.hpp"

using namespace clickseg;
using namespace testing;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  if (!args.empty() && args[0] != "--help") args.insert(args.begin(), {"--log-level", "off"});
  args.insert(args.begin(), "clickseg");
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors and help") {
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({}).code == 2);
    const Run help = run({"bench", "--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("--dataset") != std::string::npos);
    CHECK(run({"--help"}).code == 0);
    CHECK(run({"segment", "missing.xyzn", "--clicks", "c.json", "--out", "m.json"}).code == 2);
    CHECK(run({"--config", "/nonexistent/config.json", "gen-data", "--out", "x"}).code == 2);
  }

  TEST_CASE("runtime failures exit with 1") {
    TempDir dir("cli_fail");
    write_file_atomic(dir / "bad.json", R"({"no_such_key": 1})");
    const Run r = run({"--config", (dir / "bad.json").string(), "gen-data", "--out", (dir / "d").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("no_such_key") != std::string::npos);

    save_cloud(dir / "s.xyzn", random_cloud(20, 1));
    write_file_atomic(dir / "c.json", R"([{"kind":"positive","index":99}])");
    CHECK(run({"segment", (dir / "s.xyzn").string(), "--clicks", (dir / "c.json").string(), "--out",
               (dir / "m.json").string()})
              .code == 1);
  }

  TEST_CASE("segment output equals the library replay") {
    TempDir dir("cli_seg");
    ForgeConfig fc;
    fc.k_min = 3;
    fc.k_max = 4;
    fc.n_points = 512;
    const auto shape = reshuffle_compose(default_primitive_repository(), fc, 4).shape;
    save_cloud(dir / "s.xyzn", shape.cloud());
    const std::vector<Click> clicks{{ClickKind::Positive, 3}, {ClickKind::Negative, 200}, {ClickKind::Positive, 400}};
    write_file_atomic(dir / "c.json", click_script_json(clicks).dump());
    const Run r = run({"--seed", "3", "segment", (dir / "s.xyzn").string(), "--clicks", (dir / "c.json").string(),
                       "--out", (dir / "m.json").string()});
    REQUIRE(r.code == 0);
    AppConfig cfg;
    cfg.seed = 3;
    cfg.sync();
    const auto expected = segment_with_clicks(load_cloud(dir / "s.xyzn"), clicks, DescriptorBackend(), cfg);
    CHECK(read_file(dir / "m.json") == expected.dump() + "\n");

    const Run raw = run({"segment", (dir / "s.xyzn").string(), "--clicks", (dir / "c.json").string(), "--out",
                         (dir / "raw.json").string(), "--no-or", "--no-ss"});
    REQUIRE(raw.code == 0);
    cfg.interact.post.outlier_removal = false;
    cfg.interact.post.smoothing = false;
    CHECK(read_file(dir / "raw.json") ==
          segment_with_clicks(load_cloud(dir / "s.xyzn"), clicks, DescriptorBackend(), cfg).dump() + "\n");
  }

  TEST_CASE("embed writes the backend matrix") {
    TempDir dir("cli_embed");
    save_cloud(dir / "s.xyzn", random_cloud(64, 2));
    REQUIRE(run({"embed", (dir / "s.xyzn").string(), "--out", (dir / "z.bin").string(), "--backend", "random:4"})
                .code == 0);
    const EmbeddingMatrix want = RandomBackend(4).embed(normalize_cloud(load_cloud(dir / "s.xyzn")));
    CHECK(read_file(dir / "z.bin") == encode_embedding_matrix(want));
  }

  TEST_CASE("gen-data, train and bench") {
    TempDir dir("cli_pipeline");
    const std::string data = (dir / "data").string();
    write_file_atomic(dir / "cfg.json", R"({"hidden_dim": 8, "embedding_dim": 6, "aggregate_k": 4})");
    const std::string cfg = (dir / "cfg.json").string();
    REQUIRE(run({"--seed", "2", "gen-data", "--out", data, "--count", "3", "--n-points", "256", "--k-min", "2",
                 "--k-max", "4"})
                .code == 0);
    CHECK(list_dataset(data).size() == 3);

    const std::string ckpt = (dir / "net.ckpt").string();
    const Run t = run({"--config", cfg, "train", "--data", data, "--out", ckpt, "--epochs", "2"});
    REQUIRE(t.code == 0);
    const PointNetwork net = load_checkpoint(ckpt);
    CHECK(net.shape().hidden == 8);
    const auto history = nlohmann::json::parse(read_file(ckpt + ".history.json"));
    CHECK(history.size() == 2);

    const std::string report = (dir / "r.json").string();
    const Run b = run({"--config", cfg, "bench", "--dataset", data, "--backend", ckpt, "--clicks", "3", "--cap", "4",
                       "--out", report});
    REQUIRE(b.code == 0);
    CHECK(b.out.find("mIoU") != std::string::npos);

    AppConfig app = load_config(cfg);
    app.sim.budget = 3;
    app.sim.cap = 4;
    app.sync();
    const BenchmarkReport direct = run_benchmark(data, make_backend(ckpt), app.benchmark());
    CHECK(read_report(report) == direct);
  }

  TEST_CASE("config round trip and validation") {
    AppConfig c;
    c.seed = 12;
    c.interact.alpha = 0.3;
    c.sim.cap = 12;
    c.forge.n_points = 2048;
    const AppConfig back = AppConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK_THROWS_AS(AppConfig::from_json({{"alpah", 0.3}}), std::invalid_argument);
    CHECK_THROWS(AppConfig::from_json(nlohmann::json::array()));

    AppConfig d;
    d.seed = 5;
    d.loss.eps_cte = 0.9;
    d.threads = 3;
    d.sync();
    CHECK(d.sim.seed == 5);
    CHECK(d.train.seed == 5);
    CHECK(d.finetune.eps_cte == 0.9);
    CHECK(d.sim.finetune.eps_cte == 0.9);
    CHECK(d.train.threads == 3);
    d.interact.post.gamma = 0;
    CHECK_THROWS(d.validate());

    TempDir dir("cfg");
    write_file_atomic(dir / "c.json", R"({"alpha": 0.2, "click_cap": 9})");
    const AppConfig loaded = load_config(dir / "c.json");
    CHECK(loaded.interact.alpha == 0.2);
    CHECK(loaded.sim.cap == 9);
    CHECK(loaded.benchmark().sim.cap == 9);
  }
}

#include "clickseg/cli.hpp"

#include <CLI11.hpp>

#include <spdlog/spdlog.h>

#include "clickseg/benchmark.hpp"
#include "clickseg/cloud_io.hpp"
#include "clickseg/service.hpp"
#include "clickseg/shape_forge.hpp"
#include "clickseg/trainer.hpp"

namespace clickseg {

nlohmann::json segment_with_clicks(const PointCloud& cloud, const std::vector<Click>& clicks,
                                   const EmbeddingBackend& backend, const AppConfig& config) {
  auto normalized = std::make_shared<const PointCloud>(normalize_cloud(cloud));
  auto z = std::make_shared<const EmbeddingMatrix>(backend.embed(*normalized));
  Session session(normalized, z, config.interact);
  for (const Click& c : clicks) {
    session.add_click(c.kind, c.index);
    if (c.kind == ClickKind::Negative && config.finetune.auto_on_negative) {
      finetune(session, &backend, config.finetune);
    }
  }
  return {{"points", cloud.size()},
          {"backend", backend.id()},
          {"clicks", click_script_json(session.click_history())},
          {"indices", session.mask().indices()}};
}

namespace {

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string log_level = "info";
};

AppConfig resolve_config(const Globals& g, const CLI::App& app) {
  AppConfig cfg = g.config_path.empty() ? AppConfig{} : load_config(g.config_path);
  if (app.count("--seed") > 0) cfg.seed = g.seed;
  if (app.count("--threads") > 0) cfg.threads = g.threads;
  return cfg;
}

void finish_config(AppConfig& cfg, const std::string& command) {
  cfg.sync();
  cfg.validate();
  spdlog::info("{}: resolved config {}", command, cfg.to_json().dump());
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Interactive point-cloud part segmentation toolkit", args.empty() ? "clickseg" : args.front()};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON config file (flat keys)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Global random seed");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic labeled dataset");
  std::string gen_out;
  std::size_t gen_count = 100;
  std::size_t gen_points = 0;
  int gen_kmin = 0;
  int gen_kmax = 0;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--count", gen_count, "Number of shapes")->check(CLI::PositiveNumber);
  gen->add_option("--n-points", gen_points, "Points per shape");
  gen->add_option("--k-min", gen_kmin, "Minimum primitives per shape");
  gen->add_option("--k-max", gen_kmax, "Maximum primitives per shape");

  // train
  auto* train = app.add_subcommand("train", "Train the embedding network");
  std::string train_data;
  std::string train_out;
  std::string train_ckpt_dir;
  int train_epochs = -1;
  std::size_t train_max_shapes = 0;
  train->add_option("--data", train_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", train_out, "Output checkpoint")->required();
  train->add_option("--epochs", train_epochs, "Epoch budget");
  train->add_option("--max-shapes", train_max_shapes, "Use at most this many shapes (0 = all)");
  train->add_option("--checkpoint-dir", train_ckpt_dir, "Directory for per-epoch checkpoints");

  // segment
  auto* seg = app.add_subcommand("segment", "Apply a click script to a shape");
  std::string seg_shape;
  std::string seg_clicks;
  std::string seg_out;
  std::string seg_backend = "descriptor";
  bool seg_no_or = false;
  bool seg_no_ss = false;
  seg->add_option("shape", seg_shape, "Point cloud (.xyzn or .ply)")->required()->check(CLI::ExistingFile);
  seg->add_option("--clicks", seg_clicks, "Click script JSON")->required()->check(CLI::ExistingFile);
  seg->add_option("--out", seg_out, "Output mask JSON")->required();
  seg->add_option("--backend", seg_backend, "descriptor, random[:seed], import:<file> or a checkpoint");
  seg->add_flag("--no-or", seg_no_or, "Disable outlier removal");
  seg->add_flag("--no-ss", seg_no_ss, "Disable segment smoothing");

  // embed
  auto* emb = app.add_subcommand("embed", "Write the embedding matrix of a shape");
  std::string emb_shape;
  std::string emb_out;
  std::string emb_backend = "descriptor";
  emb->add_option("shape", emb_shape, "Point cloud (.xyzn or .ply)")->required()->check(CLI::ExistingFile);
  emb->add_option("--out", emb_out, "Output matrix file")->required();
  emb->add_option("--backend", emb_backend, "descriptor, random[:seed] or a checkpoint");

  // bench
  auto* bench = app.add_subcommand("bench", "Run the simulated-annotator benchmark");
  std::string bench_data;
  std::string bench_backend = "descriptor";
  std::string bench_out;
  std::string bench_partial;
  int bench_clicks = 10;
  int bench_cap = 15;
  std::size_t bench_pool = 32;
  std::size_t bench_max_shapes = 0;
  bool bench_no_of = false;
  bool bench_no_or = false;
  bool bench_no_ss = false;
  bool bench_exhaustive = false;
  bench->add_option("--dataset", bench_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  bench->add_option("--backend", bench_backend, "descriptor, random[:seed], import:<file> or a checkpoint");
  bench->add_option("--clicks", bench_clicks, "Click budget for reported IoU");
  bench->add_option("--cap", bench_cap, "Maximum clicks per part");
  bench->add_option("--pool-size", bench_pool, "Candidate pool size");
  bench->add_option("--max-shapes", bench_max_shapes, "Use at most this many shapes (0 = all)");
  bench->add_option("--partial", bench_partial, "JSONL file for resumable partial results");
  bench->add_option("--out", bench_out, "Report JSON path")->required();
  bench->add_flag("--no-of", bench_no_of, "Disable online fine-tuning");
  bench->add_flag("--no-or", bench_no_or, "Disable outlier removal");
  bench->add_flag("--no-ss", bench_no_ss, "Disable segment smoothing");
  bench->add_flag("--exhaustive", bench_exhaustive, "Evaluate every candidate point");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the annotation HTTP service");
  int serve_port = 8080;
  std::string serve_host = "127.0.0.1";
  std::string serve_dir = "clickseg-data";
  std::string serve_backend = "descriptor";
  std::size_t serve_max_points = 200000;
  serve->add_option("--port", serve_port, "TCP port");
  serve->add_option("--host", serve_host, "Bind address");
  serve->add_option("--data-dir", serve_dir, "Storage directory");
  serve->add_option("--backend", serve_backend, "Default backend for new sessions");
  serve->add_option("--max-points", serve_max_points, "Largest accepted upload");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    if (!e.get_exit_code()) return 0;
    err << app.help() << '\n';
    return 2;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(g.log_level));
    AppConfig cfg = resolve_config(g, app);

    if (*gen) {
      if (gen->count("--n-points")) cfg.forge.n_points = gen_points;
      if (gen->count("--k-min")) cfg.forge.k_min = gen_kmin;
      if (gen->count("--k-max")) cfg.forge.k_max = gen_kmax;
      finish_config(cfg, "gen-data");
      const auto summary = generate_dataset(gen_count, cfg.forge, gen_out, cfg.seed, cfg.threads);
      out << nlohmann::json{{"generated", summary.generated},
                            {"skipped", summary.skipped},
                            {"manifest", summary.manifest.string()}}
                 .dump()
          << '\n';
    } else if (*train) {
      if (train->count("--epochs")) cfg.train.epochs = train_epochs;
      if (!train_ckpt_dir.empty()) cfg.train.checkpoint_dir = train_ckpt_dir;
      finish_config(cfg, "train");
      auto entries = list_dataset(train_data);
      if (train_max_shapes > 0 && entries.size() > train_max_shapes) entries.resize(train_max_shapes);
      std::vector<LabeledShape> shapes;
      std::vector<std::string> ids;
      for (const auto& e : entries) {
        shapes.push_back(load_dataset_shape(train_data, e).shape);
        ids.push_back(e.name);
      }
      NetworkShape ns = cfg.network;
      ns.input_dim = 6 + DescriptorConfig{}.dim();
      const auto data = prepare_training_set(shapes, ids, ns.aggregate_k, cfg.threads);
      PointNetwork net(ns);
      net.initialize(cfg.seed);
      const TrainResult result = train_network(std::move(net), data, cfg.train, [](const EpochStats& s) {
        spdlog::info("epoch {} mean loss {:.6f}", s.epoch, s.mean_loss);
      });
      save_checkpoint(train_out, result.network);
      nlohmann::json history = nlohmann::json::array();
      for (const auto& s : result.history) {
        history.push_back({{"epoch", s.epoch},
                           {"loss", s.mean_loss},
                           {"intra", s.mean_intra},
                           {"inter", s.mean_inter},
                           {"reg", s.mean_reg},
                           {"learning_rate", s.learning_rate}});
      }
      write_file_atomic(train_out + ".history.json", history.dump(2) + "\n");
      out << nlohmann::json{{"checkpoint", train_out}, {"epochs", result.history.size()}}.dump() << '\n';
    } else if (*seg) {
      if (seg_no_or) cfg.interact.post.outlier_removal = false;
      if (seg_no_ss) cfg.interact.post.smoothing = false;
      finish_config(cfg, "segment");
      const PointCloud cloud = load_cloud(seg_shape);
      const auto clicks = parse_click_script(nlohmann::json::parse(read_file(seg_clicks)));
      const auto backend = make_backend(seg_backend, cfg.seed);
      const auto doc = segment_with_clicks(cloud, clicks, *backend, cfg);
      write_file_atomic(seg_out, doc.dump() + "\n");
      out << nlohmann::json{{"mask_size", doc.at("indices").size()}, {"out", seg_out}}.dump() << '\n';
    } else if (*emb) {
      finish_config(cfg, "embed");
      const auto backend = make_backend(emb_backend, cfg.seed);
      const EmbeddingMatrix z = backend->embed(normalize_cloud(load_cloud(emb_shape)));
      save_embedding_matrix(emb_out, z);
      out << nlohmann::json{{"rows", z.rows()}, {"cols", z.cols()}, {"out", emb_out}}.dump() << '\n';
    } else if (*bench) {
      cfg.sim.budget = bench_clicks;
      cfg.sim.cap = bench_cap;
      cfg.sim.pool_size = bench_pool;
      cfg.sim.exhaustive = bench_exhaustive;
      if (bench_no_of) cfg.sim.online_finetune = false;
      if (bench_no_or) cfg.interact.post.outlier_removal = false;
      if (bench_no_ss) cfg.interact.post.smoothing = false;
      finish_config(cfg, "bench");
      BenchmarkConfig bc = cfg.benchmark();
      bc.max_shapes = bench_max_shapes;
      if (!bench_partial.empty()) bc.partial_path = bench_partial;
      const auto backend = make_backend(bench_backend, cfg.seed);
      const BenchmarkReport report = run_benchmark(bench_data, backend, bc);
      write_report(report, bench_out);
      out << format_report_table(report);
    } else if (*serve) {
      finish_config(cfg, "serve");
      ServiceConfig sc;
      sc.data_dir = serve_dir;
      sc.default_backend = serve_backend;
      sc.max_points = serve_max_points;
      sc.app = cfg;
      AnnotatorService service(sc);
      serve_http(service, serve_host, serve_port);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace clickseg

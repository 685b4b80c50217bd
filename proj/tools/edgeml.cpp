// edgeml: run the gateway, cloud and simulator, manage models, benchmark.
//
// Reports go to stdout as JSON. Failures print one JSON line
// {"error": kind, "message": ...} on stderr and exit 1 (operation), 2 (config
// or usage) or 3 (remote unreachable).

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "edgeml/app/bench.hpp"
#include "edgeml/app/config.hpp"
#include "edgeml/app/gateway_app.hpp"
#include "edgeml/boost/portable.hpp"
#include "edgeml/chillseq/closed_loop.hpp"
#include "edgeml/cloud/client.hpp"
#include "edgeml/cloud/server.hpp"
#include "edgeml/common/error.hpp"
#include "edgeml/rpc/client.hpp"
#include "edgeml/rpc/http.hpp"

using namespace edgeml;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOp = 1;
constexpr int kExitConfig = 2;
constexpr int kExitUnreachable = 3;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

void print(const json& j) { std::cout << j.dump() << std::endl; }

int report_error(std::string_view kind, std::string_view message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
  return code;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs `stop` once a signal arrives or `done` is set.
class SignalWatcher {
 public:
  explicit SignalWatcher(std::function<void()> stop)
      : thread_([this, stop = std::move(stop)] {
          while (!done_.load() && !g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
          if (g_stop.load()) stop();
        }) {}
  ~SignalWatcher() {
    done_.store(true);
    thread_.join();
  }

 private:
  std::atomic<bool> done_{false};
  std::thread thread_;
};

struct Overrides {
  std::optional<std::string> cloud_url, gateway_url, listen, data_dir, plant_config, strategy, model_name;
  std::optional<double> speedup, poll_interval_s, drift_threshold, age;
  std::optional<std::int64_t> period_s, stability_delay_s;
  bool auto_retrain = false;

  void apply(app::GatewayConfig& c) const {
    if (cloud_url) c.cloud_url = *cloud_url;
    if (gateway_url) c.gateway_url = *gateway_url;
    if (listen) c.listen = *listen;
    if (data_dir) c.data_dir = *data_dir;
    if (plant_config) c.plant_config = *plant_config;
    if (strategy) c.strategy = *strategy;
    if (model_name) c.model_name = *model_name;
    if (speedup) c.speedup = *speedup;
    if (poll_interval_s) c.poll_interval_s = *poll_interval_s;
    if (drift_threshold) c.drift_threshold = *drift_threshold;
    if (age) c.age_years = *age;
    if (period_s) c.period_s = *period_s;
    if (stability_delay_s) c.stability_delay_s = *stability_delay_s;
    if (auto_retrain) c.auto_retrain = true;
  }
};

json model_list_from_cloud(cloud::CloudClient& client, const std::optional<std::string>& name) {
  std::vector<std::string> names = name ? std::vector<std::string>{*name} : client.list_models();
  json models = json::array();
  for (const auto& n : names) {
    json versions = json::array();
    for (const auto& e : client.list_versions(n)) versions.push_back({{"version", e.version}, {"lineage", e.lineage}});
    models.push_back({{"name", n}, {"versions", versions}});
  }
  return {{"target", "cloud"}, {"models", models}};
}

json sim_summary(app::GatewayApp& gw) {
  auto& loop = gw.loop();
  auto& ctl = loop.controller();
  std::map<std::string, std::int64_t> sources;
  for (const auto& rec : ctl.last_cycles(ctl.cycle_count())) ++sources[rec.plan_source];
  json j = {{"sim_time_s", loop.plant().now_s()},
            {"cycles", ctl.cycle_count()},
            {"plan_sources", sources},
            {"true_energy_kwh", loop.plant().true_energy_kwh()},
            {"pending_export", loop.ml().pending_export()}};
  if (const auto& s = gw.final_sync()) {
    j["final_sync"] = {{"uploaded", s->uploaded}, {"duplicates", s->duplicates}, {"rejected", s->rejected},
                       {"deployed", s->deployed.size()}};
    if (s->error) j["final_sync"]["error"] = *s->error;
  }
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Edge ML gateway for chiller sequencing"};
  cli.require_subcommand(1);
  cli.fallthrough();
  cli.set_version_flag("--version", "edgeml 1.0.0");

  std::string config_path;
  Overrides ov;
  cli.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  cli.add_option("--cloud-url", ov.cloud_url, "Cloud registry and dataset server");
  cli.add_option("--gateway", ov.gateway_url, "Gateway RPC address; model commands then target the gateway");
  cli.add_option("--listen", ov.listen, "host:port to bind for run commands");
  cli.add_option("--data-dir", ov.data_dir, "Persistent state directory");
  cli.add_option("--plant", ov.plant_config, "Plant config JSON (default: built-in three-chiller plant)");
  cli.add_option("--strategy", ov.strategy, "ml | manufacturer | previous");
  cli.add_option("--model-name", ov.model_name, "COP model family");
  cli.add_option("--speedup", ov.speedup, "Simulated seconds per wall second (0 = unpaced)");
  cli.add_option("--poll-interval-s", ov.poll_interval_s, "Cloud poll interval");
  cli.add_option("--drift-threshold", ov.drift_threshold, "Relative MAE that trips the drift alarm");
  cli.add_option("--period-s", ov.period_s, "Sequencing period");
  cli.add_option("--stability-delay-s", ov.stability_delay_s, "Delay before the a-posteriori COP window");
  cli.add_flag("--auto-retrain", ov.auto_retrain, "Retrain locally when drift trips");

  // gateway run / sim run
  std::optional<double> run_days, commission_days;
  std::optional<std::string> model_file;
  auto add_run_options = [&](CLI::App* c) {
    c->add_option("--age", ov.age, "Age of the built-in plant in years");
    c->add_option("--days", run_days, "Simulated days to run (default: until interrupted)");
    c->add_option("--commission-days", commission_days, "Train a first model from a commissioning sweep");
    c->add_option("--model", model_file, "PortableModel document to activate at startup")->check(CLI::ExistingFile);
  };
  auto* gateway = cli.add_subcommand("gateway", "Edge gateway")->require_subcommand(1);
  auto* gateway_run = gateway->add_subcommand("run", "Run the simulated plant, closed loop and RPC server");
  add_run_options(gateway_run);
  auto* sim = cli.add_subcommand("sim", "Headless simulation")->require_subcommand(1);
  auto* sim_run = sim->add_subcommand("run", "Run the closed loop unpaced without the RPC server");
  add_run_options(sim_run);

  auto* cloud_cmd = cli.add_subcommand("cloud", "Cloud side")->require_subcommand(1);
  auto* cloud_run = cloud_cmd->add_subcommand("run", "Serve the model registry and dataset store");

  auto* model = cli.add_subcommand("model", "Model versions")->require_subcommand(1);
  std::string model_name_arg, deploy_path;
  std::optional<std::string> list_name;
  std::int64_t activate_version = 0;
  auto* model_deploy = model->add_subcommand("deploy", "Register (cloud) or stage (gateway) a model document");
  model_deploy->add_option("file", deploy_path, "PortableModel JSON")->required()->check(CLI::ExistingFile);
  auto* model_activate = model->add_subcommand("activate", "Activate a version on the gateway");
  model_activate->add_option("name", model_name_arg)->required();
  model_activate->add_option("version", activate_version)->required();
  auto* model_list = model->add_subcommand("list", "List model versions");
  model_list->add_option("name", list_name);
  auto* model_rollback = model->add_subcommand("rollback", "Re-activate the previous version on the gateway");
  model_rollback->add_option("name", model_name_arg)->required();

  std::optional<int> retrain_rounds;
  auto* retrain = cli.add_subcommand("retrain", "Retrain a model on the gateway from its recent labels");
  retrain->add_option("name", model_name_arg)->required();
  retrain->add_option("--rounds", retrain_rounds, "Extra boosting rounds");

  auto* bench = cli.add_subcommand("bench", "Benchmarks")->require_subcommand(1);
  app::IngestBenchOptions ingest_opts;
  auto* bench_ingest = bench->add_subcommand("ingest", "Store ingest throughput with one subscriber");
  bench_ingest->add_option("--seconds", ingest_opts.seconds)->capture_default_str();
  bench_ingest->add_option("--rate", ingest_opts.rate, "Offered points per second")->capture_default_str();
  bench_ingest->add_option("--series", ingest_opts.series)->capture_default_str();
  app::CycleBenchOptions cycle_opts;
  auto* bench_cycle = bench->add_subcommand("cycle", "run_cycle wall-time distribution");
  bench_cycle->add_option("--cycles", cycle_opts.cycles)->capture_default_str();
  bench_cycle->add_option("--age", ov.age, "Age of the built-in plant in years");
  double savings_days = 7.0, savings_noise = 0.0, savings_commission = 2.0;
  bool savings_log = false;
  auto* bench_savings = bench->add_subcommand("savings", "Energy of the ml strategy against the datasheet");
  bench_savings->add_option("--age", ov.age, "Age of the built-in plant in years");
  bench_savings->add_option("--days", savings_days)->capture_default_str();
  bench_savings->add_option("--noise", savings_noise, "Measurement noise sigma")->capture_default_str();
  bench_savings->add_option("--commission-days", savings_commission)->capture_default_str();
  bench_savings->add_flag("--log", savings_log, "Include the per-cycle log");

  auto* stats = cli.add_subcommand("stats", "Gateway statistics");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return cli.exit(e);
    return report_error("usage", e.what(), kExitConfig);
  }

  app::GatewayConfig cfg;
  try {
    if (!config_path.empty()) cfg = app::load_config(config_path);
    ov.apply(cfg);
    app::validate(cfg);
  } catch (const Error& e) {
    return report_error(to_string(e.kind()), e.what(), kExitConfig);
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  // Model commands target the cloud when one is configured and --gateway is
  // not given.
  const bool to_cloud = !cfg.cloud_url.empty() && !ov.gateway_url;

  try {
    if (*gateway_run || *sim_run) {
      const bool serve = static_cast<bool>(*gateway_run);
      app::GatewayRunOptions ro;
      ro.serve = serve;
      if (run_days) ro.duration_s = static_cast<std::int64_t>(*run_days * 86400.0);
      if (commission_days) ro.commissioning_days = *commission_days;
      if (model_file) ro.model = boost::parse(read_file(*model_file));
      if (!serve && !ov.speedup) cfg.speedup = 0.0;
      if (!serve && !ro.duration_s) ro.duration_s = 86400;
      app::GatewayApp gw(cfg, std::move(ro));
      const int port = gw.start();
      if (serve) print({{"event", "listening"}, {"port", port}, {"cloud_url", cfg.cloud_url}});
      {
        SignalWatcher watch([&gw] { gw.stop(); });
        gw.run();
      }
      print(sim_summary(gw));
    } else if (*cloud_run) {
      std::optional<cloud::ModelRegistry> registry;
      std::optional<cloud::DatasetStore> datasets;
      if (cfg.data_dir.empty()) {
        registry.emplace();
        datasets.emplace();
      } else {
        registry.emplace(std::filesystem::path(cfg.data_dir) / "models");
        datasets.emplace(std::filesystem::path(cfg.data_dir) / "datasets");
      }
      cloud::CloudServer server(*registry, *datasets);
      const rpc::Endpoint ep = rpc::parse_endpoint(cfg.listen);
      const int port = server.start(ep.host, ep.port);
      print({{"event", "listening"}, {"port", port}, {"data_dir", cfg.data_dir}});
      while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
    } else if (*model_deploy) {
      const std::string doc = read_file(deploy_path);
      if (to_cloud) {
        const boost::PortableModel pm = boost::parse(doc);
        cloud::CloudClient client(cfg.cloud_url);
        const std::int64_t v = client.put_model(pm.metadata.name, doc);
        print({{"target", "cloud"}, {"name", pm.metadata.name}, {"version", v}});
      } else {
        json j = rpc::JsonClient(cfg.gateway_url).post("/models", doc);
        j["target"] = "gateway";
        print(j);
      }
    } else if (*model_activate) {
      print(rpc::JsonClient(cfg.gateway_url)
                .post("/models/" + model_name_arg + "/" + std::to_string(activate_version) + "/activate", "{}"));
    } else if (*model_rollback) {
      print(rpc::JsonClient(cfg.gateway_url).post("/models/" + model_name_arg + "/rollback", "{}"));
    } else if (*model_list) {
      if (to_cloud) {
        cloud::CloudClient client(cfg.cloud_url);
        print(model_list_from_cloud(client, list_name));
      } else {
        json models = json::array();
        for (const auto& m : rpc::JsonClient(cfg.gateway_url).get("/models"))
          if (!list_name || m.at("name") == *list_name) models.push_back(m);
        print({{"target", "gateway"}, {"models", models}});
      }
    } else if (*retrain) {
      json body = json::object();
      if (retrain_rounds) body["rounds"] = *retrain_rounds;
      print(rpc::JsonClient(cfg.gateway_url, 600.0).post("/models/" + model_name_arg + "/retrain", body.dump()));
    } else if (*bench_ingest) {
      print(app::ingest_benchmark(ingest_opts));
    } else if (*bench_cycle) {
      cycle_opts.age_years = cfg.age_years;
      print(app::cycle_benchmark(cycle_opts));
    } else if (*bench_savings) {
      plantsim::PlantConfig plant = cfg.plant_config.empty() ? chillseq::benchmark_plant(cfg.age_years, savings_noise)
                                                              : app::plant_for(cfg);
      chillseq::BenchmarkOptions bo;
      bo.loop = app::loop_options_for(cfg, plant);
      bo.eval_days = savings_days;
      bo.commissioning_days = savings_commission;
      bo.keep_cycle_log = savings_log;
      const auto trace = chillseq::plant_trace(plant, savings_days + 1.0, cfg.period_s);
      const auto report = chillseq::benchmark_strategies(
          plant, trace, {chillseq::Strategy::Ml, chillseq::Strategy::Manufacturer}, bo);
      json j = report;
      j["age_years"] = plant.age_years;
      j["eval_days"] = savings_days;
      print(j);
    } else if (*stats) {
      print(rpc::JsonClient(cfg.gateway_url).get("/stats"));
    }
  } catch (const rpc::Unreachable& e) {
    return report_error("unreachable", e.what(), kExitUnreachable);
  } catch (const Error& e) {
    return report_error(to_string(e.kind()), e.what(), kExitOp);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), kExitOp);
  }
  return kExitOk;
}

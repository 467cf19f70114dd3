#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "subdyn/bench.hpp"
#include "subdyn/rollout.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace subdyn;

namespace {

struct CommonOpts {
  std::string scenario;
  std::string config_path;
  int frames = -1;
  int epochs = -1;
  int batch = -1;
  double lr = -1.0;
  int latent_dim = -1;
  uint64_t seed = 1;
  bool no_noise = false;
  bool no_balancing = false;
  bool supervised = false;
  std::string out;
  std::string data;
  std::string ae_path;
  std::string int_path;
  int steps = 300;
  int repeats = 100;
  int seq = 0;
  std::string pred;
};

/// CLI flags > config file > built-in scenario defaults.
ScenarioSpec resolve_scenario(const CommonOpts& opt) {
  ScenarioSpec spec;
  if (!opt.config_path.empty()) {
    std::ifstream is(opt.config_path);
    if (!is) throw Error(ErrorCode::IoError, "cannot read config: " + opt.config_path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    spec = scenario_from_json(text);
  } else if (!opt.scenario.empty()) {
    spec = build_scenario(opt.scenario);
  } else {
    throw Error(ErrorCode::InvalidArgument, "need --scenario or --config");
  }
  if (opt.frames > 0) spec.frames = opt.frames;
  if (opt.latent_dim > 0) spec.latent_dim = opt.latent_dim;
  if (opt.lr > 0) spec.lr = opt.lr;
  return spec;
}

json manifest_base(const std::string& command, const CommonOpts& opt) {
  json m;
  m["tool"] = "subdyn";
  m["version"] = version_string();
  m["formats"] = {{"dataset", "SDSQ0001"}, {"checkpoint", "SDWT0001"}};
  m["command"] = command;
  m["seed"] = opt.seed;
  json cfg;
  if (!opt.scenario.empty()) cfg["scenario"] = opt.scenario;
  if (!opt.config_path.empty()) cfg["config"] = opt.config_path;
  if (opt.frames > 0) cfg["frames"] = opt.frames;
  if (opt.epochs > 0) cfg["epochs"] = opt.epochs;
  if (opt.batch > 0) cfg["batch"] = opt.batch;
  if (opt.lr > 0) cfg["lr"] = opt.lr;
  if (opt.latent_dim > 0) cfg["latent_dim"] = opt.latent_dim;
  cfg["no_noise"] = opt.no_noise;
  cfg["no_balancing"] = opt.no_balancing;
  cfg["supervised"] = opt.supervised;
  if (!opt.data.empty()) cfg["data"] = opt.data;
  if (!opt.ae_path.empty()) cfg["ae"] = opt.ae_path;
  if (!opt.int_path.empty()) cfg["int"] = opt.int_path;
  m["config"] = cfg;
  return m;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + path);
  os << text;
}

void write_manifest(const std::string& dir_or_file, const json& m, bool is_dir) {
  const std::string path =
      is_dir ? dir_or_file + "/manifest.json" : dir_or_file + ".manifest.json";
  write_text(path, m.dump(2) + "\n");
}

std::vector<StateSequence> load_dataset(const std::string& dir, Topology* topo_out = nullptr) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".sdsq") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorCode::IoError, "no .sdsq files in " + dir);
  std::vector<StateSequence> out;
  for (const auto& f : files) {
    LoadedSequence loaded = sequence_io_read(f);
    if (topo_out) *topo_out = loaded.topology;
    out.push_back(std::move(loaded.sequence));
  }
  return out;
}

int cmd_gen(const CommonOpts& opt) {
  ScenarioSpec spec = resolve_scenario(opt);
  ScenarioAssets assets = build_assets(spec);
  fs::create_directories(opt.out);
  auto dataset = generate_dataset(spec, assets, 0);
  char name[32];
  for (size_t s = 0; s < dataset.size(); ++s) {
    std::snprintf(name, sizeof(name), "/seq_%03zu.sdsq", s);
    sequence_io_write(dataset[s], assets.object.topology, opt.out + name);
  }
  write_text(opt.out + "/scenario.json", scenario_to_json(spec) + "\n");
  json m = manifest_base("gen", opt);
  m["outputs"] = {{"sequences", dataset.size()}, {"frames", spec.frames}};
  write_manifest(opt.out, m, true);
  std::cout << "wrote " << dataset.size() << " sequences to " << opt.out << "\n";
  return 0;
}

int cmd_train_ae(const CommonOpts& opt) {
  ScenarioSpec spec = resolve_scenario(opt);
  ScenarioAssets assets = build_assets(spec);
  auto dataset = load_dataset(opt.data);

  AeTrainConfig cfg;
  cfg.epochs = opt.epochs > 0 ? opt.epochs : spec.ae_epochs;
  cfg.batch = opt.batch > 0 ? opt.batch : spec.ae_batch;
  cfg.lr = opt.lr > 0 ? opt.lr : spec.lr;
  cfg.seed = opt.seed;
  auto [ae, report] = train_autoencoder(spec, assets, dataset, cfg);

  save_autoencoder(opt.out, ae);
  write_text(opt.out + ".report.jsonl", report.to_json_lines());
  json m = manifest_base("train-ae", opt);
  m["outputs"] = {{"checkpoint", opt.out},
                  {"final_loss", report.total.empty() ? 0.0 : report.total.back()},
                  {"wall_seconds", report.wall_seconds}};
  write_manifest(opt.out, m, false);
  std::cout << "autoencoder saved to " << opt.out << " (final loss "
            << (report.total.empty() ? 0.0 : report.total.back()) << ")\n";
  return 0;
}

int cmd_train_int(const CommonOpts& opt) {
  ScenarioSpec spec = resolve_scenario(opt);
  ScenarioAssets assets = build_assets(spec);
  auto dataset = load_dataset(opt.data);
  AutoencoderWeights ae = load_autoencoder(opt.ae_path);

  IntTrainConfig cfg;
  cfg.epochs = opt.epochs > 0 ? opt.epochs : spec.int_epochs;
  cfg.batch = opt.batch > 0 ? opt.batch : spec.int_batch;
  cfg.lr = opt.lr > 0 ? opt.lr : spec.lr;
  cfg.seed = opt.seed;
  cfg.noise = !opt.no_noise;
  cfg.balancing = !opt.no_balancing;
  cfg.supervised = opt.supervised;
  auto [integ, report] = train_integrator(spec, assets, dataset, ae, cfg);

  save_integrator(opt.out, integ);
  write_text(opt.out + ".report.jsonl", report.to_json_lines());
  json m = manifest_base("train-int", opt);
  m["outputs"] = {{"checkpoint", opt.out},
                  {"final_loss", report.total.empty() ? 0.0 : report.total.back()},
                  {"wall_seconds", report.wall_seconds}};
  write_manifest(opt.out, m, false);
  std::cout << "integrator saved to " << opt.out << "\n";
  return 0;
}

int cmd_rollout(const CommonOpts& opt) {
  ScenarioSpec spec = resolve_scenario(opt);
  ScenarioAssets assets = build_assets(spec);
  AutoencoderWeights ae = load_autoencoder(opt.ae_path);
  IntegratorWeights integ = load_integrator(opt.int_path);
  if (opt.seq < 0 || opt.seq >= static_cast<int>(spec.sequences.size()))
    throw Error(ErrorCode::InvalidArgument, "--seq out of range");

  const int total = opt.steps + 2;
  BcTrajectory script = bc_trajectory(spec, assets, spec.sequences[opt.seq], total);

  // seed latents from the first two ground-truth frames (rest + scripted bc)
  VecX x0 = assets.object.rest.positions, x1 = x0;
  for (size_t k = 0; k < script.vertices.size(); ++k) {
    x0.segment<3>(3 * script.vertices[k]) = script.targets[0].segment<3>(3 * k);
    x1.segment<3>(3 * script.vertices[k]) = script.targets[1].segment<3>(3 * k);
  }
  LatentTrajectory traj =
      rollout(integ, ae_encode(ae, x0), ae_encode(ae, x1), script, opt.steps, spec.dt);
  std::vector<VecX> frames = decode_trajectory(ae, traj, script);

  StateSequence seq;
  seq.dt = spec.dt;
  seq.scenario = spec.name + "/rollout";
  for (size_t t = 0; t < frames.size(); ++t) {
    Frame f;
    f.t = static_cast<int>(t);
    f.x = frames[t];
    f.p = traj.p[t];
    seq.frames.push_back(std::move(f));
  }
  sequence_io_write(seq, assets.object.topology, opt.out);
  json m = manifest_base("rollout", opt);
  m["outputs"] = {{"sequence", opt.out}, {"steps", opt.steps}, {"seq", opt.seq}};
  write_manifest(opt.out, m, false);
  std::cout << "rollout of " << opt.steps << " steps written to " << opt.out << "\n";
  return 0;
}

int cmd_bench(const CommonOpts& opt) {
  ScenarioSpec spec = resolve_scenario(opt);
  ScenarioAssets assets = build_assets(spec);
  AutoencoderWeights ae = load_autoencoder(opt.ae_path);
  IntegratorWeights integ = load_integrator(opt.int_path);
  BenchResult result = bench(spec, assets, ae, integ, opt.repeats);
  write_text(opt.out, result.to_json() + "\n");
  json m = manifest_base("bench", opt);
  m["outputs"] = {{"bench", opt.out}};
  write_manifest(opt.out, m, false);
  std::cout << result.to_json() << "\n";
  return 0;
}

int cmd_eval(const CommonOpts& opt) {
  ScenarioSpec spec = resolve_scenario(opt);
  ScenarioAssets assets = build_assets(spec);
  LoadedSequence pred = sequence_io_read(opt.pred);
  auto gt = load_dataset(opt.data);
  if (opt.seq < 0 || opt.seq >= static_cast<int>(gt.size()))
    throw Error(ErrorCode::InvalidArgument, "--seq out of range");
  const StateSequence& truth = gt[opt.seq];

  const int frames = std::min(pred.sequence.frame_count(), truth.frame_count());
  std::vector<VecX> pred_x, gt_x;
  for (int t = 0; t < frames; ++t) {
    pred_x.push_back(pred.sequence.frames[t].x);
    gt_x.push_back(truth.frames[t].x);
  }
  BcTrajectory script =
      bc_trajectory(spec, assets, spec.sequences[opt.seq], pred.sequence.frame_count());
  std::vector<VecX> pred_all;
  for (const Frame& f : pred.sequence.frames) pred_all.push_back(f.x);

  VecX rmse = metric_vertex_rmse(pred_x, gt_x);
  VecX residual = metric_bc_residual(pred_all, script);
  VecX ke_pred = metric_kinetic_energy(pred_all, assets.object.mass, spec.dt);
  std::vector<VecX> gt_all;
  for (const Frame& f : truth.frames) gt_all.push_back(f.x);
  VecX ke_gt = metric_kinetic_energy(gt_all, assets.object.mass, spec.dt);

  json out;
  out["frames_compared"] = frames;
  out["vertex_rmse"] = std::vector<double>(rmse.data(), rmse.data() + rmse.size());
  out["bc_residual"] = std::vector<double>(residual.data(), residual.data() + residual.size());
  out["kinetic_energy_pred"] =
      std::vector<double>(ke_pred.data(), ke_pred.data() + ke_pred.size());
  out["kinetic_energy_gt"] = std::vector<double>(ke_gt.data(), ke_gt.data() + ke_gt.size());
  out["mean_vertex_rmse"] = rmse.mean();
  out["max_bc_residual"] = residual.maxCoeff();
  out["mean_ke_pred"] = ke_pred.mean();
  out["mean_ke_gt"] = ke_gt.mean();
  write_text(opt.out, out.dump(2) + "\n");

  // per-frame CSV next to the JSON
  std::ostringstream csv;
  csv << "frame,vertex_rmse,bc_residual,ke_pred\n";
  for (int t = 0; t < frames; ++t)
    csv << t << "," << rmse[t] << "," << residual[t] << "," << ke_pred[t] << "\n";
  write_text(opt.out + ".csv", csv.str());

  json m = manifest_base("eval", opt);
  m["outputs"] = {{"metrics", opt.out}};
  write_manifest(opt.out, m, false);
  std::cout << "metrics written to " << opt.out << "\n";
  return 0;
}

int cmd_export(const CommonOpts& opt) {
  LoadedSequence loaded = sequence_io_read(opt.pred);
  std::vector<VecX> frames;
  for (const Frame& f : loaded.sequence.frames) frames.push_back(f.x);
  int count = export_obj_sequence(frames, loaded.topology, opt.out);
  json m = manifest_base("export", opt);
  m["outputs"] = {{"dir", opt.out}, {"files", count}};
  write_manifest(opt.out, m, true);
  std::cout << "wrote " << count << " OBJ files to " << opt.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"subdyn: latent-space subspace dynamics toolkit"};
  app.require_subcommand(1);
  CommonOpts opt;

  auto add_scenario_opts = [&](CLI::App* cmd) {
    cmd->add_option("--scenario", opt.scenario, "built-in scenario name");
    cmd->add_option("--config", opt.config_path, "scenario config JSON (overrides --scenario)");
    cmd->add_option("--frames", opt.frames, "frames per sequence override");
    cmd->add_option("--latent-dim", opt.latent_dim, "latent dimension override");
  };
  auto add_train_opts = [&](CLI::App* cmd) {
    cmd->add_option("--epochs", opt.epochs, "training epochs override");
    cmd->add_option("--batch", opt.batch, "batch size override");
    cmd->add_option("--lr", opt.lr, "learning rate override");
    cmd->add_option("--seed", opt.seed, "rng seed");
  };

  CLI::App* gen = app.add_subcommand("gen", "simulate a scenario's dataset");
  add_scenario_opts(gen);
  gen->add_option("--seed", opt.seed, "rng seed (recorded)");
  gen->add_option("--out", opt.out, "output directory")->required();

  CLI::App* tae = app.add_subcommand("train-ae", "train the autoencoder");
  add_scenario_opts(tae);
  add_train_opts(tae);
  tae->add_option("--data", opt.data, "dataset directory")->required();
  tae->add_option("--out", opt.out, "checkpoint path")->required();

  CLI::App* tin = app.add_subcommand("train-int", "train the latent integrator");
  add_scenario_opts(tin);
  add_train_opts(tin);
  tin->add_option("--data", opt.data, "dataset directory")->required();
  tin->add_option("--ae", opt.ae_path, "autoencoder checkpoint")->required();
  tin->add_option("--out", opt.out, "checkpoint path")->required();
  tin->add_flag("--no-noise", opt.no_noise, "disable training noise");
  tin->add_flag("--no-balancing", opt.no_balancing, "disable data balancing");
  tin->add_flag("--supervised", opt.supervised, "L2 latent loss instead of the physics loss");

  CLI::App* rol = app.add_subcommand("rollout", "autoregressive latent rollout");
  add_scenario_opts(rol);
  rol->add_option("--ae", opt.ae_path, "autoencoder checkpoint")->required();
  rol->add_option("--int", opt.int_path, "integrator checkpoint")->required();
  rol->add_option("--steps", opt.steps, "rollout steps");
  rol->add_option("--seq", opt.seq, "scenario sequence index for the bc script");
  rol->add_option("--seed", opt.seed, "rng seed (recorded)");
  rol->add_option("--out", opt.out, "output .sdsq path")->required();

  CLI::App* ben = app.add_subcommand("bench", "timing comparison vs the full-space solver");
  add_scenario_opts(ben);
  ben->add_option("--ae", opt.ae_path, "autoencoder checkpoint")->required();
  ben->add_option("--int", opt.int_path, "integrator checkpoint")->required();
  ben->add_option("--repeats", opt.repeats, "timing repetitions");
  ben->add_option("--seed", opt.seed, "rng seed (recorded)");
  ben->add_option("--out", opt.out, "bench JSON path")->required();

  CLI::App* evl = app.add_subcommand("eval", "metrics of a rollout vs ground truth");
  add_scenario_opts(evl);
  evl->add_option("--pred", opt.pred, "predicted .sdsq sequence")->required();
  evl->add_option("--data", opt.data, "ground-truth dataset directory")->required();
  evl->add_option("--seq", opt.seq, "ground-truth sequence index");
  evl->add_option("--seed", opt.seed, "rng seed (recorded)");
  evl->add_option("--out", opt.out, "metrics JSON path")->required();

  CLI::App* exp = app.add_subcommand("export", "export a sequence as OBJ files");
  exp->add_option("--in", opt.pred, "input .sdsq path")->required();
  exp->add_option("--seed", opt.seed, "rng seed (recorded)");
  exp->add_option("--out", opt.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints synopsis to stderr for errors
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(opt);
    if (tae->parsed()) return cmd_train_ae(opt);
    if (tin->parsed()) return cmd_train_int(opt);
    if (rol->parsed()) return cmd_rollout(opt);
    if (ben->parsed()) return cmd_bench(opt);
    if (evl->parsed()) return cmd_eval(opt);
    if (exp->parsed()) return cmd_export(opt);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

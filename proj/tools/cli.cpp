#include "cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "ndnet/gradcheck.hpp"
#include "ndnet/groundtruth.hpp"
#include "ndnet/metrics.hpp"
#include "ndnet/simulate.hpp"
#include "ndnet/training.hpp"

namespace ndnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kTraceFile = "traces.ndnet.jsonl";
constexpr const char* kCheckpointFile = "checkpoint.json";
constexpr const char* kManifestFile = "manifest.json";

struct Common {
  std::string out;
  bool force = false;
  int jobs = 1;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* sub, Common& c, bool with_jobs = true) {
  sub->add_option("--out", c.out, "Output directory")->required();
  sub->add_flag("--force", c.force, "Overwrite an existing output directory");
  sub->add_option("--seed", c.seed, "Root random seed")->capture_default_str();
  if (with_jobs) sub->add_option("--jobs", c.jobs, "Worker threads; output does not depend on it")->capture_default_str()->check(CLI::PositiveNumber);
}

fs::path prepare_out(const Common& c) {
  const fs::path dir(c.out);
  if (fs::exists(dir / kManifestFile) && !c.force) {
    throw std::invalid_argument("output directory " + dir.string() + " already holds a run; pass --force");
  }
  fs::create_directories(dir);
  return dir;
}

fs::path dataset_path(const std::string& p) {
  const fs::path path(p);
  return fs::is_directory(path) ? path / kTraceFile : path;
}

fs::path checkpoint_path(const std::string& p) {
  const fs::path path(p);
  return fs::is_directory(path) ? path / kCheckpointFile : path;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

void write_manifest(const fs::path& dir, const CLI::App* sub, const std::vector<std::string>& args,
                    const Common& c, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, double wall) {
  json m = {{"command", sub->get_name()},
            {"args", args},
            {"config", sub->config_to_str(true, false)},
            {"seed", c.seed},
            {"inputs", inputs},
            {"outputs", outputs},
            {"tool_version", kToolVersion},
            {"wall_seconds", wall}};
  write_text(dir / kManifestFile, m.dump(2) + "\n");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Network path simulation with recurrent buffering units", "ndnet"};
  app.set_config("--config", "", "TOML config file; command-line flags win on conflict");
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  // gen
  Common gen_c;
  GenerateOptions gen;
  std::string gen_protocol = "cubic", gen_split = "train";
  double bw_min = 0.0, bw_max = 0.0;
  bool full_scale = false;
  auto* g = app.add_subcommand("gen", "Generate a ground-truth dataset");
  g->add_option("--scenario", gen.scenarios, "Scenario rows (1, 2, 3)")->capture_default_str()->check(CLI::Range(1, 3));
  g->add_option("--configs", gen.configs_per_scenario, "Link configurations per scenario")->capture_default_str();
  g->add_option("--patterns", gen.cross_patterns, "Cross-traffic patterns per configuration")->capture_default_str();
  g->add_option("--protocol", gen_protocol, "Sender: reno, cubic, vegas, ledbat, constant")->capture_default_str();
  g->add_option("--duration", gen.duration, "Call length in seconds")->capture_default_str();
  g->add_option("--scale", gen.scenario.bandwidth_scale, "Bandwidth multiplier")->capture_default_str();
  g->add_option("--bw-min", bw_min, "Bandwidth override lower bound, Mbps (with --bw-max)");
  g->add_option("--bw-max", bw_max, "Bandwidth override upper bound, Mbps");
  g->add_option("--buffer-scale", gen.scenario.buffer_scale, "Buffer size multiplier")->capture_default_str();
  g->add_option("--split", gen_split, "Split tag: train or test")->capture_default_str();
  g->add_flag("--full-scale", full_scale, "14 configurations x 70 patterns per scenario");
  add_common(g, gen_c);

  // train
  Common tr_c;
  TrainConfig tc;
  BaselineConfig bc;
  std::string tr_data, tr_model = "rbu";
  bool no_prior = false, no_heur = false, run_gradcheck = false;
  auto* t = app.add_subcommand("train", "Train the RBU model or an LSTM baseline");
  t->add_option("--data", tr_data, "Training dataset (file or gen output directory)")->required();
  t->add_option("--model", tr_model, "rbu, lstm-win, lstm-pkt or lstm-pkt-fifo")->capture_default_str();
  t->add_option("--epochs", tc.epochs, "Training epochs")->capture_default_str();
  t->add_option("--batch", tc.batch_size, "Traces per mini-batch")->capture_default_str();
  t->add_flag("--multipath", tc.model.multipath, "Two-path RBU with a routing head");
  t->add_flag("--q-bins", tc.model.q_bins, "100-bin routing head instead of a Bernoulli head");
  t->add_option("--lr-window", tc.lr.window, "Window-level learning rate")->capture_default_str();
  t->add_option("--lr-packet", tc.lr.packet, "Packet-level learning rate")->capture_default_str();
  t->add_option("--lambda", tc.lambda, "Window-loss weight")->capture_default_str();
  t->add_option("--gamma", tc.model.gamma, "Cross-traffic mixing weight")->capture_default_str();
  t->add_option("--kappa", tc.model.kappa, "Drop sigmoid sharpness (1/s)")->capture_default_str();
  t->add_option("--rho", tc.model.rho, "Share of y_min attributed to propagation")->capture_default_str();
  t->add_option("--hidden", tc.model.hidden, "Window LSTM hidden units")->capture_default_str();
  t->add_option("--layers", tc.model.layers, "Window LSTM layers")->capture_default_str();
  t->add_option("--weight-decay", tc.weight_decay, "L2 weight decay")->capture_default_str();
  t->add_flag("--no-prior-init", no_prior, "Do not start output biases at the data marginals");
  t->add_flag("--no-heuristic-init", no_heur, "Do not fit the parameter heads to the heuristic estimates");
  t->add_flag("--gradcheck", run_gradcheck, "Run the finite-difference suite first; exit 3 on failure");
  add_common(t, tr_c);

  // simulate
  Common sim_c;
  SimRun run;
  std::string sim_model, sim_protocol = "vegas", sim_drop = "bernoulli";
  int sim_runs = 1;
  std::optional<double> sim_q, sim_tau2;
  auto* s = app.add_subcommand("simulate", "Closed-loop runs of a sender against a trained model");
  s->add_option("--model", sim_model, "Checkpoint (file or train output directory)")->required();
  s->add_option("--protocol", sim_protocol, "Sender: reno, cubic, vegas, ledbat, constant")->capture_default_str();
  s->add_option("--duration", run.duration, "Call length in seconds")->capture_default_str();
  s->add_option("--runs", sim_runs, "Number of independent runs")->capture_default_str();
  s->add_option("--drop-mode", sim_drop, "RBU drop rule: bernoulli or hard")->capture_default_str();
  s->add_option("--q", sim_q, "Fixed routing probability (two-path RBU)");
  s->add_option("--tau2-scale", sim_tau2, "Second queue size relative to the first (two-path RBU)");
  add_common(s, sim_c);

  // eval
  Common ev_c;
  EvalOptions eo;
  std::string ev_real, ev_synth;
  auto* e = app.add_subcommand("eval", "Metric report between two datasets");
  e->add_option("--real", ev_real, "Ground-truth dataset")->required();
  e->add_option("--synth", ev_synth, "Generated dataset")->required();
  e->add_option("--zeta", eo.mmd.zeta, "RBF kernel width")->capture_default_str();
  e->add_flag("--disc", eo.discriminator, "Also train the discriminative-score classifier");
  add_common(e, ev_c);

  // gradcheck
  std::uint64_t gc_seed = 0;
  int gc_runs = 10;
  double gc_tol = 1e-4;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference verification of all gradients");
  gc->add_option("--seed", gc_seed, "Random seed")->capture_default_str();
  gc->add_option("--runs", gc_runs, "Random instances per primitive")->capture_default_str();
  gc->add_option("--tol", gc_tol, "Relative error gate")->capture_default_str();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex, out, err);
    return kExitValidation;
  }

  auto gradcheck_gate = [&](std::uint64_t seed, int runs, double tol) {
    bool ok = true;
    auto report = [&](const GradCheckResult& r) {
      out << std::left << std::setw(22) << r.label << " n=" << r.n_checked << " max_rel_err=" << r.max_rel_err;
      if (r.max_rel_err > tol) out << "  FAIL (" << r.worst.param << "[" << r.worst.index << "])";
      out << "\n";
      ok = ok && r.max_rel_err <= tol;
    };
    for (const auto& r : autodiff_suite(seed, runs)) report(r);
    report(objective_gradcheck(seed, 20, false));
    report(objective_gradcheck(seed, 20, true));
    return ok;
  };

  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  try {
    if (g->parsed()) {
      if (full_scale) {
        gen.configs_per_scenario = 14;
        gen.cross_patterns = 70;
      }
      gen.sender = sender_kind_from_string(gen_protocol);
      gen.seed = gen_c.seed;
      gen.jobs = gen_c.jobs;
      if (bw_max > 0.0) gen.scenario.bandwidth_override = {bw_min * 1e6, bw_max * 1e6};
      const fs::path dir = prepare_out(gen_c);
      const Dataset d = generate_dataset(gen, split_from_string(gen_split));
      write_dataset(d, dir / kTraceFile);
      out << "wrote " << d.traces.size() << " traces to " << (dir / kTraceFile).string() << "\n";
      write_manifest(dir, g, args, gen_c, {}, {kTraceFile, ranges_sidecar_path(kTraceFile).string()}, wall());
      return kExitOk;
    }
    if (t->parsed()) {
      if (run_gradcheck && !gradcheck_gate(tr_c.seed, 3, 1e-4)) {
        err << "gradient check failed\n";
        return kExitGate;
      }
      tc.seed = tr_c.seed;
      tc.jobs = tr_c.jobs;
      tc.prior_bias_init = !no_prior;
      tc.heuristic_head_init = !no_heur;
      const fs::path dir = prepare_out(tr_c);
      const fs::path data_path = dataset_path(tr_data);
      const Dataset d = read_dataset(data_path);
      std::ostringstream csv;
      csv.precision(17);
      csv << "epoch,j_pkt,j_win,wall_seconds\n";
      auto log = [&](const EpochStats& st) {
        csv << st.epoch << ',' << st.j_pkt << ',' << st.j_win << ',' << st.wall_seconds << '\n';
        out << "epoch " << st.epoch << " j_pkt=" << st.j_pkt << " j_win=" << st.j_win << "\n";
      };
      Checkpoint ck;
      if (tr_model == "rbu") {
        ck = make_rbu_checkpoint(train_rbu(d, tc, log).model, d);
      } else {
        const BaselineKind kind = baseline_kind_from_string(tr_model);
        bc.hidden = tc.model.hidden;
        bc.layers = tc.model.layers;
        bc.weight_decay = tc.weight_decay;
        ck = make_baseline_checkpoint(train_baseline(d, tc, bc, log).model, kind, d);
      }
      save_checkpoint(ck, dir / kCheckpointFile);
      write_text(dir / "loss.csv", csv.str());
      write_manifest(dir, t, args, tr_c, {data_path.string()}, {kCheckpointFile, "loss.csv"}, wall());
      return kExitOk;
    }
    if (s->parsed()) {
      run.sender = sender_kind_from_string(sim_protocol);
      run.rbu.drop_mode = drop_mode_from_string(sim_drop);
      run.rbu.q_override = sim_q;
      run.rbu.tau2_scale = sim_tau2;
      const fs::path dir = prepare_out(sim_c);
      const fs::path ck_path = checkpoint_path(sim_model);
      const LoadedModel m = load_model(load_checkpoint(ck_path));
      const Dataset d = simulate_batch(m, run, sim_runs, sim_c.seed, sim_c.jobs);
      write_dataset(d, dir / kTraceFile);
      out << "wrote " << d.traces.size() << " simulated traces\n";
      write_manifest(dir, s, args, sim_c, {ck_path.string()}, {kTraceFile, ranges_sidecar_path(kTraceFile).string()}, wall());
      return kExitOk;
    }
    if (e->parsed()) {
      eo.seed = ev_c.seed;
      eo.mmd.jobs = ev_c.jobs;
      const fs::path dir = prepare_out(ev_c);
      const fs::path rp = dataset_path(ev_real), sp = dataset_path(ev_synth);
      const MetricsReport rep = evaluate(read_dataset(rp), read_dataset(sp), eo);
      write_text(dir / "report.json", report_to_json(rep).dump(2) + "\n");
      write_text(dir / "report.csv", report_to_csv(rep));
      out << "wd2_tput_mean_delay=" << rep.wd2_tput_mean_delay << " wd2_tput_p95_delay=" << rep.wd2_tput_p95_delay << "\n";
      write_manifest(dir, e, args, ev_c, {rp.string(), sp.string()}, {"report.json", "report.csv"}, wall());
      return kExitOk;
    }
    if (gc->parsed()) return gradcheck_gate(gc_seed, gc_runs, gc_tol) ? kExitOk : kExitGate;
  } catch (const std::invalid_argument& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitError;
  }
  return kExitOk;
}

}  // namespace ndnet

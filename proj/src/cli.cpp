#include "unibci/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "unibci/bench.hpp"
#include "unibci/downstream.hpp"
#include "unibci/generators.hpp"
#include "unibci/pipeline_check.hpp"

namespace unibci {
namespace {

namespace fs = std::filesystem;

// Numeric-contract breaks (gradcheck above tol, degenerate statistics) exit 2;
// every other failure is a usage/validation problem and exits 1.
int exit_code_for(ErrorKind kind) {
  return (kind == ErrorKind::contract || kind == ErrorKind::degenerate) ? 2 : 1;
}

std::optional<std::uint64_t> env_seed() {
  const char* env = std::getenv("UNI_SEED");
  if (env == nullptr || *env == '\0') return std::nullopt;
  const std::string s(env);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    fail(ErrorKind::validation, "UNI_SEED must be an unsigned integer, got '" + s + "'");
  return v;
}

// Seed precedence: explicit --seed flag, then UNI_SEED, then the config value.
std::uint64_t resolve_seed(std::uint64_t config_seed, const CLI::Option* flag,
                           std::uint64_t flag_value) {
  if (flag != nullptr && flag->count() > 0) return flag_value;
  if (const auto v = env_seed()) return *v;
  return config_seed;
}

fs::path dir_of(const fs::path& file) {
  const fs::path parent = file.parent_path();
  return parent.empty() ? fs::path(".") : parent;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    fail(ErrorKind::validation,
         "cli: cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::validation, "cli: cannot open for write: " + path.string());
  f << text;
  if (!f) fail(ErrorKind::validation, "cli: write failed: " + path.string());
}

// Every run leaves its exact resolved settings next to its artifacts, so a
// run directory is always replayable as-is.
void mirror_config(const fs::path& dir, const RunConfig& cfg) {
  ensure_dir(dir);
  write_config_file(dir / "config.txt", cfg);
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

template <typename Fn>
void with_dtype(const RunConfig& cfg, Fn&& fn) {
  if (cfg.dtype == "f64")
    fn(double{});
  else
    fn(float{});
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenOpts {
  std::string kind = "center-out";
  std::string out = ".";
  Index trials = 64;
  Index units = 70;
  Index t_raw = 1000;
  Index classes = 8;
  Index outputs = 2;
  Index sources = 1;
  std::uint64_t seed = 1;
  CLI::Option* seed_opt = nullptr;
};

void run_gen(const GenOpts& o) {
  const std::uint64_t seed = resolve_seed(o.seed, o.seed_opt, o.seed);
  std::vector<SpikeRecording> recs;
  if (o.kind == "center-out" || o.kind == "center_out") {
    CenterOutConfig g;
    g.n_trials = o.trials;
    g.n_units = o.units;
    g.t_raw = o.t_raw;
    g.n_classes = o.classes;
    g.n_sources = o.sources;
    g.seed = seed;
    recs = gen_center_out(g);
  } else if (o.kind == "kinematics") {
    KinematicsConfig g;
    g.n_trials = o.trials;
    g.n_units = o.units;
    g.t_raw = o.t_raw;
    g.k_outputs = o.outputs;
    g.n_sources = o.sources;
    g.seed = seed;
    recs = gen_kinematics(g);
  } else {
    fail(ErrorKind::validation,
         "gen: unknown kind '" + o.kind + "' (expected center-out or kinematics)");
  }
  write_corpus(o.out, recs);

  std::string settings;
  settings += "kind=" + o.kind + "\n";
  settings += "trials=" + std::to_string(o.trials) + "\n";
  settings += "units=" + std::to_string(o.units) + "\n";
  settings += "t_raw=" + std::to_string(o.t_raw) + "\n";
  if (o.kind == "kinematics")
    settings += "outputs=" + std::to_string(o.outputs) + "\n";
  else
    settings += "classes=" + std::to_string(o.classes) + "\n";
  settings += "sources=" + std::to_string(o.sources) + "\n";
  settings += "seed=" + std::to_string(seed) + "\n";
  write_text_file(fs::path(o.out) / "gen.txt", settings);
  std::cout << "gen: wrote " << recs.size() << " trials to " << o.out << "\n";
}

// ---------------------------------------------------------------------------
// pretrain
// ---------------------------------------------------------------------------

struct PretrainOpts {
  std::string data;
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  Index threads = 0;
  CLI::Option* threads_opt = nullptr;
  Index epochs = 0;
  CLI::Option* epochs_opt = nullptr;
  Index batch = 0;
  CLI::Option* batch_opt = nullptr;
  bool progress = false;
};

void run_pretrain(const PretrainOpts& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config_file(o.config);
  cfg.seed = resolve_seed(cfg.seed, o.seed_opt, o.seed);
  if (o.threads_opt->count() > 0) cfg.threads = o.threads;
  if (o.epochs_opt->count() > 0) cfg.epochs = o.epochs;
  if (o.batch_opt->count() > 0) cfg.batch_size = o.batch;
  validate_config(cfg);
  const auto recs = read_corpus(o.data);
  with_dtype(cfg, [&](auto tag) {
    using S = decltype(tag);
    StubEmbedder emb(cfg.d_text);
    const auto trials = prepare_corpus<S>(recs, cfg, emb);
    auto model = make_model<S>(cfg);
    const PretrainResult res = pretrain(model, trials, o.progress ? &std::cerr : nullptr);
    ensure_dir(dir_of(o.out));
    save_checkpoint(o.out, model.params, config_to_json(cfg));
    write_text_file(o.out + ".loss.csv", loss_curve_csv(res.epoch_mean_loss));
    mirror_config(dir_of(o.out), cfg);
    std::cout << "pretrain: " << trials.size() << " trials, " << cfg.epochs
              << " epochs, final mean loss " << fmt("%.6g", res.epoch_mean_loss.back()) << "\n";
    std::cout << "checkpoint: " << o.out << "\n";
  });
}

// ---------------------------------------------------------------------------
// finetune
// ---------------------------------------------------------------------------

struct FinetuneOpts {
  std::string ckpt;
  std::string data;
  std::string out;
  std::string task;
  CLI::Option* task_opt = nullptr;
  std::string split;
  CLI::Option* split_opt = nullptr;
  double train_fraction = 0;
  CLI::Option* fraction_opt = nullptr;
  Index epochs = 0;
  CLI::Option* epochs_opt = nullptr;
  double lr = 0;
  CLI::Option* lr_opt = nullptr;
  Index batch = 0;
  CLI::Option* batch_opt = nullptr;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  Index threads = 0;
  CLI::Option* threads_opt = nullptr;
  bool progress = false;
};

void run_finetune(const FinetuneOpts& o) {
  const Checkpoint ck = load_checkpoint(o.ckpt);
  RunConfig cfg = config_from_json(ck.config_json);
  if (o.task_opt->count() > 0) cfg.task = o.task;
  if (o.split_opt->count() > 0) cfg.split = o.split;
  if (o.fraction_opt->count() > 0) cfg.train_fraction = o.train_fraction;
  if (o.epochs_opt->count() > 0) cfg.ft_epochs = o.epochs;
  if (o.lr_opt->count() > 0) cfg.ft_lr = o.lr;
  if (o.batch_opt->count() > 0) cfg.ft_batch_size = o.batch;
  cfg.seed = resolve_seed(cfg.seed, o.seed_opt, o.seed);
  if (o.threads_opt->count() > 0) cfg.threads = o.threads;
  validate_config(cfg);
  const TaskKind task = parse_task(cfg.task);
  const auto recs = read_corpus(o.data);
  with_dtype(cfg, [&](auto tag) {
    using S = decltype(tag);
    Model<S> model{cfg, ck.params.template cast<S>()};
    StubEmbedder emb(cfg.d_text);
    const auto trials = prepare_corpus<S>(recs, cfg, emb);
    const SplitResult split = split_prepared(trials, cfg);
    const FinetuneResult res =
        finetune(model, trials, split.train, task, o.progress ? &std::cerr : nullptr);
    ensure_dir(dir_of(o.out));
    save_checkpoint(o.out, model.params, config_to_json(cfg));
    write_text_file(o.out + ".loss.csv", loss_curve_csv(res.epoch_mean_loss));
    mirror_config(dir_of(o.out), cfg);
    std::cout << "finetune: " << split.train.size() << " train / " << split.test.size()
              << " held-out trials, " << cfg.ft_epochs << " epochs, final mean loss "
              << fmt("%.6g", res.epoch_mean_loss.back()) << "\n";
    std::cout << "checkpoint: " << o.out << "\n";
  });
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOpts {
  std::string ckpt;
  std::string data;
  std::string out = ".";
  std::string task;
  CLI::Option* task_opt = nullptr;
  std::string split;
  CLI::Option* split_opt = nullptr;
  double train_fraction = 0;
  CLI::Option* fraction_opt = nullptr;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  Index threads = 0;
  CLI::Option* threads_opt = nullptr;
};

void run_eval(const EvalOpts& o) {
  const Checkpoint ck = load_checkpoint(o.ckpt);
  RunConfig cfg = config_from_json(ck.config_json);
  if (o.task_opt->count() > 0) cfg.task = o.task;
  if (o.split_opt->count() > 0) cfg.split = o.split;
  if (o.fraction_opt->count() > 0) cfg.train_fraction = o.train_fraction;
  cfg.seed = resolve_seed(cfg.seed, o.seed_opt, o.seed);
  if (o.threads_opt->count() > 0) cfg.threads = o.threads;
  validate_config(cfg);
  if (!ck.params.contains(kHeadW1))
    fail(ErrorKind::validation, "eval: checkpoint has no task head; run finetune first");
  const TaskKind task = parse_task(cfg.task);
  const auto recs = read_corpus(o.data);
  with_dtype(cfg, [&](auto tag) {
    using S = decltype(tag);
    const Model<S> model{cfg, ck.params.template cast<S>()};
    StubEmbedder emb(cfg.d_text);
    const auto trials = prepare_corpus<S>(recs, cfg, emb);
    // Same split derivation as finetune, so with the checkpoint's recorded
    // settings the "test" rows are exactly the held-out trials.
    const SplitResult split = split_prepared(trials, cfg);
    std::vector<SplitMetrics> rows;
    rows.push_back(evaluate_subset(model, trials, split.train, task, "train", cfg.threads));
    rows.push_back(evaluate_subset(model, trials, split.test, task, "test", cfg.threads));
    const std::string csv = metrics_csv(rows);
    ensure_dir(o.out);
    write_text_file(fs::path(o.out) / "metrics.csv", csv);
    if (task == TaskKind::classification)
      write_text_file(fs::path(o.out) / "confusion.csv", confusion_csv(rows[1].cls));
    mirror_config(o.out, cfg);
    std::cout << csv;
  });
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchOpts {
  std::string component = "ila";
  std::string sweep;
  std::string emit_csv;
  std::vector<Index> values;
  int reps = 31;
  int warmups = 5;
  Index n = 0;
  Index a = 0;
  Index d = 0;
  Index w = 0;
};

void run_bench(const BenchOpts& o) {
  const BenchComponent comp = parse_component(o.component);
  const std::string axis = sweeps_t(comp) ? "t" : "S";
  if (!o.sweep.empty() && !(o.sweep == axis || (axis == "S" && o.sweep == "s") ||
                            (axis == "t" && o.sweep == "T")))
    fail(ErrorKind::validation, "bench: component " + component_str(comp) + " sweeps axis " +
                                    axis + ", not '" + o.sweep + "'");
  BenchShape base = default_sweep_base(comp);
  if (o.n >= 1) base.n = o.n;
  if (o.a >= 1) base.a = o.a;
  if (o.d >= 1) base.d = o.d;
  if (o.w >= 1) base.w = o.w;
  const std::vector<Index> values = o.values.empty() ? default_sweep_values(comp) : o.values;
  const SweepResult res = bench_sweep(comp, base, values, o.reps, o.warmups);
  const std::string csv = timing_csv(res.rows);
  if (!o.emit_csv.empty()) {
    ensure_dir(dir_of(o.emit_csv));
    write_text_file(o.emit_csv, csv);
  } else {
    std::cout << csv;
  }
  std::cout << "bench: component=" << component_str(comp) << " axis=" << axis
            << " points=" << values.size() << " slope=" << fmt("%.3f", res.slope)
            << " inversions=" << res.inversions << "\n";
}

// ---------------------------------------------------------------------------
// diag expansion
// ---------------------------------------------------------------------------

struct DiagExpansionOpts {
  std::string data;
  std::string ckpt;
  std::string config;
  std::string out;
  double eps = 1e-6;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

void run_diag_expansion(const DiagExpansionOpts& o) {
  std::optional<Checkpoint> ck;
  RunConfig cfg;
  if (!o.ckpt.empty()) {
    ck = load_checkpoint(o.ckpt);
    cfg = config_from_json(ck->config_json);
  } else if (!o.config.empty()) {
    cfg = load_config_file(o.config);
  }
  cfg.seed = resolve_seed(cfg.seed, o.seed_opt, o.seed);
  validate_config(cfg);
  const auto recs = read_corpus(o.data);
  with_dtype(cfg, [&](auto tag) {
    using S = decltype(tag);
    StubEmbedder emb(cfg.d_text);
    const auto trials = prepare_corpus<S>(recs, cfg, emb);
    // Without a checkpoint the diagnostic runs on fresh seed-derived weights.
    ParamStore<S> params =
        ck ? ck->params.template cast<S>() : make_model<S>(cfg).params;
    const ExpansionRows rows = collect_expansion_rows(trials, params, cfg);
    const ExpansionReport rep = expansion_diag(rows.spike, rows.joint, o.eps);
    const std::string csv = expansion_csv(rep);
    if (!o.out.empty()) {
      ensure_dir(dir_of(o.out));
      write_text_file(o.out, csv);
      mirror_config(dir_of(o.out), cfg);
    }
    std::cout << csv;
  });
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradOpts {
  std::vector<Index> shape = {2, 2, 4, 8};
  double tol = 1e-5;
  double step = 1e-5;
  Index coords = 200;
  Index heads = 2;
  Index layers = 2;
  Index window = 2;
  std::uint64_t seed = 5;
  CLI::Option* seed_opt = nullptr;
};

void run_gradcheck(const GradOpts& o) {
  if (o.shape.size() != 4)
    fail(ErrorKind::validation, "gradcheck: --shape must be N,A,t,d (4 comma-separated integers)");
  PipelineCheckSpec s;
  s.n = o.shape[0];
  s.a = o.shape[1];
  s.t = o.shape[2];
  s.d = o.shape[3];
  s.heads = o.heads;
  s.layers = o.layers;
  s.window = o.window;
  s.n_coords = o.coords;
  s.tol = o.tol;
  s.step = o.step;
  s.seed = resolve_seed(s.seed, o.seed_opt, o.seed);
  const GradCheckReport rep = pipeline_gradcheck(s);
  std::cout << "gradcheck: shape=" << s.n << "," << s.a << "," << s.t << "," << s.d
            << " coords=" << rep.n_checked << " max_rel_err=" << fmt("%.3g", rep.max_rel_err)
            << " tol=" << fmt("%.3g", s.tol) << " -> " << (rep.pass ? "pass" : "FAIL") << "\n";
  if (!rep.pass)
    fail(ErrorKind::contract, "gradcheck: max relative error " + fmt("%.6g", rep.max_rel_err) +
                                  " exceeds tol " + fmt("%.6g", s.tol));
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{
      "spike-train modeling pipeline: corpus generation, masked-reconstruction "
      "pretraining, fine-tuning, evaluation, kernel benchmarks, diagnostics"};
  app.require_subcommand(1);

  GenOpts gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic spike corpus");
  gen_cmd->add_option("--kind", gen.kind, "center-out | kinematics");
  gen_cmd->add_option("--out", gen.out, "output corpus directory");
  gen_cmd->add_option("--trials", gen.trials, "number of trials");
  gen_cmd->add_option("--units", gen.units, "recorded units per trial");
  gen_cmd->add_option("--t-raw", gen.t_raw, "raw time bins per trial");
  gen_cmd->add_option("--classes", gen.classes, "target classes (center-out)");
  gen_cmd->add_option("--outputs", gen.outputs, "velocity components (kinematics)");
  gen_cmd->add_option("--sources", gen.sources, "subject/session sources");
  gen.seed_opt = gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->callback([&] { run_gen(gen); });

  PretrainOpts pre;
  auto* pre_cmd = app.add_subcommand("pretrain", "masked-reconstruction pretraining");
  pre_cmd->add_option("--data", pre.data, "corpus directory")->required();
  pre_cmd->add_option("--config", pre.config, "key=value config file");
  pre_cmd->add_option("--out", pre.out, "output checkpoint path")->required();
  pre.seed_opt = pre_cmd->add_option("--seed", pre.seed, "override config seed");
  pre.threads_opt = pre_cmd->add_option("--threads", pre.threads,
                                        "worker cap (training itself is sequential)");
  pre.epochs_opt = pre_cmd->add_option("--epochs", pre.epochs, "override config epochs");
  pre.batch_opt = pre_cmd->add_option("--batch", pre.batch, "override config batch size");
  pre_cmd->add_flag("--progress", pre.progress, "per-epoch progress on stderr");
  pre_cmd->callback([&] { run_pretrain(pre); });

  FinetuneOpts ft;
  auto* ft_cmd = app.add_subcommand("finetune", "supervised fine-tuning from a checkpoint");
  ft_cmd->add_option("--ckpt", ft.ckpt, "input checkpoint")->required();
  ft_cmd->add_option("--data", ft.data, "corpus directory")->required();
  ft_cmd->add_option("--out", ft.out, "output checkpoint path")->required();
  ft.task_opt = ft_cmd->add_option("--task", ft.task, "cls | reg");
  ft.split_opt = ft_cmd->add_option("--split", ft.split,
                                    "multi-day | cross-day | few-shot | within-session");
  ft.fraction_opt =
      ft_cmd->add_option("--train-fraction", ft.train_fraction, "train share in (0,1)");
  ft.epochs_opt = ft_cmd->add_option("--epochs", ft.epochs, "override fine-tune epochs");
  ft.lr_opt = ft_cmd->add_option("--lr", ft.lr, "override fine-tune learning rate");
  ft.batch_opt = ft_cmd->add_option("--batch", ft.batch, "override fine-tune batch size");
  ft.seed_opt = ft_cmd->add_option("--seed", ft.seed, "override config seed");
  ft.threads_opt = ft_cmd->add_option("--threads", ft.threads,
                                      "worker cap (training itself is sequential)");
  ft_cmd->add_flag("--progress", ft.progress, "per-epoch progress on stderr");
  ft_cmd->callback([&] { run_finetune(ft); });

  EvalOpts ev;
  auto* ev_cmd = app.add_subcommand("eval", "metrics for a fine-tuned checkpoint");
  ev_cmd->add_option("--ckpt", ev.ckpt, "fine-tuned checkpoint")->required();
  ev_cmd->add_option("--data", ev.data, "corpus directory")->required();
  ev_cmd->add_option("--out", ev.out, "output directory for metric CSVs");
  ev.task_opt = ev_cmd->add_option("--task", ev.task, "cls | reg");
  ev.split_opt = ev_cmd->add_option("--split", ev.split,
                                    "multi-day | cross-day | few-shot | within-session");
  ev.fraction_opt =
      ev_cmd->add_option("--train-fraction", ev.train_fraction, "train share in (0,1)");
  ev.seed_opt = ev_cmd->add_option("--seed", ev.seed, "override config seed");
  ev.threads_opt = ev_cmd->add_option("--threads", ev.threads, "parallel evaluation workers");
  ev_cmd->callback([&] { run_eval(ev); });

  BenchOpts be;
  auto* be_cmd = app.add_subcommand("bench", "attention-kernel scaling sweep");
  be_cmd->add_option("--component", be.component, "ila | full | aswa | global");
  be_cmd->add_option("--sweep", be.sweep, "swept axis: t (interval kernels) or S (sequence)");
  be_cmd->add_option("--emit-csv", be.emit_csv, "write timing rows to this file");
  be_cmd->add_option("--values", be.values, "swept axis values")->delimiter(',');
  be_cmd->add_option("--reps", be.reps, "timed repetitions per point");
  be_cmd->add_option("--warmups", be.warmups, "unclocked warmup runs per point");
  be_cmd->add_option("--n", be.n, "interval count (interval kernels)");
  be_cmd->add_option("--a", be.a, "area count (interval kernels)");
  be_cmd->add_option("--d", be.d, "embedding width");
  be_cmd->add_option("--w", be.w, "causal window (aswa)");
  be_cmd->callback([&] { run_bench(be); });

  DiagExpansionOpts dx;
  auto* diag_cmd = app.add_subcommand("diag", "model diagnostics");
  diag_cmd->require_subcommand(1);
  auto* dx_cmd = diag_cmd->add_subcommand(
      "expansion", "embedding-space covariance expansion from context injection");
  dx_cmd->add_option("--data", dx.data, "corpus directory")->required();
  dx_cmd->add_option("--ckpt", dx.ckpt, "checkpoint (fresh seed-derived weights if omitted)");
  dx_cmd->add_option("--config", dx.config, "config file (used when --ckpt is omitted)");
  dx_cmd->add_option("--out", dx.out, "write the report CSV to this file");
  dx_cmd->add_option("--eps", dx.eps, "covariance ridge added before the eigensolve");
  dx.seed_opt = dx_cmd->add_option("--seed", dx.seed, "override config seed");
  dx_cmd->callback([&] { run_diag_expansion(dx); });

  GradOpts gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of the full pipeline");
  gc_cmd->add_option("--shape", gc.shape, "N,A,t,d")->delimiter(',');
  gc_cmd->add_option("--tol", gc.tol, "max relative error allowed");
  gc_cmd->add_option("--step", gc.step, "finite-difference step");
  gc_cmd->add_option("--coords", gc.coords, "sampled parameter coordinates");
  gc_cmd->add_option("--heads", gc.heads, "attention heads");
  gc_cmd->add_option("--layers", gc.layers, "encoder blocks");
  gc_cmd->add_option("--window", gc.window, "summary-attention window");
  gc.seed_opt = gc_cmd->add_option("--seed", gc.seed, "check seed");
  gc_cmd->callback([&] { run_gradcheck(gc); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int cli_main(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("unibci");
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace unibci

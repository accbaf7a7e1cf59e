#include "mome/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mome/backbones.hpp"
#include "mome/checkpoint.hpp"
#include "mome/config.hpp"
#include "mome/context_provider.hpp"
#include "mome/datasets.hpp"
#include "mome/error.hpp"
#include "mome/svg.hpp"
#include "mome/training.hpp"
#include "mome/verification.hpp"

namespace fs = std::filesystem;

namespace mome {

namespace {

// ---------------------------------------------------------------------------
// Logging, controlled by MOME_LOG=debug|info (stderr only; stdout carries
// machine-readable results).

int log_level() {
  const char* v = std::getenv("MOME_LOG");
  if (v != nullptr && std::string(v) == "debug") return 2;
  return 1;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[info] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() >= 2) std::cerr << "[debug] " << msg << "\n";
}

void write_file(const std::string& path, const std::string& content) {
  fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << content;
  if (!f) throw IoError("short write to '" + path + "'");
}

// data.jsonl -> data.train.jsonl / data.test.jsonl
std::string sibling_path(const std::string& path, const std::string& tag) {
  fs::path p(path);
  std::string ext = p.extension().string();
  fs::path stem = p.parent_path() / p.stem();
  return stem.string() + "." + tag + ext;
}

// ---------------------------------------------------------------------------
// Presets: window shapes for paper-style experiments on synthetic series.

SynthSpec preset_spec(const std::string& name) {
  SynthSpec s;
  if (name == "finance-short") {
    s.domain = Domain::finance;
    s.series_len = 600;
    s.L_in = 56;   // 7 days of 8 intraday points
    s.L_out = 8;   // 1 day ahead
    s.points_per_day = 8;
  } else if (name == "finance-long") {
    s.domain = Domain::finance;
    s.series_len = 1200;
    s.L_in = 120;  // 30 days of 4 points
    s.L_out = 28;  // 7 days ahead
    s.points_per_day = 4;
  } else if (name == "weather-short") {
    s.domain = Domain::weather;
    s.series_len = 600;
    s.L_in = 28;   // 7 days of 4 points
    s.L_out = 4;   // 1 day ahead
    s.points_per_day = 4;
  } else if (name == "weather-long") {
    s.domain = Domain::weather;
    s.series_len = 900;
    s.L_in = 56;   // 14 days of 4 points
    s.L_out = 12;  // 3 days ahead
    s.points_per_day = 4;
  } else if (name == "timemmd-style") {
    s.domain = Domain::weather;
    s.series_len = 300;
    s.L_in = 14;   // 14 daily points
    s.L_out = 3;
    s.points_per_day = 1;
  } else if (name == "cue") {
    s.L_in = 16;
    s.L_out = 8;
  } else {
    throw ConfigError("unknown preset '" + name +
                      "' (finance-short|finance-long|weather-short|"
                      "weather-long|timemmd-style|cue)");
  }
  return s;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "finance-short", "weather-short", "finance-long",
      "weather-long",  "timemmd-style", "cue"};
  return names;
}

// ---------------------------------------------------------------------------
// Shared flag state, applied over a (possibly file-loaded) RunConfig.

struct Overrides {
  std::string config_path;
  std::string preset;
  std::string backbone;
  std::string data_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int experts = 0;
  int topk = 0;
  int ctx_tokens = 0;
  bool no_modulation = false;
  bool no_router_mod = false;
  bool no_eilm = false;

  void register_model_flags(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Run config JSON");
    cmd->add_option("--preset", preset,
                    "Window-shape preset applied to the model")
        ->check(CLI::IsMember(preset_names()));
    cmd->add_option("--backbone", backbone,
                    "mome|mmlinear|mitransformer|dlinear_moe|tsmixer_moe|"
                    "itransformer_moe");
    cmd->add_option("--experts", experts, "Expert count E")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--topk", topk, "Active experts K")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--ctx-tokens", ctx_tokens, "Distilled context tokens m")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--no-modulation", no_modulation,
                  "Disable all context modulation");
    cmd->add_flag("--no-router-mod", no_router_mod,
                  "Disable router modulation only");
    cmd->add_flag("--no-eilm", no_eilm, "Disable expert output modulation only");
    cmd->add_option_function<std::uint64_t>(
           "--seed", [this](std::uint64_t v) {
             seed = v;
             seed_set = true;
           },
           "Master seed (model init and training)");
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_run_config(config_path);
    if (!preset.empty()) {
      SynthSpec s = preset_spec(preset);
      cfg.model.lookback = s.L_in;
      cfg.model.horizon = s.L_out;
    }
    if (!backbone.empty()) cfg.model.kind = backbone_kind_from(backbone);
    if (experts > 0) cfg.model.experts = static_cast<std::size_t>(experts);
    if (topk > 0) cfg.model.topk = topk;
    if (ctx_tokens > 0) cfg.model.ctx_tokens = static_cast<std::size_t>(ctx_tokens);
    if (no_modulation) cfg.model.modulation = false;
    if (no_router_mod) cfg.model.router_mod = false;
    if (no_eilm) cfg.model.eilm = false;
    if (seed_set) {
      cfg.seed = seed;
      cfg.train.seed = seed;
    }
    if (!data_path.empty()) cfg.data.train_path = data_path;
    return cfg;
  }
};

std::unique_ptr<ContextProvider> provider_for(const RunConfig& cfg) {
  return make_context_provider(cfg.context);
}

// Provider for checkpoint-driven commands without a run config: hashed
// embeddings sized to the model.
std::unique_ptr<ContextProvider> provider_for_model(const Backbone& model,
                                                    const std::string& config_path) {
  if (!config_path.empty()) {
    return make_context_provider(load_run_config(config_path).context);
  }
  ContextConfig ctx;
  ctx.dprime = model.config().ctx_dim;
  return make_context_provider(ctx);
}

// ---------------------------------------------------------------------------
// Subcommand bodies.

void run_synth(const std::string& preset, std::uint64_t seed,
               const std::string& out) {
  std::vector<MultiModalSample> all, train_set, test_set;
  if (preset == "cue") {
    all = gen_cue_dataset(240, 16, 8, seed);
    std::size_t cut = all.size() * 8 / 10;
    train_set.assign(all.begin(), all.begin() + static_cast<long>(cut));
    test_set.assign(all.begin() + static_cast<long>(cut), all.end());
  } else {
    SynthSpec spec = preset_spec(preset);
    SynthResult res = synth_dataset(spec, seed);
    all = std::move(res.all);
    for (std::size_t i : res.split.train_idx) train_set.push_back(all[i]);
    for (std::size_t i : res.split.test_idx) test_set.push_back(all[i]);
  }
  save_samples_jsonl(all, out);
  std::string train_path = sibling_path(out, "train");
  std::string test_path = sibling_path(out, "test");
  save_samples_jsonl(train_set, train_path);
  save_samples_jsonl(test_set, test_path);
  log_info("wrote " + std::to_string(all.size()) + " samples to " + out);

  nlohmann::json j;
  j["out"] = out;
  j["train_out"] = train_path;
  j["test_out"] = test_path;
  j["samples"] = all.size();
  j["train"] = train_set.size();
  j["test"] = test_set.size();
  std::cout << j.dump(2) << "\n";
}

void run_embed(const std::string& in, const std::string& out,
               std::size_t dprime, std::size_t max_tokens) {
  std::vector<MultiModalSample> samples = load_samples_jsonl(in);
  std::vector<EmbeddingRecord> records;
  records.reserve(samples.size());
  for (const MultiModalSample& s : samples) {
    records.push_back({s.id, hash_embed_text(s.text, dprime, max_tokens)});
  }
  save_precomputed_embeddings(records, out);
  log_info("embedded " + std::to_string(records.size()) + " texts");

  nlohmann::json j;
  j["out"] = out;
  j["records"] = records.size();
  j["dprime"] = dprime;
  std::cout << j.dump(2) << "\n";
}

void run_train(const Overrides& ov, const std::string& out_dir) {
  RunConfig cfg = ov.resolve();
  if (cfg.data.train_path.empty()) {
    throw ConfigError("train: no dataset (set data.train_path or --data)");
  }
  std::vector<MultiModalSample> data = load_samples_jsonl(cfg.data.train_path);
  log_info("loaded " + std::to_string(data.size()) + " samples from " +
           cfg.data.train_path);
  std::unique_ptr<ContextProvider> ctx = provider_for(cfg);
  std::unique_ptr<Backbone> model = make_backbone(cfg.model, cfg.seed);

  TrainResult res = train(*model, data, ctx.get(), cfg.train);
  for (std::size_t e = 0; e < res.train_curve.size(); ++e) {
    log_debug("epoch " + std::to_string(e + 1) + " train " +
              std::to_string(res.train_curve[e]) + " val " +
              std::to_string(res.val_curve[e]));
  }

  fs::create_directories(out_dir);
  std::string ckpt = (fs::path(out_dir) / "model.ckpt").string();
  save_checkpoint(*model, ckpt);
  write_file((fs::path(out_dir) / "loss_curve.csv").string(),
             train_result_to_csv(res));
  save_run_config(cfg, (fs::path(out_dir) / "config.json").string());

  nlohmann::json j;
  j["out"] = out_dir;
  j["checkpoint"] = ckpt;
  j["epochs"] = res.train_curve.size();
  j["steps"] = res.steps;
  j["best_epoch"] = res.best_epoch;
  j["best_val"] = res.best_val;
  if (!res.train_curve.empty()) j["final_train_loss"] = res.train_curve.back();
  std::cout << j.dump(2) << "\n";
}

void run_eval(const std::string& checkpoint, const std::string& data_path,
              const std::string& config_path, const std::string& out) {
  std::unique_ptr<Backbone> model = load_checkpoint(checkpoint);
  std::string path = data_path;
  if (path.empty() && !config_path.empty()) {
    path = load_run_config(config_path).data.test_path;
  }
  if (path.empty()) {
    throw ConfigError("eval: no dataset (use --data or data.test_path)");
  }
  std::vector<MultiModalSample> samples = load_samples_jsonl(path);
  std::unique_ptr<ContextProvider> ctx = provider_for_model(*model, config_path);

  EvalReport rep =
      evaluate(*model, samples, ctx.get(), model->config().task);
  std::string text = rep.to_json().dump(2);
  if (!out.empty()) write_file(out, text + "\n");
  std::cout << text << "\n";
}

int run_verify_lemma(std::size_t trials, std::size_t probes,
                     std::uint64_t seed, const std::string& out) {
  LemmaReport rep = verify_lemma(trials, probes, seed);
  if (!out.empty()) write_file(out, rep.to_json() + "\n");
  std::cout << rep.to_json() << "\n";
  return rep.pass ? 0 : 1;
}

int run_verify_theorem(std::size_t trials, std::uint64_t seed,
                       const std::string& out) {
  TheoremSweepReport rep = verify_theorem(trials, seed);
  if (!out.empty()) write_file(out, rep.to_json() + "\n");
  std::cout << rep.to_json() << "\n";
  return rep.pass ? 0 : 1;
}

int run_sweep(const Overrides& ov, std::vector<int> k_grid,
              const std::string& out_prefix) {
  RunConfig cfg = ov.resolve();
  if (cfg.data.train_path.empty() || cfg.data.test_path.empty()) {
    throw ConfigError("sweep-k: data.train_path and data.test_path required");
  }
  std::vector<MultiModalSample> train_data =
      load_samples_jsonl(cfg.data.train_path);
  std::vector<MultiModalSample> test_data =
      load_samples_jsonl(cfg.data.test_path);
  std::unique_ptr<ContextProvider> ctx = provider_for(cfg);
  if (k_grid.empty()) k_grid = {1, 2, 4};

  SweepReport rep = sweep_topk(cfg.model, cfg.train, train_data, test_data,
                               ctx.get(), k_grid);
  std::size_t ok = 0;
  SvgSeries mse_series{"MSE", {}, {}, ""};
  SvgSeries mae_series{"MAE", {}, {}, ""};
  for (const SweepCell& c : rep.cells) {
    if (!c.ok) {
      log_info("K=" + std::to_string(c.K) + " failed: " + c.error);
      continue;
    }
    ++ok;
    mse_series.xs.push_back(c.K);
    mse_series.ys.push_back(c.mse);
    mae_series.xs.push_back(c.K);
    mae_series.ys.push_back(c.mae);
  }
  write_file(out_prefix + ".csv", rep.to_csv());
  write_file(out_prefix + ".svg",
             render_line_svg({mse_series, mae_series},
                             "Top-K sweep (E=" +
                                 std::to_string(cfg.model.experts) + ")",
                             "K", "test error"));
  std::cout << rep.to_csv();
  if (ok == 0) {
    std::cerr << "error: every sweep cell failed\n";
    return 1;
  }
  return 0;
}

void run_routing_report(const std::string& checkpoint,
                        const std::string& data_path,
                        const std::string& config_path,
                        const std::string& out) {
  std::unique_ptr<Backbone> model = load_checkpoint(checkpoint);
  std::vector<MultiModalSample> samples = load_samples_jsonl(data_path);
  std::unique_ptr<ContextProvider> ctx = provider_for_model(*model, config_path);
  const BackboneConfig& mcfg = model->config();
  bool use_ctx = mcfg.modulation;

  std::vector<TokenRouting> log;
  for (const MultiModalSample& s : samples) {
    Tensor x = sample_input(s, mcfg);
    Tensor H;
    const Tensor* Hp = nullptr;
    if (use_ctx) {
      H = ctx->context(s.id, s.text);
      Hp = &H;
    }
    ForwardOptions opt;
    opt.routing = &log;
    model->predict(x, Hp, opt);
  }
  RoutingSummary sum = summarize_routing(log, mcfg.experts);

  nlohmann::json j;
  j["samples"] = samples.size();
  j["tokens"] = sum.tokens;
  j["changed"] = sum.changed;
  j["changed_fraction"] = sum.changed_fraction();
  j["load"] = sum.load;
  std::string text = j.dump(2);
  if (!out.empty()) write_file(out, text + "\n");
  std::cout << text << "\n";
}

double parse_cell(const std::string& s) {
  if (s.empty()) return std::nan("");
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') return std::nan("");
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

void run_plot(const std::string& in, const std::string& out,
              std::string title) {
  std::ifstream f(in);
  if (!f) throw IoError("plot: cannot open '" + in + "'");
  std::string line;
  if (!std::getline(f, line)) throw DataError("plot: '" + in + "' is empty");
  std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 2) {
    throw DataError("plot: '" + in + "' needs an x column and a y column");
  }
  std::vector<SvgSeries> series(header.size() - 1);
  for (std::size_t i = 1; i < header.size(); ++i) {
    series[i - 1].label = header[i];
  }
  std::size_t rows = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    double x = parse_cell(cells[0]);
    for (std::size_t i = 0; i < series.size(); ++i) {
      double y = i + 1 < cells.size() ? parse_cell(cells[i + 1]) : std::nan("");
      series[i].xs.push_back(x);
      series[i].ys.push_back(y);
    }
    ++rows;
  }
  if (rows == 0) throw DataError("plot: '" + in + "' has no data rows");
  if (title.empty()) title = fs::path(in).filename().string();
  write_file(out, render_line_svg(series, title, header[0], ""));
  log_info("plotted " + std::to_string(rows) + " rows to " + out);
}

}  // namespace

int dispatch_args(const std::vector<std::string>& args) {
  CLI::App app{"Mixture-of-modulated-experts time-series toolkit", "mome"};
  app.require_subcommand(1);
  int rc = 0;

  // synth-data
  auto* synth = app.add_subcommand("synth-data",
                                   "Generate a synthetic multi-modal dataset");
  std::string synth_preset = "finance-short";
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth->add_option("--preset", synth_preset, "Dataset shape")
      ->check(CLI::IsMember(preset_names()));
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--out", synth_out, "Output JSONL path")->required();
  synth->callback([&] { run_synth(synth_preset, synth_seed, synth_out); });

  // embed-text
  auto* embed = app.add_subcommand(
      "embed-text", "Hash-embed sample texts into a JSONL embedding file");
  std::string embed_in, embed_out;
  std::size_t embed_dprime = 64, embed_max_tokens = 32;
  embed->add_option("--in", embed_in, "Samples JSONL")->required();
  embed->add_option("--out", embed_out, "Embeddings JSONL")->required();
  embed->add_option("--dprime", embed_dprime, "Embedding width");
  embed->add_option("--max-tokens", embed_max_tokens, "Token cap per text");
  embed->callback(
      [&] { run_embed(embed_in, embed_out, embed_dprime, embed_max_tokens); });

  // train
  auto* tr = app.add_subcommand("train", "Train a backbone on a JSONL dataset");
  Overrides tr_ov;
  std::string tr_out = "mome-run";
  tr_ov.register_model_flags(tr);
  tr->add_option("--data", tr_ov.data_path, "Training samples JSONL");
  tr->add_option("--out", tr_out, "Output directory");
  tr->callback([&] { run_train(tr_ov, tr_out); });

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string ev_ckpt, ev_data, ev_config, ev_out;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint manifest")->required();
  ev->add_option("--data", ev_data, "Samples JSONL");
  ev->add_option("--config", ev_config, "Run config (context + test path)");
  ev->add_option("--out", ev_out, "Report JSON path");
  ev->callback([&] { run_eval(ev_ckpt, ev_data, ev_config, ev_out); });

  // verify lemma|theorem
  auto* verify = app.add_subcommand(
      "verify", "Check the expert-decomposition and truncation-bound claims");
  verify->require_subcommand(1);
  auto* lemma = verify->add_subcommand(
      "lemma", "Dense GLU MLP equals the sum of its sub-experts");
  std::size_t lemma_trials = 100, lemma_probes = 100;
  std::uint64_t lemma_seed = 1;
  std::string lemma_out;
  lemma->add_option("--seeds", lemma_trials, "Random MLPs to test");
  lemma->add_option("--probes", lemma_probes, "Random inputs per MLP");
  lemma->add_option("--seed", lemma_seed, "Base seed");
  lemma->add_option("--out", lemma_out, "Report JSON path");
  lemma->callback(
      [&] { rc = run_verify_lemma(lemma_trials, lemma_probes, lemma_seed, lemma_out); });

  auto* theorem = verify->add_subcommand(
      "theorem", "Truncation error bound across random layers");
  std::size_t theorem_trials = 1000;
  std::uint64_t theorem_seed = 1;
  std::string theorem_out;
  theorem->add_option("--seeds", theorem_trials, "Random instances to test");
  theorem->add_option("--seed", theorem_seed, "Base seed");
  theorem->add_option("--out", theorem_out, "Report JSON path");
  theorem->callback(
      [&] { rc = run_verify_theorem(theorem_trials, theorem_seed, theorem_out); });

  // sweep-k
  auto* sweep = app.add_subcommand(
      "sweep-k", "Train once per K and table the test error");
  Overrides sweep_ov;
  std::vector<int> sweep_grid;
  std::string sweep_out = "sweep";
  sweep_ov.register_model_flags(sweep);
  sweep->add_option("--k-grid", sweep_grid, "Comma-separated K values")
      ->delimiter(',');
  sweep->add_option("--out", sweep_out, "Output prefix (.csv/.svg)");
  sweep->callback([&] { rc = run_sweep(sweep_ov, sweep_grid, sweep_out); });

  // routing-report
  auto* route = app.add_subcommand(
      "routing-report", "Summarize expert selections over a dataset");
  std::string route_ckpt, route_data, route_config, route_out;
  route->add_option("--checkpoint", route_ckpt, "Checkpoint manifest")
      ->required();
  route->add_option("--data", route_data, "Samples JSONL")->required();
  route->add_option("--config", route_config, "Run config (context settings)");
  route->add_option("--out", route_out, "Report JSON path");
  route->callback(
      [&] { run_routing_report(route_ckpt, route_data, route_config, route_out); });

  // plot
  auto* plot = app.add_subcommand("plot", "Render a CSV table as an SVG chart");
  std::string plot_in, plot_out, plot_title;
  plot->add_option("--in", plot_in, "CSV with a header row")->required();
  plot->add_option("--out", plot_out, "SVG path")->required();
  plot->add_option("--title", plot_title, "Chart title");
  plot->callback([&] { run_plot(plot_in, plot_out, plot_title); });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch_args(args);
}

}  // namespace mome

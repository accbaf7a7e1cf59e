#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "mome/cli.hpp"
#include "mome/config.hpp"
#include "mome/context_provider.hpp"
#include "mome/datasets.hpp"
#include "mome/rng.hpp"
#include "mome/training.hpp"

namespace fs = std::filesystem;
using namespace mome;

namespace {

struct TempDir {
  fs::path path;

  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("mome_cli_" + std::to_string(++counter) + "_" +
            std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

struct CaptureStream {
  std::ostream& stream;
  std::ostringstream buf;
  std::streambuf* old;

  explicit CaptureStream(std::ostream& s)
      : stream(s), old(s.rdbuf(buf.rdbuf())) {}
  ~CaptureStream() { stream.rdbuf(old); }
  std::string text() const { return buf.str(); }
};

int run(const std::vector<std::string>& args, std::string* out = nullptr) {
  CaptureStream cout_cap(std::cout);
  CaptureStream cerr_cap(std::cerr);
  int rc = dispatch_args(args);
  if (out) *out = cout_cap.text();
  return rc;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Tiny learnable dataset on disk: straight lines continued into x_out.
void write_line_dataset(const std::string& path, std::size_t n,
                        std::uint64_t seed) {
  RandomStream rng(seed);
  std::vector<MultiModalSample> samples;
  for (std::size_t i = 0; i < n; ++i) {
    double a = rng.uniform(-2.0, 2.0);
    double b = rng.uniform(-0.5, 0.5);
    MultiModalSample s;
    for (int t = 0; t < 8; ++t) s.x_in.push_back(a + b * t);
    for (int t = 8; t < 10; ++t) s.x_out.push_back(a + b * t);
    s.text = "steady drift in recent sessions";
    s.id = "cli-" + std::to_string(i);
    samples.push_back(std::move(s));
  }
  save_samples_jsonl(samples, path);
}

RunConfig small_run_config(const TempDir& dir) {
  RunConfig cfg;
  cfg.model.kind = BackboneKind::mmlinear;
  cfg.model.lookback = 8;
  cfg.model.horizon = 2;
  cfg.model.experts = 2;
  cfg.model.topk = 1;
  cfg.model.d = 4;
  cfg.model.dropout = 0.0;
  cfg.model.modulation = false;
  cfg.train.lr = 5e-3;
  cfg.train.epochs = 6;
  cfg.train.batch = 8;
  cfg.train.seed = 4;
  cfg.data.train_path = dir.file("train.jsonl");
  cfg.data.test_path = dir.file("test.jsonl");
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run({}) == 2);
  CHECK(run({"frobnicate"}) == 2);
  CHECK(run({"synth-data"}) == 2);             // missing required --out
  CHECK(run({"synth-data", "--preset", "lunar", "--out", "x.jsonl"}) == 2);
  CHECK(run({"verify"}) == 2);                 // missing nested subcommand
  CHECK(run({"--help"}) == 0);
  std::string help;
  run({"--help"}, &help);
  CHECK(help.find("synth-data") != std::string::npos);
  CHECK(help.find("routing-report") != std::string::npos);
}

TEST_CASE("synth-data writes dataset plus split companions deterministically") {
  TempDir dir;
  std::string out;
  REQUIRE(run({"synth-data", "--preset", "timemmd-style", "--seed", "7",
               "--out", dir.file("d.jsonl")},
              &out) == 0);
  nlohmann::json j = nlohmann::json::parse(out);
  CHECK(j["samples"].get<std::size_t>() > 0);
  CHECK(j["train"].get<std::size_t>() + j["test"].get<std::size_t>() <
        j["samples"].get<std::size_t>());  // the gap removes windows

  auto all = load_samples_jsonl(dir.file("d.jsonl"));
  auto tr = load_samples_jsonl(dir.file("d.train.jsonl"));
  auto te = load_samples_jsonl(dir.file("d.test.jsonl"));
  CHECK(all.size() == j["samples"].get<std::size_t>());
  CHECK(tr.size() == j["train"].get<std::size_t>());
  CHECK(te.size() == j["test"].get<std::size_t>());
  CHECK(all[0].x_in.size() == 14);
  CHECK(all[0].x_out.size() == 3);

  REQUIRE(run({"synth-data", "--preset", "timemmd-style", "--seed", "7",
               "--out", dir.file("d2.jsonl")}) == 0);
  CHECK(slurp(dir.file("d.jsonl")) == slurp(dir.file("d2.jsonl")));
  REQUIRE(run({"synth-data", "--preset", "timemmd-style", "--seed", "8",
               "--out", dir.file("d3.jsonl")}) == 0);
  CHECK(slurp(dir.file("d.jsonl")) != slurp(dir.file("d3.jsonl")));
}

TEST_CASE("synth-data cue preset splits without a gap") {
  TempDir dir;
  std::string out;
  REQUIRE(run({"synth-data", "--preset", "cue", "--seed", "3", "--out",
               dir.file("cue.jsonl")},
              &out) == 0);
  nlohmann::json j = nlohmann::json::parse(out);
  CHECK(j["samples"] == 240);
  CHECK(j["train"] == 192);
  CHECK(j["test"] == 48);
  auto samples = load_samples_jsonl(dir.file("cue.jsonl"));
  CHECK(samples[0].x_in.size() == 16);
  CHECK(samples[0].x_out.size() == 8);
  for (const auto& s : samples) CHECK(s.consistency == 1);
}

TEST_CASE("embed-text produces loadable embeddings") {
  TempDir dir;
  write_line_dataset(dir.file("s.jsonl"), 12, 5);
  std::string out;
  REQUIRE(run({"embed-text", "--in", dir.file("s.jsonl"), "--out",
               dir.file("e.jsonl"), "--dprime", "12"},
              &out) == 0);
  CHECK(nlohmann::json::parse(out)["records"] == 12);
  auto recs = load_precomputed_embeddings(dir.file("e.jsonl"));
  REQUIRE(recs.size() == 12);
  CHECK(recs.at("cli-0").matrix.cols == 12);
  CHECK(recs.at("cli-0").matrix.rows == 5);  // five whitespace tokens
}

TEST_CASE("train writes checkpoint, loss curve, and effective config") {
  TempDir dir;
  write_line_dataset(dir.file("train.jsonl"), 30, 1);
  write_line_dataset(dir.file("test.jsonl"), 10, 2);
  save_run_config(small_run_config(dir), dir.file("run.json"));

  std::string out;
  REQUIRE(run({"train", "--config", dir.file("run.json"), "--out",
               dir.file("run1")},
              &out) == 0);
  nlohmann::json j = nlohmann::json::parse(out);
  CHECK(std::isfinite(j["best_val"].get<double>()));
  CHECK(j["epochs"] == 6);
  CHECK(fs::exists(dir.file("run1/model.ckpt")));
  CHECK(fs::exists(dir.file("run1/model.bin")));
  CHECK(slurp(dir.file("run1/loss_curve.csv"))
            .rfind("epoch,train_loss,val_loss\n", 0) == 0);

  SUBCASE("dumped config reruns to identical artifacts") {
    REQUIRE(run({"train", "--config", dir.file("run1/config.json"), "--out",
                 dir.file("run2")}) == 0);
    CHECK(slurp(dir.file("run1/model.bin")) == slurp(dir.file("run2/model.bin")));
    CHECK(slurp(dir.file("run1/loss_curve.csv")) ==
          slurp(dir.file("run2/loss_curve.csv")));
    CHECK(slurp(dir.file("run1/config.json")) ==
          slurp(dir.file("run2/config.json")));
  }

  SUBCASE("eval scores the checkpoint and honors --out") {
    std::string eout;
    REQUIRE(run({"eval", "--checkpoint", dir.file("run1/model.ckpt"), "--data",
                 dir.file("test.jsonl"), "--out", dir.file("rep.json")},
                &eout) == 0);
    EvalReport rep =
        EvalReport::from_json(nlohmann::json::parse(slurp(dir.file("rep.json"))));
    CHECK(rep.samples.size() == 10);
    CHECK(rep.mse >= 0.0);
    CHECK(nlohmann::json::parse(eout)["mse"] == rep.mse);
  }

  SUBCASE("routing-report counts tokens over the dataset") {
    std::string rout;
    REQUIRE(run({"routing-report", "--checkpoint", dir.file("run1/model.ckpt"),
                 "--data", dir.file("test.jsonl"), "--out",
                 dir.file("routing.json")},
                &rout) == 0);
    nlohmann::json rj = nlohmann::json::parse(rout);
    CHECK(rj["samples"] == 10);
    CHECK(rj["tokens"] == 10);  // one routed token per mmlinear sample
    CHECK(rj["load"].size() == 2);
    CHECK(rj["changed_fraction"].get<double>() == 0.0);
  }

  SUBCASE("plot renders the loss curve") {
    REQUIRE(run({"plot", "--in", dir.file("run1/loss_curve.csv"), "--out",
                 dir.file("curve.svg")}) == 0);
    CHECK(slurp(dir.file("curve.svg")).rfind("<svg", 0) == 0);
  }
}

TEST_CASE("cli flags override the loaded config") {
  TempDir dir;
  write_line_dataset(dir.file("train.jsonl"), 20, 3);
  write_line_dataset(dir.file("test.jsonl"), 6, 4);
  RunConfig cfg = small_run_config(dir);
  cfg.train.epochs = 2;
  save_run_config(cfg, dir.file("run.json"));

  REQUIRE(run({"train", "--config", dir.file("run.json"), "--out",
               dir.file("ov"), "--backbone", "mome", "--experts", "3",
               "--topk", "2", "--ctx-tokens", "2", "--no-modulation",
               "--seed", "99"}) == 0);
  nlohmann::json j = nlohmann::json::parse(slurp(dir.file("ov/config.json")));
  CHECK(j["model"]["kind"] == "mome");
  CHECK(j["model"]["experts"] == 3);
  CHECK(j["model"]["topk"] == 2);
  CHECK(j["model"]["ctx_tokens"] == 2);
  CHECK(j["model"]["modulation"] == false);
  CHECK(j["seed"] == 99);
  CHECK(j["train"]["seed"] == 99);
}

TEST_CASE("sweep-k emits csv and svg and survives failing cells") {
  TempDir dir;
  write_line_dataset(dir.file("train.jsonl"), 20, 6);
  write_line_dataset(dir.file("test.jsonl"), 6, 7);
  RunConfig cfg = small_run_config(dir);
  cfg.train.epochs = 2;
  save_run_config(cfg, dir.file("run.json"));

  std::string out;
  REQUIRE(run({"sweep-k", "--config", dir.file("run.json"), "--k-grid",
               "1,2,4", "--out", dir.file("sw")},
              &out) == 0);
  std::string csv = slurp(dir.file("sw.csv"));
  CHECK(csv.rfind("K,MSE,MAE\n", 0) == 0);
  CHECK(csv.find("4,,") != std::string::npos);  // K=4 > E=2 fails, run continues
  CHECK(out == csv);
  CHECK(slurp(dir.file("sw.svg")).rfind("<svg", 0) == 0);
}

TEST_CASE("verify subcommands report and exit by pass state") {
  TempDir dir;
  std::string out;
  REQUIRE(run({"verify", "lemma", "--seeds", "5", "--out",
               dir.file("lemma.json")},
              &out) == 0);
  nlohmann::json j = nlohmann::json::parse(slurp(dir.file("lemma.json")));
  CHECK(j["pass"] == true);
  CHECK(j["trials"] == 5);
  CHECK(nlohmann::json::parse(out)["pass"] == true);

  REQUIRE(run({"verify", "theorem", "--seeds", "50"}, &out) == 0);
  CHECK(nlohmann::json::parse(out)["bound_violations"] == 0);
}

TEST_CASE("domain failures exit with code 1") {
  TempDir dir;
  CHECK(run({"eval", "--checkpoint", dir.file("absent.ckpt"), "--data",
             dir.file("absent.jsonl")}) == 1);
  CHECK(run({"plot", "--in", dir.file("absent.csv"), "--out",
             dir.file("x.svg")}) == 1);
  CHECK(run({"train", "--data", dir.file("absent.jsonl")}) == 1);
  write_line_dataset(dir.file("train.jsonl"), 8, 1);
  // mome on channels=1 with default patch_len 8 works, but topk > experts
  // must fail cleanly
  CHECK(run({"train", "--data", dir.file("train.jsonl"), "--backbone",
             "mmlinear", "--experts", "2", "--topk", "3"}) == 1);
}

TEST_CASE("MOME_LOG gates debug output") {
  TempDir dir;
  write_line_dataset(dir.file("train.jsonl"), 10, 9);
  RunConfig cfg = small_run_config(dir);
  cfg.train.epochs = 1;
  cfg.data.test_path.clear();
  save_run_config(cfg, dir.file("run.json"));

  {
    CaptureStream cerr_cap(std::cerr);
    CaptureStream cout_cap(std::cout);
    ::setenv("MOME_LOG", "debug", 1);
    REQUIRE(dispatch_args({"train", "--config", dir.file("run.json"), "--out",
                           dir.file("dbg")}) == 0);
    ::unsetenv("MOME_LOG");
    CHECK(cerr_cap.text().find("[debug]") != std::string::npos);
    CHECK(cerr_cap.text().find("[info]") != std::string::npos);
  }
  {
    CaptureStream cerr_cap(std::cerr);
    CaptureStream cout_cap(std::cout);
    REQUIRE(dispatch_args({"train", "--config", dir.file("run.json"), "--out",
                           dir.file("nodbg")}) == 0);
    CHECK(cerr_cap.text().find("[debug]") == std::string::npos);
    CHECK(cerr_cap.text().find("[info]") != std::string::npos);
  }
}

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "moce/checkpoint.hpp"
#include "moce/io.hpp"
#include "moce/run.hpp"

using namespace moce;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("moce_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

/// Runs the CLI with stdout and stderr captured to files under `dir`.
Result cli(const fs::path& dir, const std::string& args) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string(MOCE_CLI) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  Result r{WIFEXITED(status) ? WEXITSTATUS(status) : -1, "", ""};
  if (fs::exists(out)) r.out = io::read_text(out);
  if (fs::exists(err)) r.err = io::read_text(err);
  return r;
}

const char* kSmallSpec = R"({"samples_per_subject": 8, "seed": 3})";

// Small model, few epochs: exercises the whole pipeline in about a second.
json small_config() {
  return json::parse(R"({
    "seed": 1,
    "data": {"synthetic": {"samples_per_subject": 12}},
    "model": {"d": 4, "hidden": 8, "layers": 1, "heads": 2},
    "train": {"epochs": 3, "lr": 0.01, "patience": 5, "batch_size": 16},
    "eval": {"folds": 4}
  })");
}

}  // namespace

TEST_CASE("gen writes a dataset and is byte-reproducible") {
  const fs::path dir = scratch("gen");
  io::write_text(dir / "spec.json", kSmallSpec);
  const auto a = cli(dir, "gen --spec " + (dir / "spec.json").string() + " --out " + (dir / "a").string());
  REQUIRE(a.code == 0);
  CHECK(fs::exists(dir / "a" / "manifest.json"));
  const json summary = json::parse(a.out);
  CHECK(summary.at("samples") == 96);
  CHECK(summary.at("groups") == 12);
  REQUIRE(cli(dir, "gen --spec " + (dir / "spec.json").string() + " --out " + (dir / "b").string()).code == 0);
  for (const char* f : {"deep.csv", "mid.csv", "shallow.csv", "labels.csv", "manifest.json"}) {
    CHECK(io::read_text(dir / "a" / f) == io::read_text(dir / "b" / f));
  }

  io::write_text(dir / "bad.json", R"({"samples_per_subject": 8,)");
  const auto bad = cli(dir, "gen --spec " + (dir / "bad.json").string() + " --out " + (dir / "c").string());
  CHECK(bad.code == 2);
  CHECK(bad.err.find("malformed JSON") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "c"));

  io::write_text(dir / "unknown.json", R"({"colour": "red"})");
  CHECK(cli(dir, "gen --spec " + (dir / "unknown.json").string() + " --out " + (dir / "d").string()).code == 2);
  CHECK_FALSE(fs::exists(dir / "d"));
  CHECK(cli(dir, "gen --spec").code == 2);
  fs::remove_all(dir);
}

TEST_CASE("delta reports") {
  const fs::path dir = scratch("delta");
  io::write_text(dir / "square.csv", "x,y\n0,0\n1,0\n1,1\n0,1\n");
  const std::string sq = "delta --input " + (dir / "square.csv").string() + " --batch-size 4 --batches 1 --seed 0";
  const auto a = cli(dir, sq);
  REQUIRE(a.code == 0);
  const json r = json::parse(a.out);
  CHECK(r.at("delta_rel").at("mean").get<double>() == doctest::Approx(2.0 - std::sqrt(2.0)).epsilon(1e-12));
  CHECK(cli(dir, sq).out == a.out);

  // Path metric of the tree a-b-c with a leaf d hanging off b.
  io::write_text(dir / "tree.csv",
                 "a,b,c,d\n"
                 "0,1,3,3\n"
                 "1,0,2,2\n"
                 "3,2,0,4\n"
                 "3,2,4,0\n");
  const auto t = cli(dir, "delta --input " + (dir / "tree.csv").string() + " --precomputed --batch-size 4 --batches 1");
  REQUIRE(t.code == 0);
  CHECK(json::parse(t.out).at("delta").get<double>() == 0.0);
  const auto t2 =
      cli(dir, "delta --input " + (dir / "tree.csv").string() + " --metric precomputed --batch-size 4 --batches 1");
  CHECK(t2.out == t.out);

  io::write_text(dir / "three.csv", "x,y\n0,0\n1,0\n1,1\n");
  CHECK(cli(dir, "delta --input " + (dir / "three.csv").string()).code == 2);
  CHECK(cli(dir, "delta --input " + (dir / "missing.csv").string()).code == 2);
  CHECK(cli(dir, "delta --input " + (dir / "square.csv").string() + " --metric cosine").code == 2);
  fs::remove_all(dir);
}

TEST_CASE("train writes per-fold results and a reproducible summary") {
  const fs::path dir = scratch("train");
  io::write_text(dir / "config.json", small_config().dump());
  const auto a = cli(dir, "train --config " + (dir / "config.json").string() + " --out " + (dir / "a").string());
  REQUIRE(a.code == 0);
  CHECK(a.err.find("fold 0 epoch") != std::string::npos);
  const json summary = json::parse(a.out);
  REQUIRE(summary.at("folds").size() == 4);
  for (const auto& f : summary.at("folds")) {
    for (const char* key : {"fold", "balanced_accuracy", "macro_f1", "curvatures", "lambda", "best_epoch"}) {
      CHECK(f.contains(key));
    }
    CHECK(f.at("curvatures").size() == 3);
  }
  for (const char* key : {"balanced_accuracy", "macro_f1", "curvatures", "lambda"}) {
    CHECK(summary.at("summary").contains(key));
  }
  for (int f = 0; f < 4; ++f) {
    const fs::path fold = dir / "a" / ("fold_" + std::to_string(f));
    CHECK(fs::exists(fold / "checkpoint.json"));
    const json m = json::parse(io::read_text(fold / "metrics.json"));
    CHECK(m.at("history").size() == m.at("epochs_run").get<std::size_t>());
  }
  CHECK(io::read_text(dir / "a" / "summary.json") == a.out);

  const auto b = cli(dir, "train --quiet --config " + (dir / "config.json").string() + " --out " + (dir / "b").string());
  REQUIRE(b.code == 0);
  CHECK(b.err.empty());
  CHECK(io::read_text(dir / "a" / "summary.json") == io::read_text(dir / "b" / "summary.json"));
  fs::remove_all(dir);
}

TEST_CASE("lr = 0 leaves every fold at its initialization") {
  const fs::path dir = scratch("lr0");
  json cfg = small_config();
  cfg["train"]["lr"] = 0.0;
  io::write_text(dir / "config.json", cfg.dump());
  REQUIRE(cli(dir, "train --quiet --config " + (dir / "config.json").string() + " --out " + (dir / "out").string())
              .code == 0);
  const auto rc = run::run_config_from_json(cfg);
  const auto spec = run::make_model_spec(rc.model, run::load_data(rc));
  const json summary = json::parse(io::read_text(dir / "out" / "summary.json"));
  for (int f = 0; f < 4; ++f) {
    const auto m = checkpoint::load(dir / "out" / ("fold_" + std::to_string(f)) / "checkpoint.json");
    const auto init = model::MoceModel::init(spec, run::sub_seed(rc.seed, 3 * f + 2));
    CHECK(model::flatten(m.spec, m.params) == model::flatten(init.spec, init.params));
    const auto& fj = summary.at("folds")[f];
    CHECK(fj.at("lambda").get<double>() == doctest::Approx(0.3).epsilon(1e-15));
    for (const auto& k : fj.at("curvatures")) CHECK(k.get<double>() == doctest::Approx(-2.0).epsilon(1e-15));
  }
  fs::remove_all(dir);
}

TEST_CASE("schema violations leave no output behind") {
  const fs::path dir = scratch("schema");
  json cfg = small_config();
  cfg["train"]["learning_rate"] = 0.1;
  io::write_text(dir / "unknown.json", cfg.dump());
  const auto r = cli(dir, "train --config " + (dir / "unknown.json").string() + " --out " + (dir / "out").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("learning_rate") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out"));

  cfg = small_config();
  cfg["model"]["k_init"] = {{"deep", -1.0}};
  io::write_text(dir / "kinit.json", cfg.dump());
  CHECK(cli(dir, "train --config " + (dir / "kinit.json").string() + " --out " + (dir / "out").string()).code == 2);
  CHECK_FALSE(fs::exists(dir / "out"));

  cfg = small_config();
  cfg["eval"]["folds"] = 20;
  io::write_text(dir / "folds.json", cfg.dump());
  CHECK(cli(dir, "train --config " + (dir / "folds.json").string() + " --out " + (dir / "out").string()).code == 2);
  CHECK_FALSE(fs::exists(dir / "out"));
  fs::remove_all(dir);
}

TEST_CASE("eval reproduces the training record and rejects bad inputs") {
  const fs::path dir = scratch("eval");
  io::write_text(dir / "config.json", small_config().dump());
  REQUIRE(cli(dir, "train --quiet --config " + (dir / "config.json").string() + " --out " + (dir / "out").string())
              .code == 0);
  const fs::path ckpt = dir / "out" / "fold_1" / "checkpoint.json";
  const json record = json::parse(io::read_text(dir / "out" / "fold_1" / "metrics.json"));

  auto groups = [](const json& list) {
    std::string s;
    for (const auto& g : list) s += (s.empty() ? "" : ",") + std::to_string(g.get<int>());
    return s;
  };
  const std::string data = (dir / "out" / "data").string();
  const auto test = cli(dir, "eval --checkpoint " + ckpt.string() + " --data " + data + " --groups " +
                                 groups(record.at("test_groups")));
  REQUIRE(test.code == 0);
  const json got = json::parse(test.out);
  for (const char* key : {"balanced_accuracy", "macro_f1", "recalls", "confusion", "curvatures", "lambda"}) {
    CHECK(got.at(key) == record.at(key));
  }
  // The validation groups reproduce the best epoch's validation record.
  const auto val = cli(dir, "eval --checkpoint " + ckpt.string() + " --data " + data + " --groups " +
                                groups(record.at("validation_groups")));
  REQUIRE(val.code == 0);
  const int best = record.at("best_epoch").get<int>();
  const json& best_val = record.at("history")[best - 1];
  CHECK(json::parse(val.out).at("balanced_accuracy") == best_val.at("balanced_accuracy"));
  CHECK(json::parse(val.out).at("confusion") == best_val.at("confusion"));

  json bumped = json::parse(io::read_text(ckpt));
  bumped["format_version"] = 2;
  io::write_text(dir / "v2.json", bumped.dump());
  CHECK(cli(dir, "eval --checkpoint " + (dir / "v2.json").string() + " --data " + data).code == 3);

  io::write_text(dir / "spec.json", R"({"samples_per_subject": 4, "modalities": [
    {"name": "deep", "depth": 7, "dim": 10}, {"name": "mid", "depth": 4, "dim": 32},
    {"name": "shallow", "depth": 2, "dim": 16}]})");
  REQUIRE(cli(dir, "gen --spec " + (dir / "spec.json").string() + " --out " + (dir / "narrow").string()).code == 0);
  const auto dim = cli(dir, "eval --checkpoint " + ckpt.string() + " --data " + (dir / "narrow").string());
  CHECK(dim.code == 2);
  CHECK(dim.err.find("'deep' has 10 features") != std::string::npos);
  CHECK(cli(dir, "eval --checkpoint " + ckpt.string() + " --data " + data + " --groups 99").code == 2);
  fs::remove_all(dir);
}

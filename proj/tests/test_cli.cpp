#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "hsspn/cli.hpp"
#include "hsspn/data.hpp"
#include "hsspn/evaluation.hpp"
#include "hsspn/oracle.hpp"

using namespace hsspn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;

  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("hsspn-test-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }

  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Run {
  int code = 0;
  std::string out, err;

  /// Value of the first `key: value` line.
  std::string operator[](const std::string& key) const {
    std::istringstream in(out);
    std::string line;
    while (std::getline(in, line))
      if (line.rfind(key + ": ", 0) == 0) return line.substr(key.size() + 2);
    return {};
  }
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("average precision") {
  const double scores[] = {0.9, 0.8, 0.3, 0.1};
  const bool perfect[] = {true, true, false, false};
  CHECK(average_precision(scores, perfect) == 1.0);
  const bool single[] = {true, false, false, false};
  CHECK(average_precision(scores, single) == 1.0);
  const bool last[] = {false, false, false, true};
  CHECK(average_precision(scores, last) == doctest::Approx(0.25));
  const bool none[] = {false, false, false, false};
  CHECK(average_precision(scores, none) == 0.0);

  double total = 0;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    std::mt19937_64 rng(s);
    std::uniform_real_distribution<double> u;
    std::vector<double> sc(1000);
    std::unique_ptr<bool[]> pos(new bool[1000]);
    for (std::size_t i = 0; i < 1000; ++i) {
      sc[i] = u(rng);
      pos[i] = u(rng) < 0.3;
    }
    total += average_precision(sc, std::span<const bool>(pos.get(), 1000));
  }
  CHECK(std::abs(total / 20 - 0.3) <= 0.1);
}

TEST_CASE("verify passes and catches a perturbed fixture") {
  CHECK(run({"verify"}).code == cli::kOk);
  const Run bad = run({"verify", "--perturb-fixture", "0.01"});
  CHECK(bad.code == cli::kVerifyFailed);
  CHECK(bad.out.find("FAIL") != std::string::npos);
}

TEST_CASE("generate") {
  TempDir dir;
  const Run r = run({"generate", "--preset", "mirror", "--images", "200", "--out", dir / "d.txt"});
  REQUIRE(r.code == cli::kOk);
  CHECK(r["config.seed"] == "1");
  const Dataset d = load_dataset(dir / "d.txt");
  CHECK(d.records.size() == 400);
  CHECK(d.num_parts == 12);

  write(dir / "bad.spec", "synth v1\nclasses 2\njitter -3\n");
  const Run bad = run({"generate", "--spec", dir / "bad.spec", "--out", dir / "e.txt"});
  CHECK(bad.code == cli::kInputError);
  CHECK(bad.err.find("jitter") != std::string::npos);
  CHECK(run({"generate", "--preset", "spiral", "--out", dir / "f.txt"}).code == cli::kInputError);
}

TEST_CASE("config file values yield to flags") {
  TempDir dir;
  write(dir / "run.cfg", "# defaults\nseed = 7\ntau=0.4\n");
  const Run r = run({"--config", dir / "run.cfg", "--seed", "9", "generate", "--preset", "mirror", "--images", "3",
                     "--out", dir / "d.txt"});
  REQUIRE(r.code == cli::kOk);
  CHECK(r["config.seed"] == "9");
  CHECK(r["config.tau"] == "0.4");
  write(dir / "typo.cfg", "sead = 7\n");
  CHECK(run({"--config", dir / "typo.cfg", "verify"}).code == cli::kInputError);
}

TEST_CASE("cluster") {
  TempDir dir;
  const PlantedBlobs b = planted_blobs(10, 3, 12.0, 2);
  FeatureSet f;
  f.values = b.features;
  for (Eigen::Index i = 0; i < b.features.rows(); ++i) f.ids.push_back("v" + std::to_string(i));
  write(dir / "f.txt", format_features(f));

  const Run a = run({"cluster", "--features", dir / "f.txt", "--clusters", "4", "--out", dir / "a.txt"});
  const Run c = run({"cluster", "--features", dir / "f.txt", "--clusters", "4", "--out", dir / "b.txt"});
  REQUIRE(a.code == cli::kOk);
  CHECK(slurp(dir / "a.txt") == slurp(dir / "b.txt"));
  CHECK_FALSE(slurp(dir / "a.txt").empty());

  const Run over = run({"cluster", "--features", dir / "f.txt", "--clusters", "41"});
  CHECK(over.code == cli::kInputError);
}

TEST_CASE("train, evaluate, classify and inspect") {
  TempDir dir;
  REQUIRE(run({"generate", "--preset", "mirror", "--images", "30", "--out", dir / "d.txt"}).code == cli::kOk);
  REQUIRE(run({"--seed", "2", "generate", "--preset", "mirror", "--images", "20", "--out", dir / "t.txt"}).code ==
          cli::kOk);

  const Run flat = run({"--mode", "fs-spn", "--disc-epochs", "1", "train", "--data", dir / "d.txt", "--out", dir / "fs"});
  REQUIRE(flat.code == cli::kOk);
  CHECK(flat["pair_count"] == "66");
  CHECK(flat["flat_pair_count"] == "66");

  const Run ihs = run({"--disc-epochs", "2", "train", "--data", dir / "d.txt", "--out", dir / "ihs"});
  REQUIRE(ihs.code == cli::kOk);
  CHECK(std::stoul(ihs["pair_count"]) < 66);
  const Run again = run({"--disc-epochs", "2", "train", "--data", dir / "d.txt", "--out", dir / "ihs2"});
  REQUIRE(again.code == cli::kOk);
  for (const auto& entry : fs::directory_iterator(dir.path / "ihs")) {
    const std::string name = entry.path().filename().string();
    if (name == "train.log") continue;
    CHECK_MESSAGE(slurp(entry.path().string()) == slurp(dir / ("ihs2/" + name)), name);
  }

  const Run ev = run({"evaluate", "--model", dir / "ihs", "--data", dir / "t.txt"});
  REQUIRE(ev.code == cli::kOk);
  CHECK_FALSE(ev["map"].empty());
  CHECK_FALSE(ev["confusion_row_1"].empty());

  const Run cl = run({"classify", "--model", dir / "ihs", "--data", dir / "t.txt", "--out", dir / "labels.txt"});
  CHECK(cl.code == cli::kOk);
  CHECK_FALSE(slurp(dir / "labels.txt").empty());

  Dataset wider = load_dataset(dir / "t.txt");
  wider.num_parts = 13;
  save_dataset(wider, dir / "w.txt");
  CHECK(run({"evaluate", "--model", dir / "ihs", "--data", dir / "w.txt"}).code == cli::kMismatch);

  const Run ins = run({"inspect", "--model", dir / "ihs", "--data", dir / "t.txt", "--ablate-pairs", "2"});
  REQUIRE(ins.code == cli::kOk);
  CHECK_FALSE(ins["class_0_nodes"].empty());
  CHECK_FALSE(ins["class_0_shared_edges"].empty());
  CHECK(ins["flat_pairs_unordered"] == "66");
  CHECK(ins["flat_pairs_ordered"] == "132");
  CHECK(ins.out.find("ablation_1: pair=") != std::string::npos);

  CHECK(run({"train", "--data", dir / "missing.txt", "--out", dir / "x"}).code == cli::kInputError);
}

TEST_CASE("ablation lists only modeled pairs") {
  const Dataset data = generate_synthetic(mirror_preset(30, 3));
  TrainConfig tc;
  tc.discriminative_epochs = 1;
  const Bundle b = train_all(data, StructureConfig{}, tc);
  std::set<PairKey> modeled;
  for (const Network& net : b.networks)
    for (const VariableId& v : net.variables())
      if (v.kind == VariableKind::SpatialPair) modeled.insert(v.pair_key());
  const auto rows = ablate_pairs(b, data);
  CHECK(rows.size() == modeled.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(modeled.count(rows[i].pair) == 1);
    CHECK(rows[i].gadgets > 0);
    if (i) CHECK(rows[i - 1].drop >= rows[i].drop);
  }
}

}  // TEST_SUITE

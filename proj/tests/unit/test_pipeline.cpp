#include <cstdlib>
#include <map>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "../support/tempdir.hpp"
#include "auggen/pipeline/config.hpp"
#include "auggen/pipeline/errors.hpp"
#include "auggen/pipeline/format.hpp"
#include "auggen/pipeline/hash.hpp"
#include "auggen/pipeline/ledger.hpp"
#include "auggen/pipeline/pipeline.hpp"
#include "auggen/pipeline/report.hpp"
#include "doctest.h"

using namespace auggen;
using namespace auggen::pipeline;
using auggen::testing::read_file;
using auggen::testing::TempDir;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = AUGGEN_SOURCE_DIR;

PipelineConfig tiny(const fs::path& out) {
  PipelineConfig c = load_config(kSource / "configs/tiny.json");
  c.out = out;
  return c;
}

// Relative path -> sha256 for every file under root except the ledger.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == kLedgerFileName) continue;
    out[fs::relative(e.path(), root).generic_string()] = sha256_file(e.path());
  }
  return out;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          cur += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        f.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    f.push_back(cur);
    rows.push_back(f);
  }
  return rows;
}

// One completed tiny run shared by the tests below.
const fs::path& base_run() {
  static TempDir dir("pipeline_base");
  static bool done = [] {
    Pipeline p(tiny(dir.path()));
    p.run_all();
    return true;
  }();
  (void)done;
  return dir.path();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(AUGGEN_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("format helpers") {
  CHECK(format_count(320) == "320");
  CHECK(format_count(1600) == "1.6K");
  CHECK(format_count(10000) == "10K");
  CHECK(format_count(200000) == "200K");
  CHECK(format_count(1200000) == "1.2M");
  CHECK(mix_key(10000, 20) == "(10K × 20)");
  CHECK(mix_key(2, 4) == "(2 × 4)");
  CHECK(format_ratio(1.6875) == "1.69");
  CHECK(format_ratio(1.5) == "1.5");
  CHECK(format_ratio(1.0) == "1");
  CHECK(percent_cell({0.3443, 0.3543}) == "34.93±0.50");
  CHECK(percent_cell({}) == "FAILED");
  const auto ms = mean_std({1, 2, 3, 4});
  CHECK(ms.mean == doctest::Approx(2.5));
  CHECK(ms.std == doctest::Approx(std::sqrt(1.25)));
  CHECK(csv_row({"a", "b,c", "d\"e"}) == "a,\"b,c\",\"d\"\"e\"\n");
}

TEST_CASE("text table pads by code point") {
  const std::string t = text_table({{"key", "v"}, {"(2 × 4)", "1"}});
  std::istringstream in(t);
  std::string header, rule, row;
  std::getline(in, header);
  std::getline(in, rule);
  std::getline(in, row);
  // "(2 × 4)" is 7 code points but 8 bytes.
  CHECK(header.find('v') == 9);
  CHECK(row.find('1') == 10);
}

TEST_CASE("sha256 test vector") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("config round trip and strictness") {
  const PipelineConfig d;
  const PipelineConfig back = PipelineConfig::from_json(d.to_json());
  CHECK(back.canonical() == d.canonical());

  const PipelineConfig t = load_config(kSource / "configs/tiny.json");
  CHECK(t.dataset.toy.num_classes == 6);
  CHECK(t.discriminator.backbone.image_size == 16);
  CHECK(PipelineConfig::from_json(t.to_json()).hash() == t.hash());

  SUBCASE("whitespace and key order do not change the hash") {
    TempDir dir("cfg");
    {
      std::ofstream a(dir / "a.json");
      a << R"({"seed": 5, "repro": {"samples_per_class": 7}})";
      std::ofstream b(dir / "b.json");
      b << "// comment\n{\n  \"repro\" : { \"samples_per_class\" : 7 },\n\n  \"seed\":5\n}\n";
    }
    CHECK(load_config(dir / "a.json").hash() == load_config(dir / "b.json").hash());
    CHECK(load_config(dir / "a.json").hash() != PipelineConfig{}.hash());
  }
  SUBCASE("out does not enter the hash") {
    PipelineConfig a, b;
    b.out = "elsewhere";
    CHECK(a.hash() == b.hash());
  }
  SUBCASE("errors") {
    using J = Json;
    CHECK_THROWS_AS(PipelineConfig::from_json(J::parse(R"({"sed": 1})")), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::from_json(J::parse(R"({"dataset": {"clases": 4}})")), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::from_json(J::parse(R"({"dataset": {"classes": "four"}})")), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::from_json(J::parse(R"({"dataset": {"classes": 1}})")), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::from_json(J::parse(R"({"auggen": {"weights": "third"}})")), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::from_json(J::parse(R"({"discriminator": {"seeds": [1, 1]}})")), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::from_json(J::parse(R"({"mixsearch": {"policy": "full"}})")), ConfigError);
    CHECK_NOTHROW(PipelineConfig::from_json(J::parse(R"({"mixsearch": {"policy": "full", "diagonal_only": false}})")));
    CHECK_THROWS_AS(PipelineConfig::from_json(J::parse(R"({"skip": ["train-everything"]})")), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
  }
}

TEST_CASE("stamps and ledger") {
  TempDir root("ledger");
  fs::create_directories(root / "s/sub");
  std::ofstream(root / "s/b.txt") << "b";
  std::ofstream(root / "s/sub/a.txt") << "a";

  const auto files = digest_tree(root / "s", root.path());
  REQUIRE(files.size() == 2);
  CHECK(files[0].path == "s/b.txt");
  CHECK(files[1].path == "s/sub/a.txt");
  CHECK(files[0].sha256 == sha256_hex("b"));

  StageStamp st;
  st.stage = "s";
  st.inputs_hash = "in";
  st.seed = 12345678901234567890ull;
  st.files = files;
  st.outputs_hash = outputs_hash(files);
  write_stamp(st, root / "s");
  CHECK(digest_tree(root / "s", root.path()).size() == 2);  // the stamp is not an output

  const auto back = read_stamp(root / "s");
  REQUIRE(back);
  CHECK(back->seed == st.seed);
  CHECK(back->files == st.files);
  CHECK(back->outputs_hash == st.outputs_hash);
  CHECK(stamp_matches_disk(*back, root.path()));

  std::ofstream(root / "s/b.txt") << "changed";
  CHECK_FALSE(stamp_matches_disk(*back, root.path()));
  std::ofstream(root / "s/b.txt") << "b";
  CHECK(stamp_matches_disk(*back, root.path()));
  std::ofstream(root / "s/extra.txt") << "x";
  CHECK_FALSE(stamp_matches_disk(*back, root.path()));

  CHECK_FALSE(read_stamp(root / "missing"));

  RunLedger ledger(root / kLedgerFileName);
  LedgerRecord r;
  r.stamp = st;
  r.config_hash = "cfg";
  r.wall_seconds = 1.5;
  ledger.append(r);
  r.cache_hit = true;
  ledger.append(r);
  const auto recs = ledger.read();
  REQUIRE(recs.size() == 2);
  CHECK_FALSE(recs[0].cache_hit);
  CHECK(recs[1].cache_hit);
  CHECK(recs[1].stamp.files == st.files);
  CHECK(recs[0].wall_seconds == 1.5);
}

TEST_CASE("stage before its upstream names the producing command") {
  TempDir dir("upstream");
  Pipeline p(tiny(dir.path()));
  try {
    p.run_stage("train-disc");
    FAIL("expected UpstreamMissing");
  } catch (const UpstreamMissing& e) {
    CHECK(e.command() == "synth-data");
    CHECK(std::string(e.what()).find("auggen synth-data") != std::string::npos);
  }
  p.run_stage("synth-data");
  try {
    p.run_stage("make-aug");
    FAIL("expected UpstreamMissing");
  } catch (const UpstreamMissing& e) {
    CHECK(e.command() == "train-gen");
  }
  CHECK_THROWS_AS(p.run_preset("mixing-sweep"), UpstreamMissing);
  CHECK_THROWS_AS(p.run_stage("not-a-stage"), ConfigError);
}

TEST_CASE("run-all outputs, caching and ledger") {
  const fs::path& root = base_run();
  for (const auto& s : stage_names()) CHECK(fs::exists(root / s / kStageFileName));
  CHECK(fs::exists(root / "report/heatmap.svg"));
  CHECK(fs::exists(root / "report/roc.svg"));
  CHECK(fs::exists(root / "report/comparison.csv"));

  const auto eval = Json::parse(read_text(root / "eval/eval.json"));
  std::set<std::string> models;
  for (const auto& r : eval) models.insert(r.at("model").get<std::string>());
  CHECK(models == std::set<std::string>{"M_orig", "M_mix"});

  const auto cmp = parse_csv(read_text(root / "report/comparison.csv"));
  REQUIRE(cmp.size() == 3);
  CHECK(cmp[0][0] == "Method/Data");
  CHECK(cmp[0][4] == "B-1e-1");
  CHECK(cmp[1][0] == "D^orig");
  CHECK(cmp[2][0] == "D^orig + D^aug (Ours)");

  const auto before = snapshot(root);
  Pipeline again(tiny(root));
  for (const auto& o : again.run_all()) CHECK_MESSAGE(o.cache_hit, o.stage);
  CHECK(snapshot(root) == before);

  // Every emitted file is listed by some stage stamp.
  std::set<std::string> listed;
  for (const auto& s : stage_names()) {
    const auto st = read_stamp(root / s);
    for (const auto& f : st->files) listed.insert(f.path);
  }
  for (const auto& [path, sha] : before) {
    if (fs::path(path).filename() == kStageFileName) continue;
    CHECK_MESSAGE(listed.count(path), path);
  }

  const auto recs = RunLedger(root / kLedgerFileName).read();
  CHECK(recs.size() >= 2 * stage_names().size());
}

TEST_CASE("deleting a stage reproduces it bit-exactly") {
  const fs::path& root = base_run();
  const auto before = snapshot(root);
  fs::remove_all(root / "eval");
  Pipeline p(tiny(root));
  CHECK_THROWS_AS(p.run_stage("report"), UpstreamMissing);
  CHECK_FALSE(p.run_stage("eval").cache_hit);
  CHECK(p.run_stage("report").cache_hit);
  CHECK(snapshot(root) == before);
}

TEST_CASE("tampered upstream is detected") {
  const fs::path& root = base_run();
  const fs::path file = root / "grid-search/report.txt";
  const std::string original = read_text(file);
  std::ofstream(file, std::ios::binary) << original << "x";
  Pipeline p(tiny(root));
  CHECK_THROWS_AS(p.run_stage("make-aug"), UpstreamMissing);
  std::ofstream(file, std::ios::binary) << original;
  Pipeline q(tiny(root));
  CHECK(q.run_stage("make-aug").cache_hit);
}

TEST_CASE("config change invalidates only dependent stages") {
  TempDir dir("invalidate");
  fs::copy(base_run(), dir.path(), fs::copy_options::recursive);
  PipelineConfig c = tiny(dir.path());
  c.eval.k = 2;  // feeds gen-metrics only
  Pipeline p(c);
  std::map<std::string, bool> hit;
  for (const auto& o : p.run_all()) hit[o.stage] = o.cache_hit;
  CHECK(hit["eval"]);
  CHECK(hit["train-mixed"]);
  CHECK_FALSE(hit["gen-metrics"]);
  CHECK_FALSE(hit["report"]);
}

TEST_CASE("two runs are byte-identical and grid search ignores --jobs") {
  TempDir dir("determinism");
  RunOptions two;
  two.jobs = 2;
  Pipeline p(tiny(dir.path()), two);
  p.run_all();
  CHECK(snapshot(dir.path()) == snapshot(base_run()));
}

TEST_CASE("presets") {
  TempDir dir("presets");
  fs::copy(base_run(), dir.path(), fs::copy_options::recursive);
  Pipeline p(tiny(dir.path()));
  const fs::path pre = dir.path() / "presets";

  SUBCASE("weighting-ablation") {
    p.run_preset("weighting-ablation");
    const auto t = parse_csv(read_text(pre / "weighting-ablation/weighting-ablation.csv"));
    REQUIRE(t.size() == 5);
    CHECK(t[0].front() == "C Weight Method");
    CHECK(t[0].back() == "m^total");
    CHECK(t[1][0] == "W/ Half");
    CHECK(t[2][0] == "W/ Full");
    CHECK(t[3][0] == "W/ Random");
    CHECK(t[4][0] == "W/ Half++");
    CHECK(t[3].back() == "N/A");
    for (std::size_t r = 1; r < t.size(); ++r) {
      CHECK(t[r].size() == t[0].size());
      CHECK(t[r][2] == "0");  // n^r: synthetic data only
    }
  }
  SUBCASE("mixing-sweep") {
    p.run_preset("mixing-sweep");
    const auto t = parse_csv(read_text(pre / "mixing-sweep/mixing-sweep.csv"));
    REQUIRE(t.size() == 6);
    CHECK(t[0][0] == "Syn #Class × #Sample");
    CHECK(t[1][0] == "0");
    CHECK(t[2][0] == "Ours (2 × 2)");
    CHECK(t[5][0] == "Ours (4 × 4)");
    CHECK(t[5][1] == "16");
    // The (4 × 4) cell is the base D^aug and reuses the base M_mix models.
    const auto cmp = parse_csv(read_text(dir.path() / "report/comparison.csv"));
    CHECK(t[5][3] == cmp[2][4]);
  }
  SUBCASE("real-vs-synth") {
    p.run_preset("real-vs-synth");
    const auto t = parse_csv(read_text(pre / "real-vs-synth/real-vs-synth.csv"));
    REQUIRE(t.size() == 6);
    CHECK(t[0].back() == "Ratio");
    CHECK(t[2][0] == "(2 × 4)");
    CHECK(t[4][1] == "180 + 60");
    CHECK(t[4].back() == "1.33");
    CHECK(t[5].back() == "1.67");
    const auto s = Json::parse(read_text(pre / "real-vs-synth/summary.json"));
    CHECK(s.at("rows").size() == 2);
  }
  SUBCASE("metrics-correlation") {
    p.run_preset("metrics-correlation");
    const auto t = parse_csv(read_text(pre / "metrics-correlation/metrics-correlation.csv"));
    CHECK(t.size() == 4);
    const auto c = parse_csv(read_text(pre / "metrics-correlation/correlations.csv"));
    REQUIRE(c.size() == 5);
    CHECK(c[0] == std::vector<std::string>{"metric", "n", "pearson", "spearman"});
  }
  SUBCASE("rerun is a cache hit") {
    p.run_preset("weighting-ablation");
    Pipeline q(tiny(dir.path()));
    CHECK(q.run_preset("weighting-ablation").cache_hit);
  }
}

TEST_CASE("cli exit codes") {
  TempDir dir("cli");
  const std::string out = " --out " + dir.path().string();
  const std::string cfg = " --config " + (kSource / "configs/tiny.json").string();
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") == 2);
  CHECK(run_cli("no-such-command") == 2);
  CHECK(run_cli("synth-data --format pdf" + cfg + out) == 2);
  CHECK(run_cli("synth-data --jobs 0" + cfg + out) == 2);
  CHECK(run_cli("run-all --preset nope" + cfg + out) == 2);
  CHECK(run_cli("train-gen --stage eval" + cfg + out) == 2);
  {
    std::ofstream(dir / "bad.json") << R"({"dataset": {"classes": 0}})";
    CHECK(run_cli("synth-data --config " + (dir / "bad.json").string() + out) == 2);
    std::ofstream(dir / "broken.json") << "{";
    CHECK(run_cli("synth-data --config " + (dir / "broken.json").string() + out) == 2);
  }
  CHECK(run_cli("train-gen" + cfg + out) == 3);
  CHECK(run_cli("run-all --preset mixing-sweep" + cfg + out) == 3);
  CHECK(run_cli("run-all --stage synth-data" + cfg + out) == 0);
  CHECK(fs::exists(dir / "synth-data" / kStageFileName));
  CHECK_FALSE(fs::exists(dir / "train-disc"));
  CHECK(run_cli("synth-data --seed 99" + cfg + out) == 0);
  CHECK(read_stamp(dir / "synth-data")->seed != read_stamp(base_run() / "synth-data")->seed);

  // A learning rate this large overflows the generator.
  PipelineConfig c = load_config(kSource / "configs/tiny.json");
  c.generator.adam.learning_rate = 1e8;
  std::ofstream(dir / "nan.json") << c.to_json().dump();
  CHECK(run_cli("run-all --config " + (dir / "nan.json").string() + " --out " + (dir / "nan").string()) == 4);
}

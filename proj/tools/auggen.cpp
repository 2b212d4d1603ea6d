#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "auggen/error.hpp"
#include "auggen/pipeline/config.hpp"
#include "auggen/pipeline/errors.hpp"
#include "auggen/pipeline/pipeline.hpp"

namespace {

using namespace auggen;
using namespace auggen::pipeline;

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kUpstream = 3, kNumerical = 4 };

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string stage;
  std::string preset;
  int jobs = 1;
  std::vector<std::string> formats;
};

void log_line(const std::string& msg) {
  const std::time_t t = std::time(nullptr);
  char buf[16];
  std::strftime(buf, sizeof(buf), "%H:%M:%S", std::localtime(&t));
  std::cerr << "[" << buf << "] " << msg << "\n" << std::flush;
}

void print_outcome(const StageOutcome& o) {
  char secs[32];
  std::snprintf(secs, sizeof(secs), "%.1fs", o.wall_seconds);
  std::cout << o.stage << "\t" << (o.cache_hit ? "cached" : "ran") << "\t" << secs << "\t"
            << o.outputs_hash.substr(0, 16) << "\n";
}

PipelineConfig resolve_config(const Flags& f) {
  PipelineConfig cfg = f.config.empty() ? PipelineConfig{} : load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.out = f.out;
  cfg.validate();
  return cfg;
}

int run(const std::string& command, const Flags& f) {
  if (!f.stage.empty() && command != "run-all") throw ConfigError("--stage only applies to run-all");
  if (!f.preset.empty() && command != "run-all") throw ConfigError("--preset only applies to run-all");
  if (!f.stage.empty() && !is_stage(f.stage)) throw ConfigError("unknown stage '" + f.stage + "'");
  if (!f.preset.empty() && !is_preset(f.preset)) throw ConfigError("unknown preset '" + f.preset + "'");
  if (!f.stage.empty() && !f.preset.empty()) throw ConfigError("--stage and --preset are exclusive");
  if (f.jobs < 1) throw ConfigError("--jobs must be at least 1");

  RunOptions opts;
  opts.jobs = f.jobs;
  if (!f.formats.empty()) opts.formats = f.formats;
  opts.log = log_line;
  Pipeline p(resolve_config(f), opts);

  if (command != "run-all") {
    print_outcome(p.run_stage(command));
    return kOk;
  }
  if (!f.preset.empty()) {
    print_outcome(p.run_preset(f.preset));
    return kOk;
  }
  if (f.stage.empty()) {
    for (const auto& o : p.run_all()) print_outcome(o);
    return kOk;
  }
  // Up to and including --stage.
  for (const auto& s : stage_names()) {
    print_outcome(p.run_stage(s));
    if (s == f.stage) break;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AugGen: class-mixing synthetic augmentation for embedding models"};
  app.require_subcommand(1);
  app.fallthrough();

  Flags f;
  app.add_option("--config", f.config, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "root seed, overrides the config");
  app.add_option("--out", f.out, "run directory, overrides the config");
  app.add_option("--stage", f.stage, "run-all: stop after this stage");
  app.add_option("--preset", f.preset, "run-all: run this preset experiment on the existing base run");
  app.add_option("--jobs", f.jobs, "worker threads for the grid search");
  app.add_option("--format", f.formats, "report formats (csv, txt, svg)")
      ->delimiter(',')
      ->check(CLI::IsMember({"csv", "txt", "svg"}));

  std::string command;
  for (const auto& s : stage_names())
    app.add_subcommand(s, "run the " + s + " stage")->callback([&command, s] { command = s; });
  app.add_subcommand("run-all", "run every stage, or a preset with --preset")->callback([&command] {
    command = "run-all";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    return run(command, f);
  } catch (const UpstreamMissing& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUpstream;
  } catch (const InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const FormatError& e) {
    std::cerr << "unreadable artifact: " << e.what() << "\n";
    return kUpstream;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

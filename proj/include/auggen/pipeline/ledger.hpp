#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "auggen/pipeline/config.hpp"

namespace auggen::pipeline {

inline constexpr const char* kCodeVersion = "auggen-0.1.0";
inline constexpr const char* kStageFileName = "stage.json";
inline constexpr const char* kLedgerFileName = "ledger.jsonl";

struct FileDigest {
  std::string path;  // relative to the run root, '/' separated
  std::string sha256;

  friend bool operator==(const FileDigest&, const FileDigest&) = default;
};

// Written last into every stage directory; its presence marks a finished stage.
struct StageStamp {
  std::string stage;
  std::string inputs_hash;
  std::string outputs_hash;
  std::uint64_t seed = 0;
  std::string code_version = kCodeVersion;
  std::vector<FileDigest> files;

  Json to_json() const;
  static StageStamp from_json(const Json& j);
};

struct LedgerRecord {
  StageStamp stamp;
  std::string config_hash;
  double wall_seconds = 0;
  bool cache_hit = false;
};

// Append-only JSON-lines log; one writer at a time.
class RunLedger {
 public:
  explicit RunLedger(std::filesystem::path file) : file_(std::move(file)) {}
  void append(const LedgerRecord& r) const;
  std::vector<LedgerRecord> read() const;
  const std::filesystem::path& file() const { return file_; }

 private:
  std::filesystem::path file_;
};

// Every regular file under `dir` (recursively) except stamps, sorted by path.
std::vector<FileDigest> digest_tree(const std::filesystem::path& dir, const std::filesystem::path& root);
std::string outputs_hash(const std::vector<FileDigest>& files);

void write_stamp(const StageStamp& s, const std::filesystem::path& dir);
// Empty when absent or unreadable.
std::optional<StageStamp> read_stamp(const std::filesystem::path& dir);
// True when every listed file exists with the recorded digest and no file is missing from the list.
bool stamp_matches_disk(const StageStamp& s, const std::filesystem::path& root);

}  // namespace auggen::pipeline

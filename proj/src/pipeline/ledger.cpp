#include "auggen/pipeline/ledger.hpp"

#include <algorithm>
#include <fstream>

#include "auggen/pipeline/hash.hpp"

namespace auggen::pipeline {

namespace fs = std::filesystem;

Json StageStamp::to_json() const {
  Json f = Json::array();
  for (const auto& d : files) f.push_back(Json{{"path", d.path}, {"sha256", d.sha256}});
  return Json{{"stage", stage},       {"inputs_hash", inputs_hash},   {"outputs_hash", outputs_hash},
              {"seed", seed},         {"code_version", code_version}, {"files", f}};
}

StageStamp StageStamp::from_json(const Json& j) {
  StageStamp s;
  s.stage = j.at("stage").get<std::string>();
  s.inputs_hash = j.at("inputs_hash").get<std::string>();
  s.outputs_hash = j.at("outputs_hash").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.code_version = j.at("code_version").get<std::string>();
  for (const auto& f : j.at("files")) s.files.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>()});
  return s;
}

void RunLedger::append(const LedgerRecord& r) const {
  Json j = r.stamp.to_json();
  j["config_hash"] = r.config_hash;
  j["wall_seconds"] = r.wall_seconds;
  j["cache_hit"] = r.cache_hit;
  fs::create_directories(file_.parent_path());
  std::ofstream out(file_, std::ios::app);
  if (!out) throw Error("cannot append to " + file_.string());
  out << j.dump() << '\n';
}

std::vector<LedgerRecord> RunLedger::read() const {
  std::vector<LedgerRecord> out;
  std::ifstream in(file_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      Json j = Json::parse(line);
      LedgerRecord r;
      r.stamp = StageStamp::from_json(j);
      r.config_hash = j.at("config_hash").get<std::string>();
      r.wall_seconds = j.at("wall_seconds").get<double>();
      r.cache_hit = j.at("cache_hit").get<bool>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(file_.string() + ": bad ledger line: " + e.what());
    }
  }
  return out;
}

std::vector<FileDigest> digest_tree(const fs::path& dir, const fs::path& root) {
  std::vector<FileDigest> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == kStageFileName) continue;
    out.push_back({fs::relative(e.path(), root).generic_string(), sha256_file(e.path())});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  return out;
}

std::string outputs_hash(const std::vector<FileDigest>& files) {
  std::string s;
  for (const auto& f : files) s += f.path + '\t' + f.sha256 + '\n';
  return sha256_hex(s);
}

void write_stamp(const StageStamp& s, const fs::path& dir) {
  std::ofstream out(dir / kStageFileName);
  if (!out) throw Error("cannot write " + (dir / kStageFileName).string());
  out << s.to_json().dump(1) << '\n';
}

std::optional<StageStamp> read_stamp(const fs::path& dir) {
  std::ifstream in(dir / kStageFileName);
  if (!in) return std::nullopt;
  try {
    return StageStamp::from_json(Json::parse(in));
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

bool stamp_matches_disk(const StageStamp& s, const fs::path& root) {
  if (outputs_hash(s.files) != s.outputs_hash) return false;
  return digest_tree(root / s.stage, root) == s.files;
}

}  // namespace auggen::pipeline

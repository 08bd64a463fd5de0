#include "store/manifest.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <json.hpp>

#include "common/binio.hpp"
#include "common/error.hpp"
#include "common/hash.hpp"

namespace crlab::store {

const char* status_name(StageStatus s) {
  switch (s) {
    case StageStatus::kPending: return "pending";
    case StageStatus::kRunning: return "running";
    case StageStatus::kDone: return "done";
    case StageStatus::kFailed: return "failed";
  }
  return "pending";
}

StageStatus parse_status(const std::string& s) {
  if (s == "pending") return StageStatus::kPending;
  if (s == "running") return StageStatus::kRunning;
  if (s == "done") return StageStatus::kDone;
  if (s == "failed") return StageStatus::kFailed;
  throw_io("manifest: unknown stage status '" + s + "'");
}

void RunManifest::set_status(const std::string& stage, StageStatus s) {
  for (auto& [name, status] : stages) {
    if (name != stage) continue;
    if (status == StageStatus::kDone && s != StageStatus::kDone) {
      throw_usage("manifest: stage '" + stage + "' is already done");
    }
    status = s;
    return;
  }
  stages.emplace_back(stage, s);
}

StageStatus RunManifest::status(const std::string& stage) const {
  for (const auto& [name, status] : stages) {
    if (name == stage) return status;
  }
  return StageStatus::kPending;
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["run_id"] = run_id;
  j["created"] = created;
  j["tool_version"] = tool_version;
  j["config_snapshot"] = config_snapshot;
  j["stages"] = nlohmann::ordered_json::array();
  for (const auto& [name, status] : stages) {
    j["stages"].push_back({{"name", name}, {"status", status_name(status)}});
  }
  j["artifacts"] = nlohmann::ordered_json::object();
  for (const auto& [path, digest] : artifacts) j["artifacts"][path] = hex64(digest);
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  RunManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.run_id = j.at("run_id").get<std::string>();
    m.created = j.at("created").get<std::string>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config_snapshot = j.at("config_snapshot").get<std::string>();
    for (const auto& s : j.at("stages")) {
      m.stages.emplace_back(s.at("name").get<std::string>(), parse_status(s.at("status").get<std::string>()));
    }
    for (const auto& [path, digest] : j.at("artifacts").items()) {
      m.artifacts[path] = std::stoull(digest.get<std::string>(), nullptr, 16);
    }
  } catch (const nlohmann::json::exception& e) {
    throw_io(std::string("manifest: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw_io("manifest: malformed digest");
  }
  return m;
}

std::filesystem::path resolve_run_path(const std::filesystem::path& path) {
  if (path.is_absolute()) return path;
  const char* root = std::getenv(kRunRootEnv);
  if (root && *root) return std::filesystem::path(root) / path;
  return path;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunDirectory::RunDirectory(std::filesystem::path root, std::string config_snapshot)
    : root_(std::move(root)) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec) throw_io("cannot create run directory " + root_.string() + ": " + ec.message());
  manifest_.created = utc_timestamp();
  manifest_.config_snapshot = std::move(config_snapshot);
  manifest_.run_id = hex64(fnv1a64(manifest_.config_snapshot, fnv1a64(manifest_.created)));
  write_text_file(root_ / "config.cfg", manifest_.config_snapshot);
  record("config.cfg");
  save();
}

RunDirectory RunDirectory::open(const std::filesystem::path& root) {
  RunDirectory d;
  d.root_ = root;
  d.manifest_ = RunManifest::from_json(read_text_file(root / "manifest.json"));
  return d;
}

std::uint64_t RunDirectory::record(const std::string& relative) {
  const std::uint64_t digest = file_digest(root_ / relative);
  manifest_.artifacts[relative] = digest;
  return digest;
}

void RunDirectory::set_status(const std::string& stage, StageStatus status) {
  manifest_.set_status(stage, status);
  save();
}

void RunDirectory::save() const { write_text_file(root_ / "manifest.json", manifest_.to_json()); }

std::vector<std::string> RunDirectory::verify() const {
  std::vector<std::string> bad;
  for (const auto& [path, digest] : manifest_.artifacts) {
    std::error_code ec;
    if (!std::filesystem::exists(root_ / path, ec) || file_digest(root_ / path) != digest) bad.push_back(path);
  }
  return bad;
}

}  // namespace crlab::store

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace crlab::store {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kRunRootEnv = "CRLAB_RUN_ROOT";

enum class StageStatus { kPending, kRunning, kDone, kFailed };

const char* status_name(StageStatus s);
StageStatus parse_status(const std::string& s);

struct RunManifest {
  std::string run_id;
  std::string created;  // UTC, ISO 8601
  std::string config_snapshot;
  std::vector<std::pair<std::string, StageStatus>> stages;
  std::map<std::string, std::uint64_t> artifacts;  // path relative to the run dir -> FNV-1a digest
  std::string tool_version = kToolVersion;

  // Adds the stage when unknown. A done stage never changes status again.
  void set_status(const std::string& stage, StageStatus status);
  StageStatus status(const std::string& stage) const;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

// Relative paths resolve under $CRLAB_RUN_ROOT when it is set.
std::filesystem::path resolve_run_path(const std::filesystem::path& path);

std::string utc_timestamp();

// Single-owner run directory with a manifest kept in sync on disk.
class RunDirectory {
 public:
  // Creates the directory; `config_snapshot` is stored verbatim as config.cfg.
  RunDirectory(std::filesystem::path root, std::string config_snapshot);

  static RunDirectory open(const std::filesystem::path& root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path(const std::string& relative) const { return root_ / relative; }
  RunManifest& manifest() { return manifest_; }
  const RunManifest& manifest() const { return manifest_; }

  // Records the digest of an artifact already written under the run dir.
  std::uint64_t record(const std::string& relative);
  void set_status(const std::string& stage, StageStatus status);
  void save() const;

  // Every recorded digest matches the file on disk; returns mismatching paths.
  std::vector<std::string> verify() const;

 private:
  RunDirectory() = default;
  std::filesystem::path root_;
  RunManifest manifest_;
};

}  // namespace crlab::store

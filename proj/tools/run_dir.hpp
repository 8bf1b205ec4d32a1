#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

namespace flowmatch::cli {

using Json = nlohmann::ordered_json;

std::string sha256_hex(const std::string& bytes);

// runs/<run_id>/{manifest.json, config, checkpoints/, csv/, reports/}
class RunDir {
 public:
  // An existing directory is reused only if it holds a previous run's
  // manifest; its contents are removed first.
  RunDir(const std::filesystem::path& root, const std::string& run_id);

  const std::filesystem::path& path() const { return path_; }
  const std::string& run_id() const { return run_id_; }
  std::filesystem::path file(const std::string& relative) const { return path_ / relative; }

  void write_text(const std::string& relative, const std::string& content) const;
  void write_json(const std::string& relative, const Json& doc) const;

  // Hashes every file below the run directory and writes manifest.json with
  // `fields` followed by the inventory. Returns the manifest path.
  std::filesystem::path finalize(Json fields) const;

 private:
  std::filesystem::path path_;
  std::string run_id_;
};

std::string read_file(const std::filesystem::path& path);

}  // namespace flowmatch::cli

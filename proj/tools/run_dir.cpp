#include "run_dir.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <vector>

#include "flowmatch/errors.hpp"

namespace flowmatch::cli {

namespace fs = std::filesystem;

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw_error(ErrorKind::kIo, "sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_error(ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunDir::RunDir(const fs::path& root, const std::string& run_id)
    : path_(root / run_id), run_id_(run_id) {
  require(!run_id.empty() && run_id.find('/') == std::string::npos && run_id != "." &&
              run_id != "..",
          ErrorKind::kConfig, "invalid run id '" + run_id + "'");
  if (fs::exists(path_)) {
    if (!fs::exists(path_ / "manifest.json"))
      throw_error(ErrorKind::kIo, "refusing to overwrite " + path_.string() +
                                      ": not a run directory");
    fs::remove_all(path_);
  }
  for (const char* sub : {"checkpoints", "csv", "reports"}) fs::create_directories(path_ / sub);
}

void RunDir::write_text(const std::string& relative, const std::string& content) const {
  const fs::path p = path_ / relative;
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << content;
  if (!out) throw_error(ErrorKind::kIo, "cannot write " + p.string());
}

void RunDir::write_json(const std::string& relative, const Json& doc) const {
  write_text(relative, doc.dump(2) + "\n");
}

fs::path RunDir::finalize(Json fields) const {
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(path_)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), path_).generic_string();
    if (rel != "manifest.json") files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  Json inventory = Json::array();
  for (const std::string& rel : files) {
    const std::string bytes = read_file(path_ / rel);
    inventory.push_back({{"path", rel}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
  }
  fields["files"] = std::move(inventory);
  write_json("manifest.json", fields);
  return path_ / "manifest.json";
}

}  // namespace flowmatch::cli

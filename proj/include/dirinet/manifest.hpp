#pragma once

#include <string>
#include <utility>
#include <vector>

namespace dirinet {

inline constexpr const char* kLibraryVersion = "0.1.0";

/// Line-oriented `key = value` record of a CLI run. Keys keep insertion
/// order. `argv.<i>` and `cwd` entries let the run be replayed.
class RunManifest {
 public:
  explicit RunManifest(std::string command);

  void set(const std::string& key, const std::string& value);
  const std::string* find(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  /// Records the invocation (argv without the program name) and the
  /// working directory.
  void record_invocation(const std::vector<std::string>& args, const std::string& cwd);
  std::vector<std::string> invocation() const;

  std::string serialize() const;
  static RunManifest parse(const std::string& text, const std::string& source_name);

  void write(const std::string& path) const;
  static RunManifest load(const std::string& path);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Digest of a file's bytes, for the manifest's input records.
std::string file_digest(const std::string& path);

}  // namespace dirinet

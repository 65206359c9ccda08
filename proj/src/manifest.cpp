#include "dirinet/manifest.hpp"

#include <algorithm>

#include "dirinet/error.hpp"
#include "dirinet/text.hpp"

namespace dirinet {

RunManifest::RunManifest(std::string command) {
  entries_.emplace_back("command", std::move(command));
  entries_.emplace_back("version", kLibraryVersion);
}

void RunManifest::set(const std::string& key, const std::string& value) {
  if (key.empty() || key.find_first_of("=\n") != std::string::npos) {
    throw InputError("invalid manifest key '" + key + "'");
  }
  if (value.find('\n') != std::string::npos) throw InputError("manifest value for '" + key + "' spans lines");
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == key; });
  if (it != entries_.end()) {
    it->second = value;
  } else {
    entries_.emplace_back(key, value);
  }
}

const std::string* RunManifest::find(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return &v;
  }
  return nullptr;
}

void RunManifest::record_invocation(const std::vector<std::string>& args, const std::string& cwd) {
  set("cwd", cwd);
  set("argc", std::to_string(args.size()));
  for (std::size_t i = 0; i < args.size(); ++i) set("argv." + std::to_string(i), args[i]);
}

std::vector<std::string> RunManifest::invocation() const {
  const std::string* argc = find("argc");
  if (!argc) throw InputError("manifest does not record an invocation");
  const auto n = parse_integer(*argc);
  if (!n || *n < 0) throw InputError("manifest argc is not a count");
  std::vector<std::string> out;
  for (long long i = 0; i < *n; ++i) {
    const std::string* v = find("argv." + std::to_string(i));
    if (!v) throw InputError("manifest is missing argv." + std::to_string(i));
    out.push_back(*v);
  }
  return out;
}

std::string RunManifest::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

RunManifest RunManifest::parse(const std::string& text, const std::string& source_name) {
  RunManifest m("");
  m.entries_.clear();
  std::size_t line_no = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++line_no;
    if (raw.empty() || raw.front() == '#') continue;
    const auto eq = raw.find(" = ");
    if (eq == std::string::npos) {
      throw InputError(source_name + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    m.set(raw.substr(0, eq), raw.substr(eq + 3));
  }
  if (!m.find("command")) throw InputError(source_name + ": manifest has no command");
  return m;
}

void RunManifest::write(const std::string& path) const { write_file_atomic(path, serialize()); }

RunManifest RunManifest::load(const std::string& path) { return parse(read_file(path), path); }

std::string file_digest(const std::string& path) { return digest_hex(read_file(path)); }

}  // namespace dirinet

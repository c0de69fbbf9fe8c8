#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "muser/errors.hpp"
#include "muser/rng.hpp"

namespace muser {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path.string());
  std::string out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return out;
}

// Write-temp-then-rename so readers never observe a half-written file.
inline void atomic_write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("short write: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void save_json_file(const fs::path& path, const json& j, int indent = 2) {
  atomic_write_file(path, j.dump(indent) + "\n");
}

// Call fn(line_number, parsed_object) for every non-empty line.
// Line numbers are 1-based and reported in parse errors.
inline void for_each_jsonl(const fs::path& path, const std::function<void(size_t, const json&)>& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path.string());
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": malformed JSON line: " +
                       e.what());
    }
    fn(lineno, j);
  }
}

inline void save_jsonl_file(const fs::path& path, const std::vector<json>& rows) {
  std::string out;
  for (const auto& row : rows) out += row.dump() + "\n";
  atomic_write_file(path, out);
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

inline std::string file_fingerprint(const fs::path& path) {
  return hex64(fnv1a64(read_text_file(path)));
}

}  // namespace muser

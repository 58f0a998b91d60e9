#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "occupred/digest.hpp"
#include "occupred/errors.hpp"

namespace occupred {

/// Insertion-ordered JSON; every artifact uses it so field order is stable.
using Json = nlohmann::ordered_json;

/// Serializes one record per line (UTF-8, '\n' terminated). Types provide
/// `to_json(Json&, const T&)`.
template <class T>
std::string to_jsonl(const std::vector<T>& records) {
  std::string out;
  for (const auto& r : records) {
    Json j = r;
    out += j.dump();
    out += '\n';
  }
  return out;
}

template <class T>
void write_jsonl(const std::vector<T>& records, const std::filesystem::path& path) {
  write_file_atomic(path, to_jsonl(records));
}

/// Parses JSON-Lines text; blank lines are skipped. Any syntax or field error
/// is reported as SchemaError with the 1-based line number.
template <class T>
std::vector<T> parse_jsonl(const std::string& text, const std::string& source) {
  std::vector<T> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(Json::parse(line).get<T>());
    } catch (const Error& e) {
      throw SchemaError(source, line_no, e.what());
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(source, line_no, e.what());
    }
  }
  return out;
}

template <class T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
  return parse_jsonl<T>(read_file(path), path.string());
}

}  // namespace occupred

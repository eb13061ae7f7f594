#pragma once

// Run manifests written next to every command's outputs.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gramscope/io.hpp"

namespace gramscope {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct RunManifest {
  std::string command;
  OrderedJson config = OrderedJson::object();
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> input_hashes;  // path -> fnv1a64 hex of contents
  std::vector<std::string> outputs;

  void add_input(const std::filesystem::path& path) {
    if (std::filesystem::is_directory(path)) {
      std::vector<std::filesystem::path> files;
      for (const auto& e : std::filesystem::recursive_directory_iterator(path))
        if (e.is_regular_file()) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) add_input(f);
      return;
    }
    input_hashes[path.generic_string()] = hex64(fnv1a64(read_file(path)));
  }

  void add_output(const std::filesystem::path& path) { outputs.push_back(path.generic_string()); }

  // No timestamps: identical runs produce identical manifests.
  OrderedJson to_json() const {
    OrderedJson j;
    j["command"] = command;
    j["tool_version"] = kToolVersion;
    j["config"] = config;
    j["seeds"] = seeds;
    j["inputs"] = input_hashes;
    j["outputs"] = outputs;
    return j;
  }

  void save(const std::filesystem::path& dir) const {
    write_file(dir / ("manifest." + command + ".json"), to_json().dump(2) + "\n");
  }
};

}  // namespace gramscope

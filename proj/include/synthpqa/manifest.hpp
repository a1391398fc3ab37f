#pragma once

// Provenance record written next to every pipeline artifact as
// `<artifact>.manifest.json`: the command line, resolved parameters, and
// content hashes of inputs and outputs.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "synthpqa/corpus.hpp"

namespace synthpqa {

struct FileDigest {
  std::string path;
  std::string sha256;
  bool operator==(const FileDigest&) const = default;
};

struct Manifest {
  std::string command;                        // e.g. "search", "annotate sample"
  std::vector<std::string> argv;              // as invoked, program name excluded
  std::map<std::string, std::string> params;  // option name -> resolved value
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  std::uint64_t seed = 42;
  Timestamp created_at = 0;

  std::string to_json() const;
  static Manifest from_json(const std::string& text);
  static Manifest load(const std::filesystem::path& path);
};

std::filesystem::path manifest_path_for(const std::filesystem::path& artifact);

/// Hashes every existing input and output file. created_at is the current
/// time, or SOURCE_DATE_EPOCH when that is set.
Manifest make_manifest(std::string command, std::vector<std::string> argv,
                       std::map<std::string, std::string> params,
                       const std::vector<std::filesystem::path>& inputs,
                       const std::vector<std::filesystem::path>& outputs, std::uint64_t seed);

/// Writes `m` to manifest_path_for(primary) and returns that path.
std::filesystem::path write_manifest(const std::filesystem::path& primary, const Manifest& m);

/// Output paths whose current content hash differs from the recorded one
/// (missing files included).
std::vector<std::string> changed_outputs(const Manifest& m);

}  // namespace synthpqa

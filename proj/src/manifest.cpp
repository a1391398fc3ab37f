#include "synthpqa/manifest.hpp"

#include <chrono>
#include <cstdlib>

#include "json_io.hpp"
#include "synthpqa/hashing.hpp"

namespace synthpqa {

using detail::Json;

namespace {

Json digests_json(const std::vector<FileDigest>& ds) {
  Json arr = Json::array();
  for (const auto& d : ds) arr.push_back({{"path", d.path}, {"sha256", d.sha256}});
  return arr;
}

std::vector<FileDigest> digests_from(const Json& arr) {
  std::vector<FileDigest> out;
  for (const auto& e : arr) out.push_back({detail::get_string(e, "path"), detail::get_string(e, "sha256")});
  return out;
}

std::vector<FileDigest> hash_all(const std::vector<std::filesystem::path>& paths) {
  std::vector<FileDigest> out;
  for (const auto& p : paths) {
    if (std::filesystem::is_regular_file(p)) out.push_back({p.string(), sha256_file(p)});
  }
  return out;
}

Timestamp now_or_epoch() {
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde && *sde) {
    return std::strtoll(sde, nullptr, 10);
  }
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::string Manifest::to_json() const {
  Json j;
  j["command"] = command;
  j["argv"] = argv;
  Json p = Json::object();
  for (const auto& [k, v] : params) p[k] = v;
  j["params"] = std::move(p);
  j["seed"] = seed;
  j["inputs"] = digests_json(inputs);
  j["outputs"] = digests_json(outputs);
  j["created_at"] = created_at;
  return j.dump(2) + "\n";
}

Manifest Manifest::from_json(const std::string& text) {
  Manifest m;
  try {
    const Json j = Json::parse(text);
    m.command = detail::get_string(j, "command");
    m.argv = j.at("argv").get<std::vector<std::string>>();
    for (const auto& [k, v] : j.at("params").items()) m.params[k] = v.get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.inputs = digests_from(j.at("inputs"));
    m.outputs = digests_from(j.at("outputs"));
    m.created_at = j.value("created_at", Timestamp{0});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

Manifest Manifest::load(const std::filesystem::path& path) {
  return from_json(detail::read_file(path));
}

std::filesystem::path manifest_path_for(const std::filesystem::path& artifact) {
  std::filesystem::path p = artifact;
  p += ".manifest.json";
  return p;
}

Manifest make_manifest(std::string command, std::vector<std::string> argv,
                       std::map<std::string, std::string> params,
                       const std::vector<std::filesystem::path>& inputs,
                       const std::vector<std::filesystem::path>& outputs, std::uint64_t seed) {
  Manifest m;
  m.command = std::move(command);
  m.argv = std::move(argv);
  m.params = std::move(params);
  m.inputs = hash_all(inputs);
  m.outputs = hash_all(outputs);
  m.seed = seed;
  m.created_at = now_or_epoch();
  return m;
}

std::filesystem::path write_manifest(const std::filesystem::path& primary, const Manifest& m) {
  const auto path = manifest_path_for(primary);
  detail::write_file_atomic(path, m.to_json());
  return path;
}

std::vector<std::string> changed_outputs(const Manifest& m) {
  std::vector<std::string> changed;
  for (const auto& d : m.outputs) {
    if (!std::filesystem::is_regular_file(d.path) || sha256_file(d.path) != d.sha256) {
      changed.push_back(d.path);
    }
  }
  return changed;
}

}  // namespace synthpqa

#pragma once

// Internal JSON helpers shared by the corpus, genclient, annotation and CLI
// translation units.

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include <json.hpp>

#include "synthpqa/corpus.hpp"
#include "synthpqa/error.hpp"

namespace synthpqa::detail {

using Json = nlohmann::ordered_json;

Json to_json(const Question& q);
Json to_json(const Answer& a);
Question question_from_json(const Json& j);
Answer answer_from_json(const Json& j);

/// Calls `fn(json, line_no)` for every non-blank line. JSON syntax errors and
/// exceptions thrown by `fn` (other than synthpqa::Error) become ParseError
/// naming the line.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const Json&, std::size_t)>& fn);

/// Writes via a sibling temp file then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

/// Field accessors with readable errors.
std::string get_string(const Json& j, const char* key);
std::string get_string_or(const Json& j, const char* key, std::string fallback);

}  // namespace synthpqa::detail

#include "synthpqa/prompt.hpp"

#include <string_view>

#include "json_io.hpp"
#include "synthpqa/error.hpp"

namespace synthpqa {
namespace {

constexpr std::string_view kBasic = "Write an answer to the given question: Title: {title} Body: {body}.";
constexpr std::string_view kPersonalized =
    "Write an answer to the given question: Title: {title} Body: {body}.\n"
    "Answering the question, consider that who asks the question is interested in: {tags}. "
    "Ignore the user interests if they are not relevant to the question without mentioning "
    "that you have ignored them.";
constexpr std::string_view kContextual =
    "Write an answer to the given question in the context of {community}: Title: {title} Body: "
    "{body}.";

constexpr std::string_view kBracketTokens[] = {"[TITLE]", "[BODY]", "[TAGS]", "[COMMUNITY]"};

bool known_placeholder(std::string_view name) {
  return name == "title" || name == "body" || name == "tags" || name == "community";
}

void check_template(const std::string& tmpl) {
  for (auto tok : kBracketTokens) {
    if (tmpl.find(tok) != std::string::npos) {
      throw ValidationError("template uses bracket token " + std::string(tok) +
                            "; use {title}, {body}, {tags}, {community}");
    }
  }
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] != '{') continue;
    std::size_t close = tmpl.find('}', i);
    if (close == std::string::npos) throw ValidationError("unterminated '{' in template");
    std::string_view name(tmpl.data() + i + 1, close - i - 1);
    if (!known_placeholder(name)) {
      throw ValidationError("unknown placeholder {" + std::string(name) + "} in template");
    }
    i = close;
  }
}

std::string join_tags(const std::vector<std::string>& tags) {
  std::string out;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (i) out += ", ";
    out += tags[i];
  }
  return out;
}

}  // namespace

const PromptTemplates& PromptTemplates::defaults() {
  static const PromptTemplates kDefaults = [] {
    PromptTemplates t;
    t.templates_ = {std::string(kBasic), std::string(kPersonalized), std::string(kContextual)};
    return t;
  }();
  return kDefaults;
}

void PromptTemplates::set(PromptType t, std::string tmpl) {
  check_template(tmpl);
  templates_[index(t)] = std::move(tmpl);
}

void PromptTemplates::load_override(PromptType t, const std::filesystem::path& path) {
  std::string text = detail::read_file(path);
  // A single trailing newline is an editor artefact, not template content.
  if (!text.empty() && text.back() == '\n') text.pop_back();
  if (!text.empty() && text.back() == '\r') text.pop_back();
  set(t, std::move(text));
}

RenderedPrompt render(const Question& question, PromptType type, const UserProfile* profile,
                      const std::optional<std::string>& community,
                      const PromptTemplates& templates) {
  RenderedPrompt out;
  out.question_id = question.id;
  out.prompt_type = type;

  std::string tags;
  if (type == PromptType::kPersonalized) {
    if (profile == nullptr) {
      throw ValidationError("personalized prompt for question " + question.id +
                            " requires a user profile");
    }
    if (profile->top_tags.empty()) {
      out.warnings.push_back("empty user profile for question " + question.id + " (user '" +
                             profile->user_id + "'); rendering with no interests");
    }
    tags = join_tags(profile->top_tags);
  }
  const std::string& comm = community ? *community : question.community;

  const std::string& tmpl = templates.get(type);
  std::string& text = out.text;
  text.reserve(tmpl.size() + question.title.size() + question.body.size() + tags.size());
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] != '{') {
      text.push_back(tmpl[i]);
      continue;
    }
    std::size_t close = tmpl.find('}', i);
    std::string_view name(tmpl.data() + i + 1, close - i - 1);
    if (name == "title") {
      text += question.title;
    } else if (name == "body") {
      text += question.body;
    } else if (name == "tags") {
      text += tags;
    } else {
      text += comm;
    }
    i = close;
  }
  return out;
}

}  // namespace synthpqa

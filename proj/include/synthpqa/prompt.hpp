#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "synthpqa/corpus.hpp"

namespace synthpqa {

struct RenderedPrompt {
  std::string question_id;
  PromptType prompt_type = PromptType::kBasic;
  std::string text;
  std::string model_hint;
  std::vector<std::string> warnings;
};

/// Template set with `{title}`, `{body}`, `{tags}` and `{community}`
/// placeholders. The defaults are the three answer-generation prompts.
class PromptTemplates {
 public:
  static const PromptTemplates& defaults();

  const std::string& get(PromptType t) const { return templates_[index(t)]; }
  /// Replaces one template. Throws ValidationError on unknown or unbalanced
  /// placeholders, or on bracket-style tokens such as "[TITLE]".
  void set(PromptType t, std::string tmpl);
  void load_override(PromptType t, const std::filesystem::path& path);

 private:
  static std::size_t index(PromptType t) { return static_cast<std::size_t>(t); }
  std::array<std::string, 3> templates_;
};

/// Renders one prompt. Personalized prompts require `profile`; contextual
/// prompts use `community` when given, else the question's community.
/// Substitution is single-pass: placeholder-looking text inside the question
/// is copied verbatim.
RenderedPrompt render(const Question& question, PromptType type,
                      const UserProfile* profile = nullptr,
                      const std::optional<std::string>& community = std::nullopt,
                      const PromptTemplates& templates = PromptTemplates::defaults());

}  // namespace synthpqa

#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "toc/core_model.hpp"

namespace toc::prompts {

enum class TemplateName {
  kKeyClipSelection,
  kLowQualityFilter,
  kRationaleGeneration,
  kTrainInfer,
  kDirectAnswer,
  kClipCaption,
  kCompilationCaption,
};

std::string_view to_string(TemplateName name);

struct PromptTemplate {
  TemplateName name;
  std::string_view body;
  // Placeholder names as written between braces in `body`.
  std::vector<std::string_view> placeholders;
};

const PromptTemplate& get_template(TemplateName name);

using Bindings = std::map<std::string, std::string, std::less<>>;

// Replaces every {Name} of the template with its bound value in a single
// pass; bound values are inserted verbatim and never rescanned.
// Throws UnboundPlaceholderError for missing or unknown names.
std::string render_prompt(const PromptTemplate& tmpl, const Bindings& bindings);
std::string render_prompt(TemplateName name, const Bindings& bindings);

// Answer-format instruction appended to the training/inference prompt.
std::string_view task_instruction(QaType type);

// Full training/inference prompt for a QA pair.
std::string train_prompt(const QaPair& qa);

}  // namespace toc::prompts

#include "toc/prompts.hpp"

#include <algorithm>
#include <array>

#include "toc/errors.hpp"

namespace toc::prompts {

namespace {

constexpr std::string_view kKeyClipSelection =
    "### Task:\n"
    "You are an excellent problem solver with a strong ability to comprehend and analyze long-form video content. There is a long video that has been split into multiple semantically coherent clips to help you understand. You are provided with the detailed description for each clip, and a question-answer pair based on this long video. Please carefully understand this long video based on the detailed descriptions for all clips, along with the question-answer pair. And reason how to solve this question using the information provided in the video to arrive at the correct answer. Based on your reasoning process, identify which clips are essential for answering the question.\n"
    "\n"
    "### Guidelines:\n"
    "The information provided to you regarding the long video is given in JSON format, which includes the count of clips, the index and detailed description for each clip, and a question-answer pair based on this long video. You should only provide the indices of your selected clips. No need to explain.\n"
    "\n"
    "### Output Format:\n"
    "It is critical that you respond only with the exact, parseable JSON and not any preamble, explanation, or anything else outside of the valid JSON as your outputs will be fed directly to a JSON parser to go into a downstream application. Do not include any markup like ```json or anything else that would break our ability to parse the response. This is critical, after you are done reasoning and before you respond, ensure that your response is exactly JSON parseable. You must respond with a JSON array that matches the following schema: [<index_1>, <index_2>, ..., <index_N>]\n"
    "\n"
    "Please provide the indices of the essential clips for the following video clip descriptions and corresponding question-answer pair:\n"
    "{Video Clip Descriptions}; {Question}; {Answer}";

constexpr std::string_view kLowQualityFilter =
    "I will provide you with a question-answer pair, along with a detailed description of a video. You need to judge whether the video content is sufficient to lead to the answer to the question. If so, respond with \"Yes\"; otherwise, respond with \"No\". No need to explain. Please provide your judgement for the following question-answer pair and video content:\n"
    "{Question}; {Answer}; {Cues}";

constexpr std::string_view kRationaleGeneration =
    "You are an excellent video assistant with a strong ability to comprehend and analyze long-form video content, and you are watching a long video. I will provide you with a question-answer pair and explain the process of locating video clips that are increasingly helpful for solving the question and reaching the answer. Please summarize the locating process in the first-person tone, demonstrating the step-by-step method of how to locate the most important clip for the given question. While you are summarizing, act as if you can only see the entire video and question, and you are unaware of the provided video clip descriptions and the given answer. Your response should be concise, presented in a single paragraph, and follow this format: \"Step 1: ... Step 2: ... Step 3: ...\". Note that the number of steps in your response MUST equal the number of steps in the provided locating process. Please provide your summarized locating process for the following data:\n"
    "{Question}; {Answer}; {Reasoning Trajectory}";

constexpr std::string_view kTrainInfer =
    "{Question}\n"
    "First, progressively locate video clips that are increasingly helpful for answering the question, and then provide your final answer. Put your detailed locating process between the <locate> </locate> tags, and your final answer between the <answer> </answer> tags. {Task Instruction}";

// No-reasoning elicitation for the demand-estimation trials.
constexpr std::string_view kDirectAnswer =
    "{Question}\n"
    "Answer with only the single option letter within the <answer> </answer> tags. Do not explain.";

constexpr std::string_view kClipCaption =
    "Describe this video clip comprehensively, covering the scene, the people and objects in "
    "it, their actions, and any visible text.";

constexpr std::string_view kCompilationCaption =
    "Describe this video in detail, focusing on the specific spatial and temporal visual cues "
    "it contains.";

const std::array<PromptTemplate, 7> kTemplates = {{
    {TemplateName::kKeyClipSelection, kKeyClipSelection,
     {"Video Clip Descriptions", "Question", "Answer"}},
    {TemplateName::kLowQualityFilter, kLowQualityFilter, {"Question", "Answer", "Cues"}},
    {TemplateName::kRationaleGeneration, kRationaleGeneration,
     {"Question", "Answer", "Reasoning Trajectory"}},
    {TemplateName::kTrainInfer, kTrainInfer, {"Question", "Task Instruction"}},
    {TemplateName::kDirectAnswer, kDirectAnswer, {"Question"}},
    {TemplateName::kClipCaption, kClipCaption, {}},
    {TemplateName::kCompilationCaption, kCompilationCaption, {}},
}};

}  // namespace

std::string_view to_string(TemplateName name) {
  switch (name) {
    case TemplateName::kKeyClipSelection: return "key_clip_selection";
    case TemplateName::kLowQualityFilter: return "low_quality_filter";
    case TemplateName::kRationaleGeneration: return "rationale_generation";
    case TemplateName::kTrainInfer: return "train_infer";
    case TemplateName::kDirectAnswer: return "direct_answer";
    case TemplateName::kClipCaption: return "clip_caption";
    case TemplateName::kCompilationCaption: return "compilation_caption";
  }
  return "unknown";
}

const PromptTemplate& get_template(TemplateName name) {
  for (const auto& t : kTemplates)
    if (t.name == name) return t;
  throw Error("unknown template");
}

std::string render_prompt(const PromptTemplate& tmpl, const Bindings& bindings) {
  for (const auto& [key, value] : bindings) {
    (void)value;
    if (std::find(tmpl.placeholders.begin(), tmpl.placeholders.end(), key) ==
        tmpl.placeholders.end())
      throw UnboundPlaceholderError("template " + std::string(to_string(tmpl.name)) +
                                    " has no placeholder {" + key + "}");
  }

  std::string out;
  out.reserve(tmpl.body.size() + 256);
  const std::string_view body = tmpl.body;
  size_t pos = 0;
  while (pos < body.size()) {
    const size_t open = body.find('{', pos);
    if (open == std::string_view::npos) break;
    const size_t close = body.find('}', open);
    if (close == std::string_view::npos) break;
    const auto name = body.substr(open + 1, close - open - 1);
    const bool is_placeholder = std::find(tmpl.placeholders.begin(), tmpl.placeholders.end(),
                                          name) != tmpl.placeholders.end();
    if (!is_placeholder) {
      out.append(body.substr(pos, open + 1 - pos));
      pos = open + 1;
      continue;
    }
    auto it = bindings.find(name);
    if (it == bindings.end())
      throw UnboundPlaceholderError("unbound placeholder {" + std::string(name) + "} in " +
                                    std::string(to_string(tmpl.name)));
    out.append(body.substr(pos, open - pos));
    out.append(it->second);
    pos = close + 1;
  }
  out.append(body.substr(pos));
  return out;
}

std::string render_prompt(TemplateName name, const Bindings& bindings) {
  return render_prompt(get_template(name), bindings);
}

std::string_view task_instruction(QaType type) {
  switch (type) {
    case QaType::kMultipleChoice:
      return "Provide only the single option letter (e.g., A, B, C, D, etc.) within the "
             "<answer> </answer> tags.";
    case QaType::kNumerical:
      return "Provide the numerical value (e.g., 42 or 3.14) within the <answer> </answer> tags.";
    case QaType::kOpenEnded:
      return "Please provide your text answer within the <answer> </answer> tags.";
  }
  return "";
}

std::string train_prompt(const QaPair& qa) {
  return render_prompt(TemplateName::kTrainInfer,
                       {{"Question", full_question(qa)},
                        {"Task Instruction", std::string(task_instruction(qa.qa_type))}});
}

}  // namespace toc::prompts

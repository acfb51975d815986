#include "toc/sft_pipeline.hpp"

#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "toc/parsing.hpp"
#include "toc/prompts.hpp"
#include "toc/worker_pool.hpp"

namespace toc::sft {

namespace fs = std::filesystem;
using gateway::ChatRequest;
using gateway::Gateway;
using gateway::MediaRef;
using gateway::Message;
using gateway::ModelRole;
using prompts::TemplateName;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

ChatRequest single_message(ModelRole role, std::string text, std::vector<MediaRef> media,
                           const GenerationParams& gen) {
  ChatRequest req;
  req.model_role = role;
  req.messages.push_back(Message{"user", std::move(text), std::move(media)});
  req.temperature = gen.temperature;
  req.max_tokens = gen.max_tokens;
  return req;
}

// Calls the gateway, turning exhausted retries into a rejection.
std::string call(Gateway& gw, const ChatRequest& req, const char* failure_reason) {
  try {
    return gw.complete(req);
  } catch (const BackendUnavailableError& e) {
    throw Rejection(failure_reason, e.what());
  } catch (const TimeoutError& e) {
    throw Rejection(failure_reason, e.what());
  }
}

std::string state_file_name(const std::string& sample_id) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : sample_id) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out + ".json";
}

void save_state(const fs::path& path, const PipelineState& st) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write state file '" + tmp.string() + "'");
    out << Json(st).dump() << '\n';
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::optional<PipelineState> load_state(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    return Json::parse(in).get<PipelineState>();
  } catch (const std::exception& e) {
    throw IoError("corrupt state file '" + path.string() + "': " + e.what());
  }
}

}  // namespace

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kPending: return "pending";
    case Stage::kCaptioned: return "captioned";
    case Stage::kSelected: return "selected";
    case Stage::kCompiled: return "compiled";
    case Stage::kCueCaptioned: return "cue_captioned";
    case Stage::kFiltered: return "filtered";
    case Stage::kSummarized: return "summarized";
    case Stage::kEmitted: return "emitted";
    case Stage::kRejected: return "rejected";
  }
  return "pending";
}

Stage stage_from_string(std::string_view s) {
  for (auto st : {Stage::kPending, Stage::kCaptioned, Stage::kSelected, Stage::kCompiled,
                  Stage::kCueCaptioned, Stage::kFiltered, Stage::kSummarized, Stage::kEmitted,
                  Stage::kRejected})
    if (to_string(st) == s) return st;
  throw RecordError("unknown stage '" + std::string(s) + "'");
}

void to_json(Json& j, const PipelineState& s) {
  j = Json{{"sample_id", s.sample_id}, {"stage", to_string(s.stage)}, {"payload", s.payload}};
  if (s.stage == Stage::kRejected) {
    j["reason"] = s.reason;
    j["detail"] = s.detail;
  }
}

void from_json(const Json& j, PipelineState& s) {
  s.sample_id = j.at("sample_id").get<std::string>();
  s.stage = stage_from_string(j.at("stage").get<std::string>());
  s.payload = j.value("payload", Json::object());
  s.reason = j.value("reason", std::string{});
  s.detail = j.value("detail", std::string{});
}

// --- requests ---------------------------------------------------------------

ChatRequest clip_caption_request(const Clip& clip, const GenerationParams& gen) {
  MediaRef ref{clip.video_id, {{clip.start_s, clip.end_s}}};
  return single_message(ModelRole::kMllm,
                        prompts::render_prompt(TemplateName::kClipCaption, {}), {ref}, gen);
}

ChatRequest compilation_caption_request(const cue_tree::Compilation& comp,
                                        const std::vector<Clip>& clips,
                                        const GenerationParams& gen) {
  MediaRef ref;
  for (int idx : comp.clip_indices) {
    if (idx < 0 || idx >= static_cast<int>(clips.size()))
      throw OutOfRangeError("compilation references clip " + std::to_string(idx));
    const Clip& c = clips[idx];
    ref.video_id = c.video_id;
    // temporally adjacent clips form one continuous span
    if (!ref.spans.empty() && ref.spans.back().second == c.start_s)
      ref.spans.back().second = c.end_s;
    else
      ref.spans.emplace_back(c.start_s, c.end_s);
  }
  return single_message(ModelRole::kMllm,
                        prompts::render_prompt(TemplateName::kCompilationCaption, {}), {ref},
                        gen);
}

std::string clip_descriptions_json(const std::vector<Clip>& clips) {
  Json arr = Json::array();
  for (const auto& c : clips)
    arr.push_back(Json{{"index", c.index}, {"description", c.caption.value_or("")}});
  Json j = Json::object();
  j["num_clips"] = clips.size();
  j["clips"] = arr;
  return j.dump();
}

ChatRequest selection_request(const std::vector<Clip>& clips, const QaPair& qa,
                              const GenerationParams& gen) {
  const auto text = prompts::render_prompt(
      TemplateName::kKeyClipSelection,
      {{"Video Clip Descriptions", clip_descriptions_json(clips)},
       {"Question", Json{{"question", full_question(qa)}}.dump()},
       {"Answer", Json{{"answer", qa.answer}}.dump()}});
  return single_message(ModelRole::kLlm, text, {}, gen);
}

ChatRequest filter_request(const std::string& final_cue, const QaPair& qa,
                           const GenerationParams& gen) {
  const auto text = prompts::render_prompt(
      TemplateName::kLowQualityFilter,
      {{"Question", full_question(qa)}, {"Answer", qa.answer}, {"Cues", final_cue}});
  return single_message(ModelRole::kLlm, text, {}, gen);
}

std::string linearize_trajectory(const std::vector<std::string>& cues) {
  std::string out;
  for (size_t k = 0; k < cues.size(); ++k) {
    if (k) out += ' ';
    out += "Step " + std::to_string(k + 1) + ": " + cues[k];
  }
  return out;
}

ChatRequest rationale_request(const std::vector<std::string>& cues, const QaPair& qa,
                              const GenerationParams& gen) {
  const auto text = prompts::render_prompt(TemplateName::kRationaleGeneration,
                                           {{"Question", full_question(qa)},
                                            {"Answer", qa.answer},
                                            {"Reasoning Trajectory", linearize_trajectory(cues)}});
  return single_message(ModelRole::kLlm, text, {}, gen);
}

// --- stages -------------------------------------------------------------------

std::vector<Clip> caption_clips(Gateway& gw, std::vector<Clip> clips, const GenerationParams& gen) {
  for (auto& c : clips) {
    if (c.caption && !trim(*c.caption).empty()) continue;
    auto reply = trim(call(gw, clip_caption_request(c, gen), "caption_failed"));
    if (reply.empty())
      throw Rejection("empty_caption", "clip " + std::to_string(c.index) + " got an empty caption");
    c.caption = std::move(reply);
  }
  return clips;
}

std::set<int> select_key_clips(Gateway& gw, const std::vector<Clip>& clips, const QaPair& qa,
                               const GenerationParams& gen, bool strict_parsing) {
  const auto reply = call(gw, selection_request(clips, qa, gen), "selection_failed");
  std::vector<int> indices;
  try {
    indices = prompts::parse_index_array(reply, strict_parsing);
  } catch (const ParseError& e) {
    throw Rejection("selection_unparseable", e.what());
  }
  if (indices.empty()) throw Rejection("selection_empty", "no clip selected");
  for (int i : indices)
    if (i < 0 || i >= static_cast<int>(clips.size()))
      throw Rejection("selection_out_of_range",
                      "index " + std::to_string(i) + " with " + std::to_string(clips.size()) +
                          " clips");
  return {indices.begin(), indices.end()};
}

std::vector<cue_tree::Compilation> caption_compilations(Gateway& gw,
                                                        std::vector<cue_tree::Compilation> comps,
                                                        const std::vector<Clip>& clips,
                                                        const GenerationParams& gen) {
  for (auto& comp : comps) {
    auto reply = trim(call(gw, compilation_caption_request(comp, clips, gen), "cue_caption_failed"));
    if (reply.empty()) throw Rejection("empty_cue_caption", "compilation caption is empty");
    comp.caption = std::move(reply);
  }
  return comps;
}

bool filter_low_quality(Gateway& gw, const std::string& final_cue, const QaPair& qa,
                        const GenerationParams& gen) {
  const auto reply = call(gw, filter_request(final_cue, qa, gen), "filter_failed");
  try {
    return prompts::parse_yes_no(reply);
  } catch (const ParseError& e) {
    throw Rejection("filter_unparseable", e.what());
  }
}

Rationale summarize_rationale(Gateway& gw, const std::vector<std::string>& cues, const QaPair& qa,
                              const GenerationParams& gen) {
  if (cues.empty()) throw Rejection("no_cues", "no cue descriptions to summarise");
  Rationale out;
  out.reply = trim(call(gw, rationale_request(cues, qa, gen), "rationale_failed"));
  if (out.reply.empty()) throw Rejection("empty_rationale", "rationale reply is empty");
  const auto markers = prompts::find_step_markers(out.reply);
  bool ok = markers.size() == cues.size();
  for (size_t k = 0; ok && k < markers.size(); ++k) ok = markers[k] == static_cast<int>(k + 1);
  if (!ok)
    throw Rejection("step_count_mismatch", "expected " + std::to_string(cues.size()) +
                                               " steps, reply has " +
                                               std::to_string(markers.size()));
  out.rationale = trim(prompts::strip_step_markers(out.reply));
  if (out.rationale.empty()) throw Rejection("empty_rationale", "rationale is empty after stripping");
  return out;
}

SftSample make_sft_sample(const QaRecord& rec, const std::string& rationale) {
  SftSample s;
  s.id = rec.sample_id();
  s.video_id = rec.video_id;
  s.question = rec.qa.question;
  s.answer = rec.qa.answer;
  s.rationale = rationale;
  s.target = render_target(rationale, rec.qa.answer);
  s.prompt = prompts::train_prompt(rec.qa);
  return s;
}

// --- orchestration ------------------------------------------------------------

std::vector<Json> SftReport::to_records() const {
  size_t rejected = 0;
  for (const auto& [reason, n] : rejections) rejected += n;
  std::vector<Json> out;
  out.push_back(Json{{"kind", "summary"},
                     {"command", "build-sft"},
                     {"inputs", inputs},
                     {"emitted", emitted},
                     {"rejected", rejected}});
  for (const auto& [reason, n] : rejections)
    out.push_back(Json{{"kind", "rejection"}, {"reason", reason}, {"count", n}});
  return out;
}

std::map<std::string, std::vector<Clip>> group_clips_by_video(const std::vector<Clip>& clips) {
  std::map<std::string, std::vector<Clip>> out;
  for (const auto& c : clips) out[c.video_id].push_back(c);
  return out;
}

namespace {

class SampleRunner {
 public:
  SampleRunner(Gateway& gw, const SftOptions& opts, std::atomic<size_t>& transitions)
      : gw_(gw), opts_(opts), transitions_(transitions) {}

  PipelineState run(const QaRecord& rec, const std::vector<Clip>* video_clips,
                    const fs::path& state_path) {
    PipelineState st = load_state(state_path).value_or(PipelineState{rec.sample_id()});
    while (!is_terminal(st.stage)) {
      try {
        advance(st, rec, video_clips);
      } catch (const Rejection& r) {
        st.stage = Stage::kRejected;
        st.reason = r.reason();
        st.detail = r.what();
      }
      save_state(state_path, st);
      if (opts_.crash_after_transitions &&
          transitions_.fetch_add(1) + 1 >= *opts_.crash_after_transitions)
        throw SimulatedCrash("simulated crash after stage " + std::string(to_string(st.stage)));
    }
    return st;
  }

 private:
  std::vector<Clip> captioned_clips(const PipelineState& st, const std::vector<Clip>& clips) {
    std::vector<Clip> out = clips;
    const auto& caps = st.payload.at("captions");
    for (size_t i = 0; i < out.size(); ++i) out[i].caption = caps.at(i).get<std::string>();
    return out;
  }

  std::vector<cue_tree::Compilation> compilations(const PipelineState& st) {
    std::vector<cue_tree::Compilation> out;
    for (const auto& c : st.payload.at("compilations"))
      out.push_back(cue_tree::Compilation{c.get<std::vector<int>>(), std::nullopt});
    return out;
  }

  void advance(PipelineState& st, const QaRecord& rec, const std::vector<Clip>* video_clips) {
    if (!video_clips) throw Rejection("missing_clips", "no clips for video '" + rec.video_id + "'");
    std::vector<Clip> clips;
    try {
      validate_qa(rec.qa);
      clips = validate_clip_sequence(*video_clips);
    } catch (const ValidationError& e) {
      throw Rejection("invalid_input", e.what());
    } catch (const EmptyError& e) {
      throw Rejection("invalid_input", e.what());
    } catch (const GapError& e) {
      throw Rejection("invalid_input", e.what());
    } catch (const OverlapError& e) {
      throw Rejection("invalid_input", e.what());
    }
    const auto& gen = opts_.generation;

    switch (st.stage) {
      case Stage::kPending: {
        Json caps = Json::array();
        for (const auto& c : caption_clips(gw_, clips, gen)) caps.push_back(*c.caption);
        st.payload["captions"] = caps;
        st.stage = Stage::kCaptioned;
        break;
      }
      case Stage::kCaptioned: {
        const auto sel = select_key_clips(gw_, captioned_clips(st, clips), rec.qa, gen,
                                          opts_.strict_parsing);
        st.payload["selected"] = std::vector<int>(sel.begin(), sel.end());
        st.stage = Stage::kSelected;
        break;
      }
      case Stage::kSelected: {
        const auto sel = st.payload.at("selected").get<std::vector<int>>();
        const auto tree = cue_tree::build_tree(static_cast<int>(clips.size()));
        const auto sub = cue_tree::backtrack(tree, {sel.begin(), sel.end()});
        Json comps = Json::array();
        for (const auto& c : cue_tree::layer_compilations(sub)) comps.push_back(c.clip_indices);
        st.payload["compilations"] = comps;
        st.stage = Stage::kCompiled;
        break;
      }
      case Stage::kCompiled: {
        Json cues = Json::array();
        for (const auto& c : caption_compilations(gw_, compilations(st), clips, gen))
          cues.push_back(*c.caption);
        st.payload["cues"] = cues;
        st.stage = Stage::kCueCaptioned;
        break;
      }
      case Stage::kCueCaptioned: {
        const auto cues = st.payload.at("cues").get<std::vector<std::string>>();
        if (!filter_low_quality(gw_, cues.back(), rec.qa, gen))
          throw Rejection("insufficient_cues", "final cue judged insufficient for the answer");
        st.stage = Stage::kFiltered;
        break;
      }
      case Stage::kFiltered: {
        const auto cues = st.payload.at("cues").get<std::vector<std::string>>();
        const auto r = summarize_rationale(gw_, cues, rec.qa, gen);
        st.payload["rationale_reply"] = r.reply;
        st.payload["rationale"] = r.rationale;
        st.stage = Stage::kSummarized;
        break;
      }
      case Stage::kSummarized: {
        st.payload["sample"] =
            make_sft_sample(rec, st.payload.at("rationale").get<std::string>());
        st.stage = Stage::kEmitted;
        break;
      }
      case Stage::kEmitted:
      case Stage::kRejected:
        break;
    }
  }

  Gateway& gw_;
  const SftOptions& opts_;
  std::atomic<size_t>& transitions_;
};

}  // namespace

SftReport run_sft_pipeline(Gateway& gw, const std::map<std::string, std::vector<Clip>>& clips_by_video,
                           const std::vector<QaRecord>& qas, const SftOptions& opts,
                           const std::string& out_path, const std::string& rejected_path) {
  if (opts.state_dir.empty()) throw ConfigError("build-sft needs a state directory");
  std::set<std::string> ids;
  for (const auto& q : qas)
    if (!ids.insert(q.sample_id()).second)
      throw ValidationError("duplicate sample id '" + q.sample_id() + "'");

  std::error_code ec;
  fs::create_directories(opts.state_dir, ec);
  if (ec) throw IoError("cannot create state directory '" + opts.state_dir + "': " + ec.message());

  const size_t calls_before = gw.calls();
  std::atomic<size_t> transitions{0};
  std::vector<PipelineState> finals(qas.size());

  parallel_for_each(qas.size(), opts.parallelism, [&](size_t i) {
    const auto& rec = qas[i];
    const auto it = clips_by_video.find(rec.video_id);
    SampleRunner runner(gw, opts, transitions);
    finals[i] = runner.run(rec, it == clips_by_video.end() ? nullptr : &it->second,
                           fs::path(opts.state_dir) / state_file_name(rec.sample_id()));
  });

  SftReport report;
  report.inputs = qas.size();
  std::vector<Json> emitted, rejected;
  for (const auto& st : finals) {
    if (st.stage == Stage::kEmitted) {
      emitted.push_back(st.payload.at("sample"));
      ++report.emitted;
    } else {
      ++report.rejections[st.reason];
      rejected.push_back(Json{{"id", st.sample_id}, {"reason", st.reason}, {"detail", st.detail}});
    }
  }
  write_records(out_path, emitted);
  if (!rejected_path.empty()) write_records(rejected_path, rejected);
  report.backend_calls = gw.calls() - calls_before;
  return report;
}

}  // namespace toc::sft

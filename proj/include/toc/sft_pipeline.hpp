#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "toc/config.hpp"
#include "toc/core_model.hpp"
#include "toc/cue_tree.hpp"
#include "toc/errors.hpp"
#include "toc/gateway.hpp"

namespace toc::sft {

// A sample left the pipeline; `reason()` is the report key.
class Rejection : public Error {
 public:
  Rejection(std::string reason, const std::string& detail)
      : Error(reason + ": " + detail), reason_(std::move(reason)) {}
  const char* name() const noexcept override { return "Rejection"; }
  const std::string& reason() const { return reason_; }

 private:
  std::string reason_;
};

enum class Stage {
  kPending,
  kCaptioned,
  kSelected,
  kCompiled,
  kCueCaptioned,
  kFiltered,
  kSummarized,
  kEmitted,
  kRejected,
};

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);
inline bool is_terminal(Stage s) { return s == Stage::kEmitted || s == Stage::kRejected; }

// Persisted progress of one sample. `payload` accumulates stage outputs
// (captions, selected, compilations, cues, rationale_reply, rationale,
// sample); `reason`/`detail` are set once rejected.
struct PipelineState {
  std::string sample_id;
  Stage stage = Stage::kPending;
  Json payload = Json::object();
  std::string reason;
  std::string detail;
};

void to_json(Json& j, const PipelineState& s);
void from_json(const Json& j, PipelineState& s);

// --- requests ---------------------------------------------------------------

gateway::ChatRequest clip_caption_request(const Clip& clip, const GenerationParams& gen);
gateway::ChatRequest compilation_caption_request(const cue_tree::Compilation& comp,
                                                 const std::vector<Clip>& clips,
                                                 const GenerationParams& gen);
// {"num_clips": N, "clips": [{"index": i, "description": caption}, ...]}
std::string clip_descriptions_json(const std::vector<Clip>& clips);
gateway::ChatRequest selection_request(const std::vector<Clip>& clips, const QaPair& qa,
                                       const GenerationParams& gen);
gateway::ChatRequest filter_request(const std::string& final_cue, const QaPair& qa,
                                    const GenerationParams& gen);
// "Step 1: <cue 1> Step 2: <cue 2> ..."
std::string linearize_trajectory(const std::vector<std::string>& cues);
gateway::ChatRequest rationale_request(const std::vector<std::string>& cues, const QaPair& qa,
                                       const GenerationParams& gen);

// --- stage operations -------------------------------------------------------
// Each throws Rejection with the report reason on failure.

std::vector<Clip> caption_clips(gateway::Gateway& gw, std::vector<Clip> clips,
                                const GenerationParams& gen);

std::set<int> select_key_clips(gateway::Gateway& gw, const std::vector<Clip>& clips,
                               const QaPair& qa, const GenerationParams& gen,
                               bool strict_parsing = true);

std::vector<cue_tree::Compilation> caption_compilations(
    gateway::Gateway& gw, std::vector<cue_tree::Compilation> compilations,
    const std::vector<Clip>& clips, const GenerationParams& gen);

// true keeps the sample.
bool filter_low_quality(gateway::Gateway& gw, const std::string& final_cue, const QaPair& qa,
                        const GenerationParams& gen);

struct Rationale {
  std::string reply;      // as generated, with step markers
  std::string rationale;  // markers removed
};

Rationale summarize_rationale(gateway::Gateway& gw, const std::vector<std::string>& cues,
                              const QaPair& qa, const GenerationParams& gen);

SftSample make_sft_sample(const QaRecord& rec, const std::string& rationale);

// --- orchestration ------------------------------------------------------------

struct SftOptions {
  int parallelism = 1;
  bool strict_parsing = true;
  GenerationParams generation;
  std::string state_dir;  // per-sample state files; required
  // Test hook: abort the run after this many stage transitions.
  std::optional<std::size_t> crash_after_transitions;
};

struct SftReport {
  std::size_t inputs = 0;
  std::size_t emitted = 0;
  std::map<std::string, std::size_t> rejections;
  std::size_t backend_calls = 0;  // this run only

  // Report records: one summary line plus one line per rejection reason.
  std::vector<Json> to_records() const;
};

class SimulatedCrash : public Error {
 public:
  using Error::Error;
  const char* name() const noexcept override { return "SimulatedCrash"; }
};

// Runs every QA through the stages, resuming from persisted state, then
// writes accepted samples to `out_path` and rejections to
// `rejected_path` in input order.
SftReport run_sft_pipeline(gateway::Gateway& gw,
                           const std::map<std::string, std::vector<Clip>>& clips_by_video,
                           const std::vector<QaRecord>& qas, const SftOptions& opts,
                           const std::string& out_path, const std::string& rejected_path);

std::map<std::string, std::vector<Clip>> group_clips_by_video(const std::vector<Clip>& clips);

}  // namespace toc::sft

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace toc {

using Json = nlohmann::json;

// A temporally contiguous segment of one video. Spans are half-open
// [start_s, end_s) in seconds.
struct Clip {
  std::string video_id;
  int index = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  std::optional<std::vector<double>> embedding;
  std::optional<std::string> caption;

  double duration() const { return end_s - start_s; }
  bool operator==(const Clip&) const = default;
};

enum class QaType { kMultipleChoice, kOpenEnded, kNumerical };

std::string_view to_string(QaType t);
QaType qa_type_from_string(std::string_view s);

struct Option {
  std::string label;
  std::string text;
  bool operator==(const Option&) const = default;
};

struct QaPair {
  std::string question;
  std::string answer;
  QaType qa_type = QaType::kMultipleChoice;
  std::vector<Option> options;

  bool operator==(const QaPair&) const = default;
};

// One line of a QA input file: the pair plus the video it belongs to.
struct QaRecord {
  std::string video_id;
  int qa_index = 0;
  QaPair qa;

  std::string sample_id() const;
  bool operator==(const QaRecord&) const = default;
};

struct SftSample {
  std::string id;
  std::string video_id;
  std::string question;
  std::string answer;
  std::string rationale;
  std::string target;
  std::string prompt;

  bool operator==(const SftSample&) const = default;
};

struct RlSample {
  std::string id;
  std::string video_id;
  std::string question;
  std::vector<Option> options;
  std::string answer;
  int alpha = 0;
  int m_trials = 1;
  double reasoning_demand = 1.0;
  double difficulty = 1.0;

  bool operator==(const RlSample&) const = default;
};

// `<video_id>#<qa_index>`
std::string make_sample_id(std::string_view video_id, int qa_index);

// Question text as shown to models: the stem, followed by one
// "<label>. <text>" line per option when options are present.
std::string full_question(const QaPair& qa);

// Checks QaPair invariants (multiple choice needs options and an answer
// that names exactly one option label). Throws ValidationError.
void validate_qa(const QaPair& qa);

// Sorts by index and checks the clip-sequence invariants of one video.
// Throws EmptyError, OverlapError, GapError or ValidationError.
std::vector<Clip> validate_clip_sequence(std::vector<Clip> clips);

// "<locate>" + rationale + "</locate>\n<answer>" + answer + "</answer>"
std::string render_target(std::string_view rationale, std::string_view answer);

double reasoning_demand(int alpha, int m_trials);
double difficulty(int alpha, int m_trials);

// Builds an RlSample with demand and difficulty derived from (alpha, m).
RlSample make_rl_sample(const QaRecord& rec, int alpha, int m_trials);

// --- record (de)serialization -------------------------------------------

void to_json(Json& j, const Option& o);
void from_json(const Json& j, Option& o);
void to_json(Json& j, const Clip& c);
void from_json(const Json& j, Clip& c);
void to_json(Json& j, const QaRecord& r);
void from_json(const Json& j, QaRecord& r);
void to_json(Json& j, const SftSample& s);
void from_json(const Json& j, SftSample& s);
void to_json(Json& j, const RlSample& s);
// Also verifies the stored demand/difficulty against (alpha, m_trials).
void from_json(const Json& j, RlSample& s);

// Newline-delimited record files. Blank lines are skipped on read.
std::vector<Json> read_records(const std::string& path);
void write_records(const std::string& path, const std::vector<Json>& records);
std::string to_record_line(const Json& j);

template <typename T>
std::vector<T> read_records_as(const std::string& path) {
  std::vector<T> out;
  for (const auto& j : read_records(path)) out.push_back(j.get<T>());
  return out;
}

template <typename T>
void write_records_from(const std::string& path, const std::vector<T>& items) {
  std::vector<Json> js;
  js.reserve(items.size());
  for (const auto& it : items) js.emplace_back(it);
  write_records(path, js);
}

// Reads a QA file, assigning qa_index per video in file order unless the
// record carries an explicit "qa_index".
std::vector<QaRecord> read_qa_file(const std::string& path);

}  // namespace toc

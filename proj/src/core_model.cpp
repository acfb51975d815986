#include "toc/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "toc/errors.hpp"

namespace toc {

namespace {

constexpr double kDemandTolerance = 1e-12;

template <typename T>
T require(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw RecordError(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const Json::exception& e) {
    throw RecordError(std::string("bad field '") + key + "': " + e.what());
  }
}

}  // namespace

std::string_view to_string(QaType t) {
  switch (t) {
    case QaType::kMultipleChoice: return "multiple_choice";
    case QaType::kOpenEnded: return "open_ended";
    case QaType::kNumerical: return "numerical";
  }
  return "multiple_choice";
}

QaType qa_type_from_string(std::string_view s) {
  if (s == "multiple_choice") return QaType::kMultipleChoice;
  if (s == "open_ended") return QaType::kOpenEnded;
  // "regression" questions share the numerical task instruction
  if (s == "numerical" || s == "regression") return QaType::kNumerical;
  throw RecordError("unknown qa_type '" + std::string(s) + "'");
}

std::string QaRecord::sample_id() const { return make_sample_id(video_id, qa_index); }

std::string make_sample_id(std::string_view video_id, int qa_index) {
  return std::string(video_id) + "#" + std::to_string(qa_index);
}

std::string full_question(const QaPair& qa) {
  if (qa.options.empty()) return qa.question;
  std::string out = qa.question;
  for (const auto& o : qa.options) {
    out += "\n";
    out += o.label;
    out += ". ";
    out += o.text;
  }
  return out;
}

void validate_qa(const QaPair& qa) {
  if (qa.qa_type != QaType::kMultipleChoice) return;
  if (qa.options.empty()) throw ValidationError("multiple_choice question without options");
  auto hits = std::count_if(qa.options.begin(), qa.options.end(),
                            [&](const Option& o) { return o.label == qa.answer; });
  if (hits != 1)
    throw ValidationError("answer '" + qa.answer + "' must match exactly one option label");
}

std::vector<Clip> validate_clip_sequence(std::vector<Clip> clips) {
  if (clips.empty()) throw EmptyError("empty clip sequence");
  const auto& vid = clips.front().video_id;
  for (const auto& c : clips) {
    if (c.video_id != vid) throw ValidationError("clips from more than one video");
    if (!(c.start_s >= 0.0) || !(c.end_s > c.start_s))
      throw ValidationError("clip " + std::to_string(c.index) + " of '" + vid +
                            "' has an invalid span");
  }
  std::stable_sort(clips.begin(), clips.end(),
                   [](const Clip& a, const Clip& b) { return a.index < b.index; });
  for (size_t i = 0; i < clips.size(); ++i) {
    if (clips[i].index != static_cast<int>(i))
      throw GapError("clip indices of '" + vid + "' are not 0..N-1 (expected " +
                     std::to_string(i) + ", got " + std::to_string(clips[i].index) + ")");
    if (i > 0 && clips[i].start_s < clips[i - 1].end_s)
      throw OverlapError("clips " + std::to_string(i - 1) + " and " + std::to_string(i) +
                         " of '" + vid + "' overlap");
  }
  return clips;
}

std::string render_target(std::string_view rationale, std::string_view answer) {
  if (rationale.empty()) throw EmptyRationaleError("rationale is empty");
  std::string out;
  out.reserve(rationale.size() + answer.size() + 40);
  out += "<locate>";
  out += rationale;
  out += "</locate>\n<answer>";
  out += answer;
  out += "</answer>";
  return out;
}

double reasoning_demand(int alpha, int m_trials) {
  if (m_trials < 1 || alpha < 0 || alpha > m_trials)
    throw RangeError("alpha must lie in [0, m] with m >= 1");
  return std::exp(-static_cast<double>(alpha) / m_trials);
}

double difficulty(int alpha, int m_trials) {
  if (m_trials < 1 || alpha < 0 || alpha > m_trials)
    throw RangeError("alpha must lie in [0, m] with m >= 1");
  // one rounding step, so k/m lands on the same double as a literal band edge
  return static_cast<double>(m_trials - alpha) / m_trials;
}

RlSample make_rl_sample(const QaRecord& rec, int alpha, int m_trials) {
  RlSample s;
  s.id = rec.sample_id();
  s.video_id = rec.video_id;
  s.question = rec.qa.question;
  s.options = rec.qa.options;
  s.answer = rec.qa.answer;
  s.alpha = alpha;
  s.m_trials = m_trials;
  s.reasoning_demand = reasoning_demand(alpha, m_trials);
  s.difficulty = difficulty(alpha, m_trials);
  return s;
}

// --- json ------------------------------------------------------------------

void to_json(Json& j, const Option& o) { j = Json{{"label", o.label}, {"text", o.text}}; }

void from_json(const Json& j, Option& o) {
  o.label = require<std::string>(j, "label");
  o.text = j.value("text", std::string{});
}

void to_json(Json& j, const Clip& c) {
  j = Json{{"video_id", c.video_id}, {"index", c.index}, {"start_s", c.start_s},
           {"end_s", c.end_s}};
  if (c.embedding) j["embedding"] = *c.embedding;
  if (c.caption) j["caption"] = *c.caption;
}

void from_json(const Json& j, Clip& c) {
  c.video_id = require<std::string>(j, "video_id");
  c.index = require<int>(j, "index");
  c.start_s = require<double>(j, "start_s");
  c.end_s = require<double>(j, "end_s");
  c.embedding.reset();
  c.caption.reset();
  if (j.contains("embedding") && !j["embedding"].is_null())
    c.embedding = require<std::vector<double>>(j, "embedding");
  if (j.contains("caption") && !j["caption"].is_null())
    c.caption = require<std::string>(j, "caption");
}

void to_json(Json& j, const QaRecord& r) {
  j = Json{{"video_id", r.video_id},
           {"qa_index", r.qa_index},
           {"question", r.qa.question},
           {"answer", r.qa.answer},
           {"qa_type", to_string(r.qa.qa_type)},
           {"options", r.qa.options}};
}

void from_json(const Json& j, QaRecord& r) {
  r.video_id = require<std::string>(j, "video_id");
  r.qa_index = j.value("qa_index", 0);
  r.qa.question = require<std::string>(j, "question");
  r.qa.answer = require<std::string>(j, "answer");
  r.qa.qa_type = qa_type_from_string(j.value("qa_type", std::string("multiple_choice")));
  r.qa.options.clear();
  if (j.contains("options") && !j["options"].is_null())
    r.qa.options = require<std::vector<Option>>(j, "options");
}

void to_json(Json& j, const SftSample& s) {
  j = Json{{"id", s.id},           {"video_id", s.video_id}, {"question", s.question},
           {"answer", s.answer},   {"rationale", s.rationale}, {"target", s.target},
           {"prompt", s.prompt}};
}

void from_json(const Json& j, SftSample& s) {
  s.id = require<std::string>(j, "id");
  s.video_id = require<std::string>(j, "video_id");
  s.question = require<std::string>(j, "question");
  s.answer = require<std::string>(j, "answer");
  s.rationale = require<std::string>(j, "rationale");
  s.target = require<std::string>(j, "target");
  s.prompt = require<std::string>(j, "prompt");
}

void to_json(Json& j, const RlSample& s) {
  j = Json{{"id", s.id},
           {"video_id", s.video_id},
           {"question", s.question},
           {"options", s.options},
           {"answer", s.answer},
           {"alpha", s.alpha},
           {"m_trials", s.m_trials},
           {"reasoning_demand", s.reasoning_demand},
           {"difficulty", s.difficulty}};
}

void from_json(const Json& j, RlSample& s) {
  s.id = require<std::string>(j, "id");
  s.video_id = require<std::string>(j, "video_id");
  s.question = require<std::string>(j, "question");
  s.options = j.contains("options") ? require<std::vector<Option>>(j, "options")
                                    : std::vector<Option>{};
  s.answer = require<std::string>(j, "answer");
  s.alpha = require<int>(j, "alpha");
  s.m_trials = require<int>(j, "m_trials");
  s.reasoning_demand = require<double>(j, "reasoning_demand");
  s.difficulty = require<double>(j, "difficulty");
  if (s.m_trials < 1 || s.alpha < 0 || s.alpha > s.m_trials)
    throw RecordError("record '" + s.id + "': alpha out of [0, m_trials]");
  if (std::abs(s.reasoning_demand - reasoning_demand(s.alpha, s.m_trials)) > kDemandTolerance ||
      std::abs(s.difficulty - difficulty(s.alpha, s.m_trials)) > kDemandTolerance)
    throw RecordError("record '" + s.id + "': stored demand/difficulty disagree with alpha");
}

// --- files -----------------------------------------------------------------

std::string to_record_line(const Json& j) {
  return j.dump(-1, ' ', false, Json::error_handler_t::strict);
}

std::vector<Json> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<Json> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw RecordError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_records(const std::string& path, const std::vector<Json>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (const auto& j : records) out << to_record_line(j) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<QaRecord> read_qa_file(const std::string& path) {
  std::vector<QaRecord> out;
  std::map<std::string, int> next_index;
  size_t lineno = 0;
  for (const auto& j : read_records(path)) {
    ++lineno;
    QaRecord r;
    try {
      r = j.get<QaRecord>();
    } catch (const RecordError& e) {
      throw RecordError(path + ": record " + std::to_string(lineno) + ": " + e.what());
    }
    int& next = next_index[r.video_id];
    if (!j.contains("qa_index")) r.qa_index = next;
    next = std::max(next, r.qa_index + 1);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace toc

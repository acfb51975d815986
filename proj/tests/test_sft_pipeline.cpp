#include <doctest.h>

#include <filesystem>

#include "mock_script.hpp"
#include "test_util.hpp"
#include "toc/parsing.hpp"
#include "toc/prompts.hpp"
#include "toc/sft_pipeline.hpp"

using namespace toc;
using namespace toc::sft;
using testing::SampleScript;

namespace {

struct Fixture {
  std::shared_ptr<gateway::MockBackend> mock = std::make_shared<gateway::MockBackend>();
  gateway::Gateway gw{mock, {}, 4, [](auto) {}};
  testing::TempDir dir;
  std::map<std::string, std::vector<Clip>> clips;
  std::vector<QaRecord> qas;

  void add(const std::string& vid, int n_clips, const SampleScript& script,
           const std::string& answer = "A") {
    if (!clips.count(vid)) clips[vid] = testing::even_clips(vid, n_clips);
    QaRecord rec{vid, 0, testing::mc_question("What does the person pick up in " + vid + "?",
                                              answer)};
    for (const auto& q : qas)
      if (q.video_id == vid) ++rec.qa_index;
    testing::script_sample(*mock, clips[vid], rec.qa, script);
    qas.push_back(rec);
  }

  SftOptions options(const std::string& state = "state") const {
    SftOptions o;
    o.state_dir = dir.file(state);
    return o;
  }

  SftReport run(const SftOptions& o, const std::string& out = "out.records") {
    return run_sft_pipeline(gw, clips, qas, o, dir.file(out), dir.file(out + ".rejected"));
  }

  std::string rejection_reason(const std::string& out = "out.records") {
    const auto recs = read_records(dir.file(out + ".rejected"));
    REQUIRE(recs.size() == 1);
    return recs[0]["reason"].get<std::string>();
  }
};

QaPair qa() { return testing::mc_question("Which object is picked up?", "A"); }

}  // namespace

TEST_CASE("three samples, one filtered out") {
  Fixture f;
  f.add("v1", 4, {"[0, 2]"});
  f.add("v2", 3, {"[1]", "No"});
  f.add("v3", 1, {"[0]"});
  const auto report = f.run(f.options());

  CHECK(report.inputs == 3);
  CHECK(report.emitted == 2);
  CHECK(report.rejections == std::map<std::string, size_t>{{"insufficient_cues", 1}});

  const auto out = read_records_as<SftSample>(f.dir.file("out.records"));
  REQUIRE(out.size() == 2);
  CHECK(out[0].id == "v1#0");
  CHECK(out[0].rationale == "I narrow the search to part 1. I narrow the search to part 2.");
  CHECK(out[0].target ==
        "<locate>I narrow the search to part 1. I narrow the search to part 2.</locate>\n"
        "<answer>A</answer>");
  CHECK(out[0].question == "What does the person pick up in v1?");
  CHECK(out[0].prompt == prompts::train_prompt(f.qas[0].qa));
  CHECK(out[1].id == "v3#0");
  CHECK(out[1].rationale == "I narrow the search to part 1.");
  CHECK(f.rejection_reason() == "insufficient_cues");

  // captions 4 + 3 + 1, selection 3, cues 2 + 3 + 1, filter 3, rationale 2
  CHECK(report.backend_calls == 8 + 3 + 6 + 3 + 2);

  const auto recs = report.to_records();
  REQUIRE(recs.size() == 2);
  CHECK(recs[0]["emitted"] == 2);
  CHECK(recs[1] == Json{{"kind", "rejection"}, {"reason", "insufficient_cues"}, {"count", 1}});
}

TEST_CASE("re-running a finished corpus calls nothing and writes the same files") {
  Fixture f;
  f.add("v1", 4, {"[0, 2]"});
  f.add("v2", 3, {"[1]", "No"});
  const auto opts = f.options();
  f.run(opts);
  const auto first = testing::slurp(f.dir.file("out.records"));
  const auto again = f.run(opts, "again.records");
  CHECK(again.backend_calls == 0);
  CHECK(testing::slurp(f.dir.file("again.records")) == first);
  CHECK(testing::slurp(f.dir.file("again.records.rejected")) ==
        testing::slurp(f.dir.file("out.records.rejected")));
}

TEST_CASE("empty input") {
  Fixture f;
  const auto report = f.run(f.options());
  CHECK(report.inputs == 0);
  CHECK(report.emitted == 0);
  CHECK(report.rejections.empty());
  CHECK(testing::slurp(f.dir.file("out.records")).empty());
  CHECK(report.to_records().size() == 1);
}

TEST_CASE("rejection reasons") {
  SUBCASE("selection out of range") {
    Fixture f;
    f.add("v", 4, {"[4]"});
    f.run(f.options());
    CHECK(f.rejection_reason() == "selection_out_of_range");
  }
  SUBCASE("unparseable selection") {
    Fixture f;
    f.add("v", 4, {"```json [2]```"});
    f.run(f.options());
    CHECK(f.rejection_reason() == "selection_unparseable");
  }
  SUBCASE("lenient parsing accepts a fenced array") {
    Fixture f;
    f.add("v", 4, {"```json [2]```"});
    // the lenient run reads [2]; script the remaining stages for that selection
    testing::script_sample(*f.mock, f.clips["v"], f.qas[0].qa, {"[2]"});
    f.mock->add_reply(selection_request(
                          [&] {
                            auto c = f.clips["v"];
                            for (auto& x : c) x.caption = testing::mock_caption(x);
                            return c;
                          }(),
                          f.qas[0].qa, {}),
                      "```json [2]```");
    auto o = f.options();
    o.strict_parsing = false;
    CHECK(f.run(o).emitted == 1);
  }
  SUBCASE("empty selection") {
    Fixture f;
    f.add("v", 4, {"[]"});
    f.run(f.options());
    CHECK(f.rejection_reason() == "selection_empty");
  }
  SUBCASE("unparseable filter reply") {
    Fixture f;
    f.add("v", 4, {"[1]", "It depends"});
    f.run(f.options());
    CHECK(f.rejection_reason() == "filter_unparseable");
  }
  SUBCASE("too many steps") {
    Fixture f;
    f.add("v", 4, {"[0, 2]", "Yes", testing::mock_rationale(3)});
    f.run(f.options());
    CHECK(f.rejection_reason() == "step_count_mismatch");
  }
  SUBCASE("steps out of order") {
    Fixture f;
    f.add("v", 4, {"[0, 2]", "Yes", "Step 2: a. Step 1: b."});
    f.run(f.options());
    CHECK(f.rejection_reason() == "step_count_mismatch");
  }
  SUBCASE("missing clips for the video") {
    Fixture f;
    f.add("v", 4, {"[0]"});
    f.clips.clear();
    f.run(f.options());
    CHECK(f.rejection_reason() == "missing_clips");
  }
  SUBCASE("invalid clip sequence") {
    Fixture f;
    f.add("v", 3, {"[0]"});
    f.clips["v"][1].start_s = 2.0;
    f.run(f.options());
    CHECK(f.rejection_reason() == "invalid_input");
  }
}

TEST_CASE("caption failures") {
  const auto clips = testing::even_clips("v", 2);
  SUBCASE("gateway failure on a clip") {
    auto mock = std::make_shared<gateway::MockBackend>();
    mock->add_reply(clip_caption_request(clips[0], {}), "first");
    mock->add(gateway::request_digest(clip_caption_request(clips[1], {})),
              {{}, std::string("unavailable")});
    gateway::Gateway gw(mock, {}, 1, [](auto) {});
    try {
      caption_clips(gw, clips, {});
      FAIL("expected a rejection");
    } catch (const Rejection& r) {
      CHECK(r.reason() == "caption_failed");
    }
  }
  SUBCASE("empty caption") {
    auto mock = std::make_shared<gateway::MockBackend>();
    mock->add_reply(clip_caption_request(clips[0], {}), "first");
    mock->add_reply(clip_caption_request(clips[1], {}), "  \n");
    gateway::Gateway gw(mock, {}, 1, [](auto) {});
    try {
      caption_clips(gw, clips, {});
      FAIL("expected a rejection");
    } catch (const Rejection& r) {
      CHECK(r.reason() == "empty_caption");
    }
  }
  SUBCASE("two clips captioned in order") {
    auto mock = std::make_shared<gateway::MockBackend>();
    mock->add_reply(clip_caption_request(clips[0], {}), "first");
    mock->add_reply(clip_caption_request(clips[1], {}), "second");
    gateway::Gateway gw(mock, {}, 1, [](auto) {});
    const auto out = caption_clips(gw, clips, {});
    CHECK(*out[0].caption == "first");
    CHECK(*out[1].caption == "second");
  }
  SUBCASE("cue caption failure mid-chain") {
    auto clips4 = testing::even_clips("v", 4);
    const std::vector<cue_tree::Compilation> chain{{{0, 1, 2, 3}, {}}, {{0, 2}, {}}};
    auto mock = std::make_shared<gateway::MockBackend>();
    mock->add_reply(compilation_caption_request(chain[0], clips4, {}), "whole video");
    gateway::Gateway gw(mock, {}, 1, [](auto) {});
    try {
      caption_compilations(gw, chain, clips4, {});
      FAIL("expected a rejection");
    } catch (const Rejection& r) {
      CHECK(r.reason() == "cue_caption_failed");
    }
    mock->add_reply(compilation_caption_request(chain[1], clips4, {}), "two clips");
    const auto out = caption_compilations(gw, chain, clips4, {});
    CHECK(*out[0].caption == "whole video");
    CHECK(*out[1].caption == "two clips");
  }
}

TEST_CASE("stage requests") {
  auto clips = testing::even_clips("v", 4);
  SUBCASE("compilation spans merge adjacent clips") {
    const auto req = compilation_caption_request({{0, 1, 3}, {}}, clips, {});
    REQUIRE(req.messages[0].media.size() == 1);
    const auto& spans = req.messages[0].media[0].spans;
    CHECK(spans == std::vector<std::pair<double, double>>{{0.0, 10.0}, {15.0, 20.0}});
    CHECK(req.model_role == gateway::ModelRole::kMllm);
  }
  SUBCASE("clip descriptions") {
    clips[0].caption = "a";
    clips[1].caption = "b \"quoted\"";
    const auto j = Json::parse(clip_descriptions_json({clips[0], clips[1]}));
    CHECK(j["num_clips"] == 2);
    CHECK(j["clips"][1] == Json{{"index", 1}, {"description", "b \"quoted\""}});
  }
  SUBCASE("selection prompt carries the question and answer") {
    for (auto& c : clips) c.caption = "x";
    const auto req = selection_request(clips, qa(), {});
    CHECK(req.model_role == gateway::ModelRole::kLlm);
    const auto& text = req.messages[0].text;
    CHECK(text.find(Json{{"question", full_question(qa())}}.dump()) != std::string::npos);
    CHECK(text.find("{\"answer\":\"A\"}") != std::string::npos);
  }
  SUBCASE("linearized trajectory") {
    CHECK(linearize_trajectory({"whole", "part"}) == "Step 1: whole Step 2: part");
    const auto req = rationale_request({"whole", "part"}, qa(), {});
    CHECK(req.messages[0].text.find("Step 1: whole Step 2: part") != std::string::npos);
  }
  SUBCASE("key clip selection") {
    for (auto& c : clips) c.caption = "x";
    auto mock = std::make_shared<gateway::MockBackend>();
    gateway::Gateway gw(mock, {}, 1, [](auto) {});
    mock->add_reply(selection_request(clips, qa(), {}), "[2]");
    CHECK(select_key_clips(gw, clips, qa(), {}) == std::set<int>{2});
    mock->add_reply(selection_request(clips, qa(), {}), "[0, 2]");
    CHECK(select_key_clips(gw, clips, qa(), {}) == std::set<int>{0, 2});
  }
  SUBCASE("filter keeps on yes") {
    auto mock = std::make_shared<gateway::MockBackend>();
    gateway::Gateway gw(mock, {}, 1, [](auto) {});
    mock->add_reply(filter_request("cue", qa(), {}), "Yes");
    CHECK(filter_low_quality(gw, "cue", qa(), {}));
    mock->add_reply(filter_request("cue", qa(), {}), "No");
    CHECK_FALSE(filter_low_quality(gw, "cue", qa(), {}));
  }
}

TEST_CASE("state files record monotone progress") {
  Fixture f;
  f.add("v#odd/id", 4, {"[0, 3]"});
  f.add("w", 5, {"[4]", "No"});
  f.run(f.options());
  size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(f.dir.file("state"))) {
    ++files;
    const auto st = Json::parse(testing::slurp(e.path().string())).get<PipelineState>();
    CHECK(is_terminal(st.stage));
    if (st.stage == Stage::kEmitted) {
      // one step marker per cue description
      const auto cues = st.payload["cues"].get<std::vector<std::string>>();
      CHECK(prompts::find_step_markers(st.payload["rationale_reply"].get<std::string>()).size() ==
            cues.size());
      const auto comps = st.payload["compilations"].get<std::vector<std::vector<int>>>();
      CHECK(comps.front() == std::vector<int>{0, 1, 2, 3});
      CHECK(comps.back() == std::vector<int>{0, 3});
    } else {
      CHECK(st.reason == "insufficient_cues");
    }
  }
  CHECK(files == 2);
}

TEST_CASE("crash and resume reproduce the clean run") {
  auto build = [](Fixture& f) {
    for (int v = 0; v < 6; ++v) {
      const std::string vid = "vid" + std::to_string(v);
      f.add(vid, 2 + v, {"[" + std::to_string(v % 2) + ", " + std::to_string(1 + v) + "]",
                         v == 3 ? "No" : "Yes"});
    }
  };
  Fixture clean;
  build(clean);
  clean.run(clean.options());

  for (size_t crash_at : {1u, 5u, 17u, 30u}) {
    Fixture f;
    build(f);
    auto o = f.options();
    o.crash_after_transitions = crash_at;
    CHECK_THROWS_AS(f.run(o), SimulatedCrash);
    o.crash_after_transitions.reset();
    f.run(o);
    CHECK(testing::slurp(f.dir.file("out.records")) ==
          testing::slurp(clean.dir.file("out.records")));
    CHECK(testing::slurp(f.dir.file("out.records.rejected")) ==
          testing::slurp(clean.dir.file("out.records.rejected")));
  }

  Fixture par;
  build(par);
  auto o = par.options();
  o.parallelism = 4;
  par.run(o);
  CHECK(testing::slurp(par.dir.file("out.records")) ==
        testing::slurp(clean.dir.file("out.records")));
}

TEST_CASE("duplicate sample ids are refused") {
  Fixture f;
  f.add("v", 2, {"[0]"});
  f.qas.push_back(f.qas.back());
  CHECK_THROWS_AS(f.run(f.options()), ValidationError);
}

TEST_CASE("stage names round trip") {
  for (auto s : {Stage::kPending, Stage::kCaptioned, Stage::kSelected, Stage::kCompiled,
                 Stage::kCueCaptioned, Stage::kFiltered, Stage::kSummarized, Stage::kEmitted,
                 Stage::kRejected})
    CHECK(stage_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(stage_from_string("done"), RecordError);
}

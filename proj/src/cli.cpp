#include "toc/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "toc/config.hpp"
#include "toc/core_model.hpp"
#include "toc/cue_tree.hpp"
#include "toc/errors.hpp"
#include "toc/parallel.hpp"
#include "toc/reward.hpp"
#include "toc/rl_pipeline.hpp"
#include "toc/segmentation.hpp"
#include "toc/sft_pipeline.hpp"

namespace toc::cli {

namespace {

using gateway::ModelRole;

std::string fmt12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--select expects comma-separated integers, got '" + s + "'");
    }
  }
  return out;
}

std::pair<double, double> parse_band(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw UsageError("--band expects lo:hi, got '" + s + "'");
  try {
    return {std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))};
  } catch (const std::exception&) {
    throw UsageError("--band expects lo:hi, got '" + s + "'");
  }
}

// Options shared by every subcommand.
struct Common {
  std::string config_path;
  std::string report_path;
  std::string output;
  int parallelism = 0;
};

Config resolve_config(const Common& c) {
  Config cfg = c.config_path.empty() ? Config{} : load_config(c.config_path);
  if (c.parallelism > 0) cfg.parallelism = c.parallelism;
  return cfg;
}

std::string report_path_for(const Common& c) {
  if (!c.report_path.empty()) return c.report_path;
  if (!c.output.empty()) return c.output + ".report";
  return {};
}

void write_report(const Common& c, const std::vector<Json>& records) {
  const auto path = report_path_for(c);
  if (!path.empty()) write_records(path, records);
}

// --- subcommands ---------------------------------------------------------------

int cmd_segment(const Common& c, const std::string& shots_path, std::optional<double> tau,
                std::ostream& out) {
  Config cfg = resolve_config(c);
  if (tau) cfg.tau = *tau;
  validate(cfg);
  set_threads(cfg.parallelism);

  std::vector<segmentation::ShotBoundarySet> videos;
  size_t shots = 0;
  for (const auto& j : read_records(shots_path)) {
    videos.push_back(j.get<segmentation::ShotBoundarySet>());
    shots += videos.back().shot_count();
  }
  const auto clips = segmentation::stitch_all(videos, cfg.tau);
  std::vector<Json> records;
  for (const auto& v : clips)
    for (const auto& clip : v) records.emplace_back(clip);
  write_records(c.output, records);
  write_report(c, {Json{{"kind", "summary"},
                        {"command", "segment"},
                        {"videos", videos.size()},
                        {"shots", shots},
                        {"clips", records.size()},
                        {"tau", cfg.tau}}});
  out << "segmented " << videos.size() << " videos: " << shots << " shots -> " << records.size()
      << " clips\n";
  return kOk;
}

int cmd_tree(const Common& c, int n, const std::string& select, std::ostream& out) {
  const auto tree = cue_tree::build_tree(n);
  const auto sel = parse_int_list(select);
  const auto sub = cue_tree::backtrack(tree, {sel.begin(), sel.end()});
  const auto chain = cue_tree::layer_compilations(sub);
  out << cue_tree::describe(sub, chain);
  write_report(c, {Json{{"kind", "summary"},
                        {"command", "tree"},
                        {"n_leaves", n},
                        {"layers", sub.layers.size()},
                        {"compilations", chain.size()}}});
  return kOk;
}

int cmd_build_sft(const Common& c, const std::string& videos_path, const std::string& qa_path,
                  std::string state_dir, std::string rejected_path, bool lenient,
                  std::ostream& out) {
  if (c.config_path.empty()) throw UsageError("build-sft requires --config");
  Config cfg = resolve_config(c);
  if (lenient) cfg.strict_parsing = false;
  validate(cfg);
  auto gw = make_gateway(cfg, {ModelRole::kMllm, ModelRole::kLlm});

  const auto clips = read_records_as<Clip>(videos_path);
  const auto qas = read_qa_file(qa_path);

  sft::SftOptions opts;
  opts.parallelism = cfg.parallelism;
  opts.strict_parsing = cfg.strict_parsing;
  opts.generation = cfg.generation;
  opts.state_dir = state_dir.empty() ? c.output + ".state" : std::move(state_dir);
  if (rejected_path.empty()) rejected_path = c.output + ".rejected";

  const auto report = sft::run_sft_pipeline(*gw, sft::group_clips_by_video(clips), qas, opts,
                                            c.output, rejected_path);
  write_report(c, report.to_records());
  out << "build-sft: " << report.inputs << " samples, " << report.emitted << " emitted, "
      << (report.inputs - report.emitted) << " rejected, " << report.backend_calls
      << " backend calls\n";
  return kOk;
}

int cmd_estimate_demand(const Common& c, const std::string& qa_path, std::optional<int> m,
                        std::string trials_path, std::ostream& out) {
  if (c.config_path.empty()) throw UsageError("estimate-demand requires --config");
  Config cfg = resolve_config(c);
  if (m) cfg.m_trials = *m;
  validate(cfg);
  auto gw = make_gateway(cfg, {ModelRole::kMllm});

  const auto qas = read_qa_file(qa_path);
  const auto res = rl::run_estimate_demand(*gw, qas, cfg.m_trials, cfg.generation, cfg.parallelism);
  write_records_from(c.output, res.samples);
  if (trials_path.empty()) trials_path = c.output + ".trials";
  write_records_from(trials_path, res.trials);

  std::map<int, size_t> alpha_hist;
  for (const auto& s : res.samples) ++alpha_hist[s.alpha];
  std::vector<Json> report{Json{{"kind", "summary"},
                                {"command", "estimate-demand"},
                                {"inputs", qas.size()},
                                {"estimated", res.samples.size()},
                                {"m_trials", cfg.m_trials}}};
  for (const auto& [reason, n] : res.skipped)
    report.push_back(Json{{"kind", "skipped"}, {"reason", reason}, {"count", n}});
  for (const auto& [alpha, n] : alpha_hist)
    report.push_back(Json{{"kind", "alpha"}, {"alpha", alpha}, {"count", n}});
  write_report(c, report);
  out << "estimate-demand: " << res.samples.size() << " of " << qas.size()
      << " samples estimated with M=" << cfg.m_trials << "\n";
  return kOk;
}

int cmd_build_rl(const Common& c, const std::string& in_path, const std::string& band,
                 std::optional<int> target, std::optional<std::uint64_t> seed, std::ostream& out,
                 std::ostream& err) {
  Config cfg = resolve_config(c);
  if (!band.empty()) std::tie(cfg.band_lo, cfg.band_hi) = parse_band(band);
  if (target) cfg.target_rl_size = *target;
  if (seed) cfg.seed = *seed;
  if (!(cfg.band_lo < cfg.band_hi)) throw InvalidBandError("difficulty band needs lo < hi");
  validate(cfg);

  const auto samples = read_records_as<RlSample>(in_path);
  const auto in_band = rl::filter_by_difficulty(samples, cfg.band_lo, cfg.band_hi);
  const auto balanced = rl::balance_tiers(in_band, cfg.target_rl_size, cfg.seed);
  write_records_from(c.output, balanced.samples);

  std::vector<Json> report{Json{{"kind", "summary"},
                                {"command", "build-rl"},
                                {"inputs", samples.size()},
                                {"in_band", in_band.size()},
                                {"emitted", balanced.samples.size()},
                                {"target", cfg.target_rl_size},
                                {"seed", cfg.seed},
                                {"band", {cfg.band_lo, cfg.band_hi}}}};
  for (const auto& [tier, n] : balanced.per_tier)
    report.push_back(Json{{"kind", "tier"},
                          {"difficulty", static_cast<double>(tier.first) / tier.second},
                          {"count", n}});
  if (balanced.warning) {
    report.push_back(Json{{"kind", "warning"}, {"message", *balanced.warning}});
    err << "warning: " << *balanced.warning << "\n";
  }
  write_report(c, report);
  out << "build-rl: " << samples.size() << " inputs, " << in_band.size() << " in band, "
      << balanced.samples.size() << " emitted\n";
  return kOk;
}

// Correctness flags of one group line: given directly as "correct", or
// derived from raw "responses" against the gold "answer".
std::vector<bool> group_flags(const Json& j, size_t g, const reward::MatchOptions& match) {
  const auto where = "group " + std::to_string(g);
  std::vector<bool> flags;
  if (j.contains("correct")) {
    for (const auto& f : j["correct"]) {
      if (f.is_boolean()) {
        flags.push_back(f.get<bool>());
      } else if (f.is_number_integer() && (f == 0 || f == 1)) {
        flags.push_back(f == 1);
      } else {
        throw RecordError(where + ": 'correct' entries must be booleans");
      }
    }
    return flags;
  }
  if (j.contains("responses") && j.contains("answer")) {
    const auto type = qa_type_from_string(j.value("qa_type", std::string("multiple_choice")));
    const auto gold = j["answer"].get<std::string>();
    for (const auto& r : j["responses"])
      flags.push_back(reward::answers_match(reward::extract_answer(r.get<std::string>()), gold,
                                            type, match));
    return flags;
  }
  throw RecordError(where + " needs 'correct' or 'responses' and 'answer'");
}

int cmd_reward(const Common& c, const std::string& group_path, std::optional<double> rel_tol,
               std::ostream& out) {
  reward::MatchOptions match;
  if (!c.config_path.empty()) match.numeric_rel_tol = resolve_config(c).numeric_rel_tol;
  if (rel_tol) match.numeric_rel_tol = *rel_tol;

  std::vector<Json> report;
  std::ostringstream table;
  table << "group\tresponse\tcorrect\treward\tadvantage\tscaled_advantage\n";
  size_t g = 0;
  for (const auto& j : read_records(group_path)) {
    double gamma = 1.0;
    std::vector<bool> flags;
    try {
      if (j.contains("gamma")) {
        gamma = j["gamma"].get<double>();
      } else if (j.contains("alpha") && j.contains("m")) {
        gamma = reasoning_demand(j["alpha"].get<int>(), j["m"].get<int>());
      } else {
        throw RecordError("group " + std::to_string(g) + " needs 'gamma' or 'alpha' and 'm'");
      }
      flags = group_flags(j, g, match);
    } catch (const Json::exception& e) {
      throw RecordError("group " + std::to_string(g) + ": " + e.what());
    }
    const auto grp = reward::evaluate_group(gamma, flags);
    for (size_t i = 0; i < grp.outcomes.size(); ++i) {
      const auto& o = grp.outcomes[i];
      table << g << '\t' << i << '\t' << (o.correct ? 1 : 0) << '\t' << fmt12(o.reward) << '\t'
            << fmt12(o.advantage) << '\t' << fmt12(o.scaled_advantage) << '\n';
    }
    report.push_back(Json{{"kind", "group"},
                          {"group", g},
                          {"gamma", gamma},
                          {"size", grp.size},
                          {"correct", grp.x}});
    ++g;
  }
  out << table.str();
  report.insert(report.begin(), Json{{"kind", "summary"}, {"command", "reward"}, {"groups", g}});
  write_report(c, report);
  return kOk;
}

reward::GroupInput parse_logprob_group(const Json& j, size_t g) {
  reward::GroupInput in;
  try {
    in.logprobs.current = j.at("current").get<std::vector<std::vector<double>>>();
    in.logprobs.old = j.at("old").get<std::vector<std::vector<double>>>();
    in.logprobs.ref = j.at("ref").get<std::vector<std::vector<double>>>();
    in.advantages = j.at("advantages").get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw RecordError("logprob group " + std::to_string(g) + ": " + e.what());
  }
  return in;
}

int cmd_grpo_eval(const Common& c, const std::string& path, double epsilon, double beta,
                  std::ostream& out) {
  std::vector<reward::GroupInput> groups;
  for (const auto& j : read_records(path)) groups.push_back(parse_logprob_group(j, groups.size()));
  const reward::ObjectiveParams params{epsilon, beta};
  const double total = reward::grpo_objective(groups, params);
  for (size_t g = 0; g < groups.size(); ++g)
    out << "group\t" << g << '\t' << fmt12(reward::group_objective(groups[g], params)) << '\n';
  out << "objective\t" << fmt12(total) << '\n';
  write_report(c, {Json{{"kind", "summary"},
                        {"command", "grpo-eval"},
                        {"groups", groups.size()},
                        {"epsilon", epsilon},
                        {"beta", beta},
                        {"objective", total}}});
  return kOk;
}

int exit_code_for(const Error& e) {
  const std::string_view n = e.name();
  if (n == "UsageError") return kUsage;
  if (n == "ConfigError") return kConfig;
  return kData;
}

void report_error(std::ostream& err, const Common& c, const char* kind, const std::string& msg) {
  const Json j{{"kind", "error"}, {"error", kind}, {"message", msg}};
  err << to_record_line(j) << '\n';
  try {
    write_report(c, {j});
  } catch (const std::exception&) {
    // the error line on stderr is the authoritative report
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tree-of-cue dataset construction and reasoning-demand reward toolkit", "toc"};
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  auto add_common = [&](CLI::App* sub, bool with_output, bool output_required) {
    sub->add_option("--config", common.config_path, "JSON config file");
    sub->add_option("--report", common.report_path,
                    "Report file (default: <output>.report)");
    if (with_output) {
      auto* o = sub->add_option("-o,--output", common.output, "Output record file");
      if (output_required) o->required();
    }
  };

  // segment
  auto* seg = app.add_subcommand("segment", "Stitch shot boundaries into clips");
  std::string shots_path;
  std::optional<double> tau;
  seg->add_option("--shots", shots_path, "Shot boundary records")->required();
  seg->add_option("--tau", tau, "Cosine similarity threshold for stitching (default 0.85)");
  seg->add_option("--parallelism", common.parallelism, "Worker threads");
  add_common(seg, true, true);

  // tree
  auto* tree = app.add_subcommand("tree", "Print the trajectory layers and compilations");
  int n_leaves = 0;
  std::string select;
  tree->add_option("--n", n_leaves, "Number of clips (leaves)")->required();
  tree->add_option("--select", select, "Selected leaf indices, e.g. 0,2")->required();
  tree->add_option("--report", common.report_path, "Report file");

  // build-sft
  auto* sft = app.add_subcommand("build-sft", "Build tree-of-cue SFT records");
  std::string videos_path, qa_path, state_dir, rejected_path;
  bool lenient = false;
  sft->add_option("--videos", videos_path, "Clip records")->required();
  sft->add_option("--qa", qa_path, "QA records")->required();
  sft->add_option("--state-dir", state_dir, "Per-sample state (default: <output>.state)");
  sft->add_option("--rejected", rejected_path, "Rejected samples (default: <output>.rejected)");
  sft->add_option("--parallelism", common.parallelism, "Concurrent samples");
  sft->add_flag("--lenient", lenient, "Accept the first bracketed array in selection replies");
  add_common(sft, true, true);

  // estimate-demand
  auto* est = app.add_subcommand("estimate-demand", "Estimate reasoning demand by direct answering");
  std::string est_qa, trials_path;
  std::optional<int> m;
  est->add_option("--qa", est_qa, "QA records")->required();
  est->add_option("--m", m, "Trials per question (default 8)");
  est->add_option("--trials", trials_path, "Trial records (default: <output>.trials)");
  est->add_option("--parallelism", common.parallelism, "Concurrent samples");
  add_common(est, true, true);

  // build-rl
  auto* brl = app.add_subcommand("build-rl", "Filter by difficulty band and balance tiers");
  std::string in_path, band;
  std::optional<int> target;
  std::optional<std::uint64_t> seed;
  brl->add_option("--in", in_path, "Demand records from estimate-demand")->required();
  brl->add_option("--band", band, "Inclusive difficulty band lo:hi (default 0.2:0.8)");
  brl->add_option("--target", target, "Dataset size (default 2000)");
  brl->add_option("--seed", seed, "Sampling seed");
  add_common(brl, true, true);

  // reward
  auto* rew = app.add_subcommand("reward", "Rewards and advantages for response groups");
  std::string group_path;
  std::optional<double> rel_tol;
  rew->add_option("--group", group_path,
                  "Group records: gamma (or alpha and m) plus correct flags, or responses "
                  "with the gold answer")
      ->required();
  rew->add_option("--numeric-rel-tol", rel_tol, "Relative tolerance for numerical answers");
  rew->add_option("--config", common.config_path, "JSON config file");
  rew->add_option("--report", common.report_path, "Report file");

  // grpo-eval
  auto* grpo = app.add_subcommand("grpo-eval", "Evaluate the clipped GRPO objective");
  std::string logprobs_path;
  double epsilon = 0.2, beta = 0.0;
  grpo->add_option("--logprobs", logprobs_path, "Log-prob group records")->required();
  grpo->add_option("--epsilon", epsilon, "Clipping range")->required();
  grpo->add_option("--beta", beta, "KL coefficient")->required();
  grpo->add_option("--report", common.report_path, "Report file");

  std::vector<std::string> argv_storage{"toc"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_storage) argv.push_back(s.data());

  if (!args.empty() && !args[0].empty() && args[0][0] != '-') {
    bool known = false;
    for (const auto* sub : app.get_subcommands({}))
      known = known || sub->get_name() == args[0];
    if (!known) {
      report_error(err, common, "UsageError", "unknown subcommand '" + args[0] + "'");
      return kUsage;
    }
  }

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    report_error(err, common, "UsageError", e.what());
    return kUsage;
  }

  try {
    if (seg->parsed()) return cmd_segment(common, shots_path, tau, out);
    if (tree->parsed()) return cmd_tree(common, n_leaves, select, out);
    if (sft->parsed())
      return cmd_build_sft(common, videos_path, qa_path, state_dir, rejected_path, lenient, out);
    if (est->parsed()) return cmd_estimate_demand(common, est_qa, m, trials_path, out);
    if (brl->parsed()) return cmd_build_rl(common, in_path, band, target, seed, out, err);
    if (rew->parsed()) return cmd_reward(common, group_path, rel_tol, out);
    if (grpo->parsed()) return cmd_grpo_eval(common, logprobs_path, epsilon, beta, out);
    throw UsageError("no subcommand given");
  } catch (const Error& e) {
    report_error(err, common, e.name(), e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    report_error(err, common, "InternalError", e.what());
    return kFailure;
  }
}

}  // namespace toc::cli

#include "kfe/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <json.hpp>

namespace kfe {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(ExampleSource s) {
  return s == ExampleSource::Retrieved ? "retrieved" : "random";
}

std::optional<ExampleSource> example_source_from_string(std::string_view s) {
  if (s == "retrieved") return ExampleSource::Retrieved;
  if (s == "random") return ExampleSource::Random;
  return std::nullopt;
}

std::string to_string(SweepKind k) {
  switch (k) {
    case SweepKind::Shots: return "shots";
    case SweepKind::Strategy: return "strategy";
    case SweepKind::Instruction: return "instruction";
    case SweepKind::Knowledge: return "knowledge";
    case SweepKind::Source: return "source";
    case SweepKind::Constrained: return "constrained";
  }
  return "shots";
}

std::optional<SweepKind> sweep_from_string(std::string_view s) {
  if (s == "shots") return SweepKind::Shots;
  if (s == "strategy") return SweepKind::Strategy;
  if (s == "instruction") return SweepKind::Instruction;
  if (s == "knowledge") return SweepKind::Knowledge;
  if (s == "source") return SweepKind::Source;
  if (s == "constrained") return SweepKind::Constrained;
  return std::nullopt;
}

std::size_t effective_reserve(const RunConfig& config) {
  if (config.response_reserve) return *config.response_reserve;
  return config.instruction == InstructionKind::Steps ? 512 : 16;
}

void validate_config(const RunConfig& config) {
  if (config.budget <= effective_reserve(config))
    throw ConfigError("budget must exceed the response reserve");
  if (config.example_source == ExampleSource::Random && !config.random_seed)
    throw ConfigError("example_source=random requires a seed");
  if (config.paths.exam.empty()) throw ConfigError("exam path is required");
  if (config.use_knowledge && config.paths.knowledge_index.empty())
    throw ConfigError("use_knowledge requires a knowledge index path");
  if (config.num_shots > 0 && config.paths.bank_index.empty())
    throw ConfigError("num_shots > 0 requires a bank index path");
  if (config.paths.replay_store.empty())
    throw ConfigError("replay store path is required");
  if (config.llm.max_concurrency < 1)
    throw ConfigError("max_concurrency must be >= 1");
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw ConfigError("config '" + path + "' is not a JSON object");

  RunConfig config;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "instruction") {
        auto k = instruction_from_string(value.get<std::string>());
        if (!k) throw ConfigError("unknown instruction '" + value.get<std::string>() + "'");
        config.instruction = *k;
      } else if (key == "strategy") {
        auto s = strategy_from_string(value.get<std::string>());
        if (!s) throw ConfigError("unknown strategy '" + value.get<std::string>() + "'");
        config.strategy = *s;
      } else if (key == "num_shots") {
        config.num_shots = value.get<std::size_t>();
      } else if (key == "use_knowledge") {
        config.use_knowledge = value.get<bool>();
      } else if (key == "example_source") {
        auto s = example_source_from_string(value.get<std::string>());
        if (!s) throw ConfigError("unknown example_source '" + value.get<std::string>() + "'");
        config.example_source = *s;
      } else if (key == "random_seed") {
        config.random_seed = value.get<std::uint64_t>();
      } else if (key == "budget") {
        config.budget = value.get<std::size_t>();
      } else if (key == "response_reserve") {
        if (!value.is_null()) config.response_reserve = value.get<std::size_t>();
      } else if (key == "constrained") {
        config.constrained = value.get<bool>();
      } else if (key == "pass_threshold") {
        config.pass_threshold = value.get<double>();
      } else if (key == "replay_only") {
        config.replay_only = value.get<bool>();
      } else if (key == "resume") {
        config.resume = value.get<bool>();
      } else if (key == "quiet") {
        config.quiet = value.get<bool>();
      } else if (key == "templates") {
        config.templates = load_templates(value.get<std::string>());
      } else if (key == "llm") {
        for (const auto& [lk, lv] : value.items()) {
          if (lk == "base_url") config.llm.base_url = lv.get<std::string>();
          else if (lk == "model_name") config.llm.model_name = lv.get<std::string>();
          else if (lk == "api_key_env") config.llm.api_key_env = lv.get<std::string>();
          else if (lk == "timeout_s") config.llm.timeout_s = lv.get<double>();
          else if (lk == "max_retries") config.llm.max_retries = lv.get<int>();
          else if (lk == "max_concurrency") config.llm.max_concurrency = lv.get<int>();
          else if (lk == "requests_per_minute") config.llm.requests_per_minute = lv.get<int>();
          else if (lk == "backoff_base_s") config.llm.backoff_base_s = lv.get<double>();
          else throw ConfigError("unknown llm config key '" + lk + "'");
        }
      } else if (key == "paths") {
        for (const auto& [pk, pv] : value.items()) {
          if (pk == "knowledge_index") config.paths.knowledge_index = pv.get<std::string>();
          else if (pk == "bank_index") config.paths.bank_index = pv.get<std::string>();
          else if (pk == "exam") config.paths.exam = pv.get<std::string>();
          else if (pk == "replay_store") config.paths.replay_store = pv.get<std::string>();
          else if (pk == "report_out") config.paths.report_out = pv.get<std::string>();
          else throw ConfigError("unknown path key '" + pk + "'");
        }
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  return config;
}

Workspace load_workspace(const RunConfig& config) {
  Workspace ws;
  auto exam = load_exam(config.paths.exam);
  for (const auto& d : exam.diagnostics)
    std::fprintf(stderr, "warning: exam %s:%zu: %s\n", config.paths.exam.c_str(),
                 d.line, d.message.c_str());
  ws.exam = std::move(exam.questions);
  if (config.use_knowledge)
    ws.knowledge = load_knowledge_index(config.paths.knowledge_index);
  if (config.num_shots > 0 || config.example_source == ExampleSource::Random)
    ws.bank = load_bank_index(config.paths.bank_index);
  return ws;
}

namespace {

// Deterministic bounded draw; std::uniform_int_distribution is
// implementation-defined, which would break cross-platform report equality.
std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

std::vector<ExamQuestion> sample_random_examples(const QuestionBank& bank,
                                                 const ExamQuestion& question,
                                                 std::size_t k, std::uint64_t seed,
                                                 std::size_t question_index) {
  std::vector<std::size_t> pool;
  pool.reserve(bank.entries.size());
  for (std::size_t i = 0; i < bank.entries.size(); ++i)
    if (bank.entries[i].id != question.id) pool.push_back(i);

  // Per-question stream so results do not depend on worker scheduling.
  std::seed_seq seq{seed, static_cast<std::uint64_t>(question_index)};
  std::mt19937_64 rng(seq);

  const std::size_t take = std::min(k, pool.size());
  std::vector<ExamQuestion> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + bounded_draw(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
    out.push_back(bank.entries[pool[i]]);
  }
  return out;
}

constexpr std::size_t kGeneratedCorrectOverfetch = 8;

struct QuestionContext {
  const Workspace& workspace;
  const RunConfig& config;
  LlmClient& llm;
  LlmParams base_params;
  LlmParams final_params;
};

ResultInput process_question(const QuestionContext& ctx, const ExamQuestion& question,
                             std::size_t index) {
  const RunConfig& config = ctx.config;
  ResultInput result;
  result.question_id = question.id;
  try {
    std::vector<KnowledgePiece> knowledge;
    if (config.use_knowledge) {
      auto slots = retrieve_knowledge(ctx.workspace.knowledge->index,
                                      ctx.workspace.knowledge->base, question);
      for (const auto& slot : slots)
        if (slot.piece) knowledge.push_back(*slot.piece);
    }

    std::vector<FewShotBlock> shots;
    if (config.num_shots > 0) {
      const QuestionBank& bank = ctx.workspace.bank->bank;
      std::vector<ExamQuestion> candidates;
      const std::size_t fetch = config.strategy == Strategy::GeneratedCorrectAns
                                    ? config.num_shots * kGeneratedCorrectOverfetch
                                    : config.num_shots;
      if (config.example_source == ExampleSource::Random) {
        candidates = sample_random_examples(bank, question, fetch,
                                            *config.random_seed, index);
      } else {
        candidates = retrieve_examples(ctx.workspace.bank->index, bank, question, fetch);
      }
      if (config.strategy == Strategy::GeneratedCorrectAns) {
        shots = select_generated_correct(candidates, ctx.llm, config.num_shots,
                                         config.templates, ctx.base_params);
      } else {
        shots.reserve(candidates.size());
        for (const auto& c : candidates)
          shots.push_back(enrich(c, config.strategy, ctx.llm, config.templates,
                                 ctx.base_params));
      }
    }

    const AssembledPrompt prompt =
        assemble(config.instruction, knowledge, shots, question, config.budget,
                 effective_reserve(config), config.templates);
    result.prompt_meta.shots = prompt.included_shots;
    result.prompt_meta.knowledge = prompt.included_knowledge;
    for (const auto& d : prompt.dropped)
      result.prompt_meta.dropped.emplace_back(d.kind, d.id);

    const LlmResponse response = ctx.llm.complete(prompt.text, ctx.final_params);
    result.response_text = response.text;
    result.predicted = extract_answer(response.text, question.options);
  } catch (const std::exception& e) {
    result.error = e.what();
    result.predicted.reset();
    result.response_text.clear();
  }
  return result;
}

ResultInput process_self_inquiry(const QuestionContext& ctx,
                                 const ExamQuestion& question) {
  const RunConfig& config = ctx.config;
  ResultInput result;
  result.question_id = question.id;
  try {
    const auto prompts = self_inquiry_prompts(question, config.templates);
    std::array<std::string, 5> meanings;
    for (char label : kOptionLabels) {
      const LlmResponse r =
          ctx.llm.complete(prompts[label_index(label)], ctx.base_params);
      meanings[label_index(label)] = r.text;
    }
    const AssembledPrompt prompt = assemble_self_inquiry_final(
        question, meanings, config.instruction, config.budget,
        effective_reserve(config), config.templates);
    result.prompt_meta.shots = 0;
    result.prompt_meta.knowledge = prompt.included_knowledge;
    for (const auto& d : prompt.dropped)
      result.prompt_meta.dropped.emplace_back(d.kind, d.id);

    const LlmResponse response = ctx.llm.complete(prompt.text, ctx.final_params);
    result.response_text = response.text;
    result.predicted = extract_answer(response.text, question.options);
  } catch (const std::exception& e) {
    result.error = e.what();
    result.predicted.reset();
    result.response_text.clear();
  }
  return result;
}

void check_workspace(const Workspace& ws, const RunConfig& config) {
  if (ws.exam.empty()) throw ConfigError("exam is empty");
  for (const auto& q : ws.exam) {
    if (!q.answer) throw ConfigError("exam question '" + q.id + "' has no gold answer");
    if (!q.category) throw ConfigError("exam question '" + q.id + "' has no category");
  }
  if (config.use_knowledge && !ws.knowledge)
    throw ConfigError("knowledge index not loaded");
  if (config.num_shots > 0 && !ws.bank) throw ConfigError("bank index not loaded");
}

// Prefills results from an earlier report so --resume skips finished work.
std::unordered_map<std::string, ResultInput> load_resume_entries(
    const RunConfig& config) {
  std::unordered_map<std::string, ResultInput> entries;
  if (!config.resume || config.paths.report_out.empty()) return entries;
  if (!fs::exists(config.paths.report_out)) return entries;
  const ExamReport previous = read_report(config.paths.report_out);
  for (const auto& q : previous.per_question) {
    ResultInput r;
    r.question_id = q.question_id;
    r.predicted = q.predicted;
    r.response_text = q.response_text;
    r.prompt_meta = q.prompt_meta;
    r.error = q.error;
    entries.emplace(r.question_id, std::move(r));
  }
  return entries;
}

template <typename ProcessFn>
RunOutcome run_loop(const Workspace& workspace, const RunConfig& config,
                    LlmClient& llm, ProcessFn&& process) {
  validate_config(config);
  check_workspace(workspace, config);

  QuestionContext ctx{workspace, config, llm,
                      LlmParams{0.0, std::nullopt, std::nullopt, config.llm.model_name},
                      config.constrained
                          ? constrained_params(config.llm.model_name)
                          : LlmParams{0.0, std::nullopt, std::nullopt,
                                      config.llm.model_name}};

  const auto resume_entries = load_resume_entries(config);
  const std::size_t total = workspace.exam.size();
  std::vector<ResultInput> results(total);
  std::vector<char> done(total, 0);
  for (std::size_t i = 0; i < total; ++i) {
    auto it = resume_entries.find(workspace.exam[i].id);
    if (it != resume_entries.end() && it->second.error.empty()) {
      results[i] = it->second;
      done[i] = 1;
    }
  }

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> completed{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= total) break;
      if (!done[i]) results[i] = process(ctx, workspace.exam[i], i);
      const std::size_t n = completed.fetch_add(1) + 1;
      if (!config.quiet) {
        std::lock_guard lock(log_mutex);
        const auto& r = results[i];
        std::fprintf(stderr, "[%zu/%zu] %s %s%s\n", n, total,
                     r.question_id.c_str(),
                     r.error.empty() ? (r.predicted ? "ok" : "no-answer") : "failed: ",
                     r.error.c_str());
      }
    }
  };

  const std::size_t n_workers =
      std::min<std::size_t>(std::max(config.llm.max_concurrency, 1), total);
  std::vector<std::thread> threads;
  threads.reserve(n_workers);
  for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  RunOutcome outcome;
  outcome.report = grade(results, workspace.exam, config.pass_threshold);
  for (const auto& r : results)
    if (!r.error.empty()) ++outcome.failed_questions;
  return outcome;
}

}  // namespace

RunOutcome run_on(const Workspace& workspace, const RunConfig& config,
                  LlmClient& llm) {
  return run_loop(workspace, config, llm,
                  [](const QuestionContext& ctx, const ExamQuestion& q,
                     std::size_t index) { return process_question(ctx, q, index); });
}

RunOutcome run_self_inquiry_on(const Workspace& workspace, const RunConfig& config,
                               LlmClient& llm) {
  return run_loop(workspace, config, llm,
                  [](const QuestionContext& ctx, const ExamQuestion& q,
                     std::size_t) { return process_self_inquiry(ctx, q); });
}

namespace {

RunOutcome run_with_store(const RunConfig& config,
                          RunOutcome (*runner)(const Workspace&, const RunConfig&,
                                               LlmClient&)) {
  validate_config(config);
  const Workspace workspace = load_workspace(config);
  ReplayStore store(config.paths.replay_store);
  std::unique_ptr<HttpLlmClient> upstream;
  if (!config.replay_only) upstream = std::make_unique<HttpLlmClient>(config.llm);
  ReplayLlmClient client(store, upstream.get());
  RunOutcome outcome = runner(workspace, config, client);
  if (!config.paths.report_out.empty()) {
    const bool csv = config.paths.report_out.size() > 4 &&
                     config.paths.report_out.rfind(".csv") ==
                         config.paths.report_out.size() - 4;
    write_report(outcome.report, config.paths.report_out,
                 csv ? ReportFormat::Csv : ReportFormat::Json);
  }
  return outcome;
}

}  // namespace

RunOutcome run_exam(const RunConfig& config) {
  return run_with_store(config, &run_on);
}

RunOutcome run_self_inquiry(const RunConfig& config) {
  return run_with_store(config, &run_self_inquiry_on);
}

std::vector<SweepPoint> ablate(const RunConfig& base, SweepKind sweep,
                               const std::string& out_dir) {
  validate_config(base);
  fs::create_directories(out_dir);

  struct Point {
    std::string label;
    RunConfig config;
  };
  std::vector<Point> points;
  auto add = [&](std::string label, RunConfig config) {
    points.push_back({std::move(label), std::move(config)});
  };

  switch (sweep) {
    case SweepKind::Shots:
      for (std::size_t k : {1, 3, 6, 9, 12}) {
        RunConfig c = base;
        c.num_shots = k;
        add(std::to_string(k), std::move(c));
      }
      break;
    case SweepKind::Strategy:
      for (Strategy s : {Strategy::CorrectAns, Strategy::GeneratedAns,
                         Strategy::GeneratedCorrectAns,
                         Strategy::CorrectAnsPlusInference}) {
        RunConfig c = base;
        c.strategy = s;
        add(to_string(s), std::move(c));
      }
      break;
    case SweepKind::Instruction:
      for (InstructionKind k : {InstructionKind::Direct, InstructionKind::Steps}) {
        RunConfig c = base;
        c.instruction = k;
        c.response_reserve = base.response_reserve;  // re-derived when absent
        add(to_string(k), std::move(c));
      }
      break;
    case SweepKind::Knowledge:
      for (bool on : {false, true}) {
        RunConfig c = base;
        c.use_knowledge = on;
        add(on ? "on" : "off", std::move(c));
      }
      break;
    case SweepKind::Source:
      for (ExampleSource s : {ExampleSource::Retrieved, ExampleSource::Random}) {
        RunConfig c = base;
        c.example_source = s;
        if (s == ExampleSource::Random && !c.random_seed) c.random_seed = 1;
        add(to_string(s), std::move(c));
      }
      break;
    case SweepKind::Constrained:
      for (bool on : {false, true}) {
        RunConfig c = base;
        c.constrained = on;
        add(on ? "on" : "off", std::move(c));
      }
      break;
  }

  // The workspace may grow new requirements at some sweep points (knowledge
  // or bank), so load against the most demanding point.
  RunConfig loader = base;
  for (const auto& p : points) {
    loader.use_knowledge = loader.use_knowledge || p.config.use_knowledge;
    loader.num_shots = std::max(loader.num_shots, p.config.num_shots);
    if (p.config.example_source == ExampleSource::Random)
      loader.example_source = ExampleSource::Random;
  }
  const Workspace workspace = load_workspace(loader);

  ReplayStore store(base.paths.replay_store);
  std::unique_ptr<HttpLlmClient> upstream;
  if (!base.replay_only) upstream = std::make_unique<HttpLlmClient>(base.llm);
  ReplayLlmClient client(store, upstream.get());

  std::vector<SweepPoint> results;
  for (auto& point : points) {
    point.config.paths.report_out =
        (fs::path(out_dir) / (to_string(sweep) + "_" + point.label + ".json")).string();
    if (!point.config.quiet)
      std::fprintf(stderr, "=== sweep %s = %s ===\n", to_string(sweep).c_str(),
                   point.label.c_str());
    RunOutcome outcome = run_on(workspace, point.config, client);
    write_report(outcome.report, point.config.paths.report_out, ReportFormat::Json);
    results.push_back({point.label, std::move(outcome)});
  }
  return results;
}

std::string render_sweep_table(const std::vector<SweepPoint>& points) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-28s  %8s  %8s  %8s  %6s  %6s\n", "point",
                "acc_mk", "acc_ca", "acc_all", "passed", "failed");
  out << line;
  for (const auto& p : points) {
    const ExamReport& r = p.outcome.report;
    std::snprintf(line, sizeof(line), "%-28s  %8s  %8s  %8s  %6s  %6zu\n",
                  p.label.c_str(), format_pct(r.correct_mk, r.n_mk).c_str(),
                  format_pct(r.correct_ca, r.n_ca).c_str(),
                  format_pct(r.correct_all(), r.n_all()).c_str(),
                  r.passed ? "yes" : "no", p.outcome.failed_questions);
    out << line;
  }
  return out.str();
}

}  // namespace kfe

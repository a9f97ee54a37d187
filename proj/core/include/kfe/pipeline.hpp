#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kfe/corpus.hpp"
#include "kfe/eval.hpp"
#include "kfe/fewshot.hpp"
#include "kfe/llm.hpp"
#include "kfe/prompt.hpp"
#include "kfe/retrieval.hpp"
#include "kfe/templates.hpp"

namespace kfe {

enum class ExampleSource { Retrieved, Random };

std::string to_string(ExampleSource s);
std::optional<ExampleSource> example_source_from_string(std::string_view s);

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunPaths {
  std::string knowledge_index;
  std::string bank_index;
  std::string exam;
  std::string replay_store;
  std::string report_out;
};

struct RunConfig {
  InstructionKind instruction = InstructionKind::Direct;
  Strategy strategy = Strategy::CorrectAns;
  std::size_t num_shots = 0;
  bool use_knowledge = false;
  ExampleSource example_source = ExampleSource::Retrieved;
  std::optional<std::uint64_t> random_seed;
  std::size_t budget = 4096;
  std::optional<std::size_t> response_reserve;  // default depends on instruction
  bool constrained = false;                     // 1-token + logit-bias answering
  double pass_threshold = 60.0;
  bool replay_only = false;
  bool resume = false;
  bool quiet = false;
  LlmClientConfig llm;
  RunPaths paths;
  PromptTemplates templates;
};

// 512 tokens of room under the step-by-step instruction, 16 under direct.
std::size_t effective_reserve(const RunConfig& config);

// Fails fast on inconsistent configs before any LLM call.
void validate_config(const RunConfig& config);

RunConfig load_run_config(const std::string& path);

// Everything a run reads from disk, loadable once and shared across sweeps.
struct Workspace {
  std::vector<ExamQuestion> exam;
  std::optional<KnowledgeIndexFile> knowledge;
  std::optional<BankIndexFile> bank;
};

Workspace load_workspace(const RunConfig& config);

struct RunOutcome {
  ExamReport report;
  std::size_t failed_questions = 0;
};

// Runs the full loop against an explicit client (tests inject mocks here):
// retrieve, enrich, assemble, complete, extract, grade. A question whose LLM
// call ultimately fails is recorded as unanswered; the run continues.
RunOutcome run_on(const Workspace& workspace, const RunConfig& config,
                  LlmClient& llm);

// Same loop per §5.5: five meaning queries per question, then one final call
// with the generated meanings as knowledge.
RunOutcome run_self_inquiry_on(const Workspace& workspace, const RunConfig& config,
                               LlmClient& llm);

// Loads the workspace, wires the replay store (and the HTTP client unless
// replay-only), runs, and writes the report.
RunOutcome run_exam(const RunConfig& config);
RunOutcome run_self_inquiry(const RunConfig& config);

enum class SweepKind { Shots, Strategy, Instruction, Knowledge, Source, Constrained };

std::string to_string(SweepKind k);
std::optional<SweepKind> sweep_from_string(std::string_view s);

struct SweepPoint {
  std::string label;
  RunOutcome outcome;
};

// One run per sweep value, all sharing the replay store; per-point reports
// land in out_dir as <sweep>_<label>.json.
std::vector<SweepPoint> ablate(const RunConfig& base, SweepKind sweep,
                               const std::string& out_dir);

std::string render_sweep_table(const std::vector<SweepPoint>& points);

}  // namespace kfe

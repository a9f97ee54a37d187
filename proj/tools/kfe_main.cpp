#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "kfe/corpus.hpp"
#include "kfe/eval.hpp"
#include "kfe/pipeline.hpp"
#include "kfe/retrieval.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitPartial = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw kfe::ConfigError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Shared --config plus per-field overrides; explicitly passed flags win.
struct RunCli {
  std::string config_path;
  CLI::Option* opt_instruction = nullptr;
  CLI::Option* opt_strategy = nullptr;
  CLI::Option* opt_shots = nullptr;
  CLI::Option* opt_knowledge = nullptr;
  CLI::Option* opt_source = nullptr;
  CLI::Option* opt_seed = nullptr;
  CLI::Option* opt_budget = nullptr;
  CLI::Option* opt_reserve = nullptr;
  CLI::Option* opt_constrained = nullptr;
  CLI::Option* opt_replay_only = nullptr;
  CLI::Option* opt_resume = nullptr;
  CLI::Option* opt_quiet = nullptr;
  CLI::Option* opt_exam = nullptr;
  CLI::Option* opt_kidx = nullptr;
  CLI::Option* opt_bidx = nullptr;
  CLI::Option* opt_store = nullptr;
  CLI::Option* opt_report = nullptr;
  CLI::Option* opt_base_url = nullptr;
  CLI::Option* opt_model = nullptr;
  CLI::Option* opt_api_key_env = nullptr;
  CLI::Option* opt_timeout = nullptr;
  CLI::Option* opt_retries = nullptr;
  CLI::Option* opt_concurrency = nullptr;
  CLI::Option* opt_rpm = nullptr;
  CLI::Option* opt_templates = nullptr;

  std::string instruction, strategy, source, exam, kidx, bidx, store, report;
  std::string base_url, model, api_key_env, templates_path;
  std::size_t shots = 0, budget = 0, reserve = 0;
  std::uint64_t seed = 0;
  bool knowledge = false, constrained = false, replay_only = false;
  bool resume = false, quiet = false;
  double timeout = 0.0;
  int retries = 0, concurrency = 0, rpm = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run config; flags override it");
    opt_instruction = cmd->add_option("--instruction", instruction, "direct|steps");
    opt_strategy = cmd->add_option(
        "--strategy", strategy,
        "correct_ans|generated_ans|generated_correct_ans|correct_ans_plus_inference");
    opt_shots = cmd->add_option("--num-shots", shots, "few-shot example count");
    opt_knowledge = cmd->add_flag("--use-knowledge,!--no-use-knowledge", knowledge,
                                  "retrieve background knowledge");
    opt_source = cmd->add_option("--source", source, "retrieved|random");
    opt_seed = cmd->add_option("--seed", seed, "seed for random example sampling");
    opt_budget = cmd->add_option("--budget", budget, "token budget (prompt + response)");
    opt_reserve = cmd->add_option("--reserve", reserve, "tokens reserved for the response");
    opt_constrained = cmd->add_flag("--constrained,!--no-constrained", constrained,
                                    "1-token answer with A-E logit bias");
    opt_replay_only = cmd->add_flag("--replay-only", replay_only,
                                    "forbid network; serve replay store only");
    opt_resume = cmd->add_flag("--resume", resume, "skip questions already in the report");
    opt_quiet = cmd->add_flag("--quiet", quiet, "suppress per-question progress");
    opt_exam = cmd->add_option("--exam", exam, "exam JSONL path");
    opt_kidx = cmd->add_option("--knowledge-index", kidx, "knowledge index path");
    opt_bidx = cmd->add_option("--bank-index", bidx, "question bank index path");
    opt_store = cmd->add_option("--replay-store", store, "replay store JSONL path");
    opt_report = cmd->add_option("--report-out", report, "report output path");
    opt_base_url = cmd->add_option("--base-url", base_url, "chat-completion endpoint base URL");
    opt_model = cmd->add_option("--model", model, "model name");
    opt_api_key_env = cmd->add_option("--api-key-env", api_key_env, "env var holding the API key");
    opt_timeout = cmd->add_option("--timeout", timeout, "request timeout seconds");
    opt_retries = cmd->add_option("--max-retries", retries, "transient-failure retries");
    opt_concurrency = cmd->add_option("--max-concurrency", concurrency, "parallel requests");
    opt_rpm = cmd->add_option("--rpm", rpm, "requests per minute (0 = unlimited)");
    opt_templates = cmd->add_option("--templates", templates_path, "prompt templates JSON");
  }

  kfe::RunConfig build() const {
    kfe::RunConfig config;
    if (!config_path.empty()) config = kfe::load_run_config(config_path);
    if (*opt_instruction) {
      auto k = kfe::instruction_from_string(instruction);
      if (!k) throw kfe::ConfigError("unknown instruction '" + instruction + "'");
      config.instruction = *k;
    }
    if (*opt_strategy) {
      auto s = kfe::strategy_from_string(strategy);
      if (!s) throw kfe::ConfigError("unknown strategy '" + strategy + "'");
      config.strategy = *s;
    }
    if (*opt_shots) config.num_shots = shots;
    if (*opt_knowledge) config.use_knowledge = knowledge;
    if (*opt_source) {
      auto s = kfe::example_source_from_string(source);
      if (!s) throw kfe::ConfigError("unknown example source '" + source + "'");
      config.example_source = *s;
    }
    if (*opt_seed) config.random_seed = seed;
    if (*opt_budget) config.budget = budget;
    if (*opt_reserve) config.response_reserve = reserve;
    if (*opt_constrained) config.constrained = constrained;
    if (*opt_replay_only) config.replay_only = replay_only;
    if (*opt_resume) config.resume = resume;
    if (*opt_quiet) config.quiet = quiet;
    if (*opt_exam) config.paths.exam = exam;
    if (*opt_kidx) config.paths.knowledge_index = kidx;
    if (*opt_bidx) config.paths.bank_index = bidx;
    if (*opt_store) config.paths.replay_store = store;
    if (*opt_report) config.paths.report_out = report;
    if (*opt_base_url) config.llm.base_url = base_url;
    if (*opt_model) config.llm.model_name = model;
    if (*opt_api_key_env) config.llm.api_key_env = api_key_env;
    if (*opt_timeout) config.llm.timeout_s = timeout;
    if (*opt_retries) config.llm.max_retries = retries;
    if (*opt_concurrency) config.llm.max_concurrency = concurrency;
    if (*opt_rpm) config.llm.requests_per_minute = rpm;
    if (*opt_templates) config.templates = kfe::load_templates(templates_path);
    return config;
  }
};

int cmd_ingest(const std::string& in, const std::string& out,
               const std::string& source_id, std::size_t target_tokens) {
  const auto doc = kfe::parse_structured_text(read_file(in), source_id);
  const auto pieces = kfe::chunk_document(doc, target_tokens);
  kfe::write_knowledge_jsonl(pieces, out);
  std::fprintf(stderr, "ingested %zu paragraphs into %zu pieces -> %s\n",
               doc.units.size(), pieces.size(), out.c_str());
  return kExitOk;
}

int cmd_index(const std::string& kind, const std::string& in,
              const std::string& out, double k1, double b) {
  kfe::Bm25Params params{k1, b};
  if (kind == "knowledge") {
    auto loaded = kfe::load_knowledge(in);
    for (const auto& d : loaded.rejected)
      std::fprintf(stderr, "warning: %s:%zu: %s\n", in.c_str(), d.line, d.message.c_str());
    auto file = kfe::build_knowledge_index(std::move(loaded.base), params);
    kfe::save_knowledge_index(file, out);
    std::fprintf(stderr, "indexed %zu knowledge pieces -> %s\n",
                 file.index.doc_count(), out.c_str());
  } else if (kind == "questions") {
    auto loaded = kfe::load_question_bank(in);
    for (const auto& d : loaded.rejected)
      std::fprintf(stderr, "warning: %s:%zu: %s\n", in.c_str(), d.line, d.message.c_str());
    auto file = kfe::build_bank_index(std::move(loaded.bank), params);
    kfe::save_bank_index(file, out);
    std::fprintf(stderr, "indexed %zu bank questions -> %s\n",
                 file.index.doc_count(), out.c_str());
  } else {
    throw kfe::ConfigError("--kind must be 'knowledge' or 'questions'");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge and few-shot enhanced exam answering pipeline"};
  app.require_subcommand(1);

  auto* ingest = app.add_subcommand("ingest", "chunk a structured document into knowledge JSONL");
  std::string ingest_in, ingest_out, ingest_source = "doc";
  std::size_t ingest_target = 130;
  ingest->add_option("--in", ingest_in, "structured text file ('#' headings)")->required();
  ingest->add_option("--out", ingest_out, "knowledge JSONL output")->required();
  ingest->add_option("--source-id", ingest_source, "document id used in piece ids");
  ingest->add_option("--target-tokens", ingest_target, "target piece size in tokens");

  auto* index = app.add_subcommand("index", "build and persist a retrieval index");
  std::string index_kind, index_in, index_out;
  double index_k1 = 1.2, index_b = 0.75;
  index->add_option("--kind", index_kind, "knowledge|questions")->required();
  index->add_option("--in", index_in, "input JSONL")->required();
  index->add_option("--out", index_out, "index output path")->required();
  index->add_option("--k1", index_k1, "BM25 k1");
  index->add_option("--b", index_b, "BM25 b");

  auto* run = app.add_subcommand("run", "run the exam end to end");
  RunCli run_cli;
  run_cli.attach(run);

  auto* ablate = app.add_subcommand("ablate", "sweep one dimension and compare reports");
  RunCli ablate_cli;
  ablate_cli.attach(ablate);
  std::string ablate_sweep, ablate_out = "ablation";
  ablate->add_option("--sweep", ablate_sweep,
                     "shots|strategy|instruction|knowledge|source|constrained")
      ->required();
  ablate->add_option("--out", ablate_out, "directory for per-point reports");

  auto* selfinquiry = app.add_subcommand(
      "selfinquiry", "self-inquiry baseline: model-generated option meanings");
  RunCli self_cli;
  self_cli.attach(selfinquiry);

  auto* report = app.add_subcommand("report", "render a JSON report as a table");
  std::string report_in;
  report->add_option("--in", report_in, "report JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*ingest) return cmd_ingest(ingest_in, ingest_out, ingest_source, ingest_target);
    if (*index) return cmd_index(index_kind, index_in, index_out, index_k1, index_b);
    if (*run) {
      const auto outcome = kfe::run_exam(run_cli.build());
      std::cout << kfe::render_report_table(outcome.report);
      return outcome.failed_questions > 0 ? kExitPartial : kExitOk;
    }
    if (*ablate) {
      auto sweep = kfe::sweep_from_string(ablate_sweep);
      if (!sweep) throw kfe::ConfigError("unknown sweep '" + ablate_sweep + "'");
      const auto points = kfe::ablate(ablate_cli.build(), *sweep, ablate_out);
      std::cout << kfe::render_sweep_table(points);
      for (const auto& p : points)
        if (p.outcome.failed_questions > 0) return kExitPartial;
      return kExitOk;
    }
    if (*selfinquiry) {
      const auto outcome = kfe::run_self_inquiry(self_cli.build());
      std::cout << kfe::render_report_table(outcome.report);
      return outcome.failed_questions > 0 ? kExitPartial : kExitOk;
    }
    if (*report) {
      std::cout << kfe::render_report_table(kfe::read_report(report_in));
      return kExitOk;
    }
  } catch (const kfe::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const kfe::LoadError& e) {
    std::fprintf(stderr, "load error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFatal;
  }
  return kExitOk;
}

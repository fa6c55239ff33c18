// Copyright 2026 The refscore Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "refscore/cli.hpp"

#include <cstdlib>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "refscore/analytics.hpp"
#include "refscore/corpus.hpp"
#include "refscore/parsing.hpp"
#include "refscore/prompting.hpp"
#include "refscore/scoring.hpp"
#include "text_util.hpp"

namespace refscore {

CliEnvironment CliEnvironment::system() {
  CliEnvironment env;
  env.getenv = [](std::string_view name) -> std::optional<std::string> {
    const char* value = std::getenv(std::string(name).c_str());
    if (value == nullptr || *value == '\0') return std::nullopt;
    return std::string(value);
  };
  env.make_transport = [](const std::string& base_url) {
    return std::make_shared<HttpTransport>(base_url);
  };
  return env;
}

namespace {

struct CorpusArgs {
  std::string path;
  std::string format;

  std::vector<Article> load() const {
    CorpusFormat f = guess_corpus_format(path);
    if (!format.empty()) f = *corpus_format_from_string(format);
    return load_corpus(path, f);
  }
};

void add_corpus_options(CLI::App* cmd, CorpusArgs& args, bool required) {
  auto* opt = cmd->add_option("--corpus", args.path, "Corpus file (.jsonl or .csv)");
  if (required) opt->required();
  cmd->add_option("--format", args.format, "Corpus format; default from extension")
      ->check(CLI::IsMember({"jsonl", "csv"}));
}

Strategy parse_strategy_arg(const std::string& text) {
  const auto strategy = strategy_from_string(text);
  if (!strategy) throw ValidationError("unknown strategy: " + text);
  return *strategy;
}

std::string summarize_flags(std::span<const ScoredResult> results) {
  std::map<std::string, std::size_t> reasons;
  std::size_t usable = 0;
  for (const auto& r : results) {
    if (r.usable()) ++usable;
    for (const auto flag : r.flags) ++reasons[std::string(reason_name(flag))];
  }
  std::string out = fmt::format("{} usable, {} flagged", usable, results.size() - usable);
  for (const auto& [name, count] : reasons) out += fmt::format("; {}={}", name, count);
  return out;
}

// ---------------------------------------------------------------------------
// ingest

struct IngestArgs {
  CorpusArgs corpus;
  std::string proxy;
  bool synthetic = false;
  std::uint64_t seed = 1;
  std::size_t n = 100;
  std::vector<int> units{8};
  std::string out;
  std::string out_format;
  std::string proxy_out;
  std::optional<double> drop_short;
};

int cmd_ingest(const IngestArgs& args, std::ostream& out) {
  std::vector<Article> articles;
  std::optional<ProxyTable> proxy;
  if (args.synthetic) {
    auto synthetic = generate_synthetic_corpus(args.seed, args.n, args.units);
    articles = std::move(synthetic.articles);
    proxy = std::move(synthetic.proxy);
  } else {
    if (args.corpus.path.empty()) {
      throw ValidationError("ingest needs --corpus or --synthetic");
    }
    articles = args.corpus.load();
    if (!args.proxy.empty()) proxy = load_proxy_scores(args.proxy);
  }
  if (args.drop_short) articles = drop_short_abstracts(articles, *args.drop_short);

  std::map<int, std::size_t> per_unit;
  std::map<char, std::size_t> per_panel;
  for (const auto& a : articles) {
    ++per_unit[a.unit];
    ++per_panel[panel_letter(a.main_panel)];
  }
  out << fmt::format("{} article{}, {} unit{}\n", articles.size(),
                     articles.size() == 1 ? "" : "s", per_unit.size(),
                     per_unit.size() == 1 ? "" : "s");
  for (const auto& [panel, count] : per_panel) {
    out << fmt::format("  panel {}: {}\n", panel, count);
  }
  for (const auto& [unit, count] : per_unit) {
    out << fmt::format("  unit {} (panel {}): {}\n", unit,
                       panel_letter(panel_for_unit(unit)), count);
  }
  if (proxy) {
    std::set<std::string> departments;
    for (const auto& [key, mean] : *proxy) departments.insert(key.department_id);
    out << fmt::format("{} proxy scores, {} departments\n", proxy->size(),
                       departments.size());
    for (const auto& a : articles) {
      if (!proxy->count({a.department_id, a.unit})) {
        throw ValidationError(fmt::format(
            "article {}: no proxy score for ({}, {})", a.id, a.department_id, a.unit));
      }
    }
  }

  if (!args.out.empty()) {
    CorpusFormat format = guess_corpus_format(args.out);
    if (!args.out_format.empty()) format = *corpus_format_from_string(args.out_format);
    write_corpus(args.out, articles, format);
    out << "wrote " << args.out << '\n';
  }
  if (!args.proxy_out.empty()) {
    if (!proxy) throw ValidationError("--proxy-out needs --synthetic or --proxy");
    write_proxy_scores(args.proxy_out, *proxy);
    out << "wrote " << args.proxy_out << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// run

struct RunArgs {
  CorpusArgs corpus;
  std::string instructions_dir = "instructions";
  std::string strategy;
  int iterations = 5;
  std::string mode = "live";
  std::string store;
  std::string model = std::string(kDefaultModel);
  int concurrency = 4;
  std::string base_url = std::string(kDefaultBaseUrl);
  int max_retries = 5;
  std::optional<double> temperature;
  bool allow_placeholders = false;
  std::string scored_out;
};

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err,
            const CliEnvironment& env) {
  const Strategy strategy = parse_strategy_arg(args.strategy);
  const auto articles = args.corpus.load();
  const bool live = args.mode == "live";

  GatewayConfig config;
  config.mode = live ? GatewayMode::kLive : GatewayMode::kReplay;
  config.model_id = args.model;
  config.temperature = args.temperature;
  config.retry.max_retries = args.max_retries;

  SystemInstructionSet instructions;
  std::shared_ptr<Transport> transport;
  if (live) {
    instructions = SystemInstructionSet::load(args.instructions_dir);
    instructions.require_ready(args.allow_placeholders);
    const auto key = env.getenv(kApiKeyEnvVar);
    if (!key) {
      throw ValidationError(fmt::format(
          "live mode needs an API credential in the {} environment variable",
          kApiKeyEnvVar));
    }
    config.api_key = *key;
    transport = env.make_transport(args.base_url);
  } else if (!std::filesystem::exists(args.store)) {
    throw ValidationError("replay mode needs an existing store: " + args.store);
  }

  ResponseStore store(args.store);
  ChatGateway gateway(config, transport, store);
  const auto batch = run_batch(gateway, articles, instructions, strategy,
                               args.iterations, args.concurrency);

  std::vector<ScoredResult> scored;
  scored.reserve(batch.records.size());
  for (const auto& record : batch.records) scored.push_back(score_record(record));

  out << fmt::format("{} {} records for {} articles x {} iterations (fetched {}, reused {})\n",
                     batch.records.size(), strategy_name(strategy), articles.size(),
                     args.iterations, batch.fetched, batch.reused);
  out << fmt::format("network calls: {}\n", gateway.network_calls());
  out << "scoring: " << summarize_flags(scored) << '\n';
  for (const auto& e : batch.errors) {
    err << fmt::format("error {}: {}\n", e.key.to_string(), e.message);
  }
  if (!args.scored_out.empty()) {
    write_scored(args.scored_out, scored);
    out << "wrote " << args.scored_out << '\n';
  }
  if (!batch.errors.empty()) {
    err << fmt::format("{} request(s) failed; rerun to resume\n", batch.errors.size());
    return kExitOperational;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// score

struct ScoreArgs {
  CorpusArgs corpus;
  std::string store;
  std::string strategy;
  int iterations = 5;
  std::string out;
};

int cmd_score(const ScoreArgs& args, std::ostream& out) {
  if (!std::filesystem::exists(args.store)) {
    throw ValidationError("store not found: " + args.store);
  }
  const auto articles = args.corpus.load();
  const ResponseStore store(args.store);

  std::set<Strategy> strategies;
  if (!args.strategy.empty()) {
    strategies.insert(parse_strategy_arg(args.strategy));
  } else {
    for (const auto& record : store.latest()) strategies.insert(record.key.strategy);
  }
  if (strategies.empty()) throw ValidationError("store holds no records");

  std::vector<ScoredResult> scored;
  for (const auto strategy : strategies) {
    for (const auto& article : articles) {
      for (int i = 1; i <= args.iterations; ++i) {
        const RecordKey key{article.id, strategy, i};
        if (const auto record = store.find(key)) {
          scored.push_back(score_record(*record));
        } else {
          ScoredResult missing;
          missing.article_id = article.id;
          missing.strategy = strategy;
          missing.iteration = i;
          missing.flags.push_back(ReasonCode::kMissingRecord);
          scored.push_back(std::move(missing));
        }
      }
    }
  }
  write_scored(args.out, scored);
  out << fmt::format("{} scored rows: {}\n", scored.size(), summarize_flags(scored));
  out << "wrote " << args.out << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval / report

struct EvalArgs {
  CorpusArgs corpus;
  std::vector<std::string> scored;
  std::string proxy;
  std::string out;
  std::size_t top_k = 20;
  bool include_flagged = false;
};

int cmd_eval(const EvalArgs& args, std::ostream& out) {
  const auto articles = args.corpus.load();
  const auto proxy = load_proxy_scores(args.proxy);
  std::vector<ScoredResult> results;
  for (const auto& path : args.scored) {
    auto part = load_scored(path);
    results.insert(results.end(), part.begin(), part.end());
  }
  EvalOptions options;
  options.top_k = args.top_k;
  options.include_flagged_tables = args.include_flagged;
  // Build fully before writing so a failure leaves no partial report.
  const auto report = build_report(results, articles, proxy, options);
  write_report(args.out, report);
  out << fmt::format("report written to {}\n", args.out);
  return kExitOk;
}

int cmd_report(const std::string& path, std::ostream& out) {
  std::filesystem::path file = path;
  if (std::filesystem::is_directory(file)) file /= "report.json";
  const auto text = detail::read_file(file.string());
  nlohmann::json report;
  try {
    report = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(fmt::format("{}: {}", file.string(), e.what()));
  }
  out << render_report_text(report);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err, const CliEnvironment& env) {
  CLI::App app{"LLM research-quality scoring pipeline", "refscore"};
  app.set_config("--config", "", "INI/TOML config file; flags take precedence");
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate a corpus or generate a synthetic one");
  add_corpus_options(ingest_cmd, ingest.corpus, false);
  ingest_cmd->add_option("--proxy", ingest.proxy, "Proxy scores CSV (dept,unit,mean)");
  ingest_cmd->add_flag("--synthetic", ingest.synthetic, "Generate a synthetic corpus");
  ingest_cmd->add_option("--seed", ingest.seed, "Synthetic seed");
  ingest_cmd->add_option("--n", ingest.n, "Synthetic article count")->check(CLI::PositiveNumber);
  ingest_cmd->add_option("--units", ingest.units, "Synthetic units")->delimiter(',');
  ingest_cmd->add_option("--out", ingest.out, "Write the (validated) corpus here");
  ingest_cmd->add_option("--out-format", ingest.out_format, "jsonl or csv")
      ->check(CLI::IsMember({"jsonl", "csv"}));
  ingest_cmd->add_option("--proxy-out", ingest.proxy_out, "Write proxy scores here");
  ingest_cmd->add_option("--drop-short-abstracts", ingest.drop_short,
                         "Drop this fraction of shortest abstracts per unit (e.g. 0.1)");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Query the endpoint or replay a store");
  add_corpus_options(run_cmd, run.corpus, true);
  run_cmd->add_option("--instructions", run.instructions_dir, "Directory with panel_a.txt..panel_d.txt");
  run_cmd->add_option("--strategy", run.strategy, "classification|token|standard")->required()
      ->check(CLI::IsMember({"classification", "token", "standard", "classification_table", "token_score"}));
  run_cmd->add_option("--iterations", run.iterations, "Iterations per article")->check(CLI::PositiveNumber);
  run_cmd->add_option("--mode", run.mode, "live or replay")->check(CLI::IsMember({"live", "replay"}));
  run_cmd->add_option("--store", run.store, "Response store (JSONL)")->required();
  run_cmd->add_option("--model", run.model, "Model id");
  run_cmd->add_option("--concurrency", run.concurrency, "Requests in flight")->check(CLI::PositiveNumber);
  run_cmd->add_option("--base-url", run.base_url, "Chat-completion API base URL");
  run_cmd->add_option("--max-retries", run.max_retries, "Retries per request")->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--temperature", run.temperature, "Sampling temperature (default: endpoint default)");
  run_cmd->add_flag("--allow-placeholder-instructions", run.allow_placeholders,
                    "Run even though instruction files are placeholders");
  run_cmd->add_option("--scored-out", run.scored_out, "Also write the scored table here");

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Parse stored responses into a scored table");
  add_corpus_options(score_cmd, score.corpus, true);
  score_cmd->add_option("--store", score.store, "Response store (JSONL)")->required();
  score_cmd->add_option("--strategy", score.strategy, "Only this strategy (default: all in store)")
      ->check(CLI::IsMember({"classification", "token", "standard", "classification_table", "token_score"}));
  score_cmd->add_option("--iterations", score.iterations, "Iterations per article")->check(CLI::PositiveNumber);
  score_cmd->add_option("--out", score.out, "Scored table (.csv or .jsonl)")->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Correlate with the proxy and analyse consistency");
  add_corpus_options(eval_cmd, eval.corpus, true);
  eval_cmd->add_option("--scored", eval.scored, "Scored table(s)")->required();
  eval_cmd->add_option("--proxy", eval.proxy, "Proxy scores CSV")->required();
  eval_cmd->add_option("--out", eval.out, "Report directory")->required();
  eval_cmd->add_option("--top-k", eval.top_k, "Profiles per panel")->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--include-flagged-tables", eval.include_flagged,
                     "Score classification tables whose percentages do not sum to 100");

  std::string report_path;
  auto* report_cmd = app.add_subcommand("report", "Print the tables of an eval report");
  report_cmd->add_option("--report", report_path, "Report directory or report.json")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    if (ingest_cmd->parsed()) return cmd_ingest(ingest, out);
    if (run_cmd->parsed()) return cmd_run(run, out, err, env);
    if (score_cmd->parsed()) return cmd_score(score, out);
    if (eval_cmd->parsed()) return cmd_eval(eval, out);
    if (report_cmd->parsed()) return cmd_report(report_path, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitOperational;
  }
  return kExitOperational;
}

}  // namespace refscore

// Copyright 2026 The SemID Lab Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// semid-lab: command-line runner for the experiment stages.
//
// Exit codes: 0 ok, 2 bad config, 3 missing or mismatched input file,
// 4 metric undefined on the data, 5 precondition violated, 1 anything else.
// Failures also print one JSON line to stderr and write <out>/error.json.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "semid/errors.hpp"
#include "semid/experiment.hpp"
#include "semid/io.hpp"
#include "semid/log.hpp"

namespace fs = std::filesystem;
namespace ex = semid::experiment;
using semid::tokenization::LookupKind;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t threads = 1;
  bool quiet = false;

  std::size_t levels = 0;
  std::string name = "ranker";
  std::int64_t train_from = 0;

  std::string kind;
  std::vector<std::string> runs;
  std::vector<std::string> pairs;
  std::string run;
  std::string target;
};

struct Failure {
  const char* type;
  int code;
};

Failure classify(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const semid::ConfigError&) {
    return {"ConfigError", 2};
  } catch (const semid::FormatError&) {
    return {"FormatError", 3};
  } catch (const semid::MetricError&) {
    return {"MetricError", 4};
  } catch (const semid::ContractError&) {
    return {"PreconditionError", 5};
  } catch (const semid::DimensionError&) {
    return {"DimensionError", 1};
  } catch (const semid::IndexError&) {
    return {"IndexError", 1};
  } catch (const semid::FrozenModelError&) {
    return {"FrozenModelError", 1};
  } catch (const fs::filesystem_error&) {
    return {"FormatError", 3};
  } catch (...) {
    return {"Error", 1};
  }
}

// Output root: --out, then $SEMID_LAB_OUT, then the config's "out".
fs::path output_root(const Options& o, const ex::ExperimentConfig& c) {
  if (!o.out.empty()) return o.out;
  if (const char* env = std::getenv("SEMID_LAB_OUT"); env && *env) return env;
  return c.out;
}

ex::ExperimentConfig resolve_config(const Options& o) {
  auto c = o.config.empty() ? ex::ExperimentConfig::desk() : ex::load_config(o.config);
  if (o.seed) c.set_seed(*o.seed);
  c.validate();
  return c;
}

ex::RankerRun load_run(const ex::Layout& where, const std::string& name) {
  const auto path = where.run(name) / "run.json";
  std::ifstream in(path);
  if (!in) throw semid::FormatError("missing input file " + path.string() + " (train the run first)");
  try {
    auto j = nlohmann::json::parse(in);
    ex::RankerRun run;
    run.name = j.at("name").get<std::string>();
    run.config = j.at("config").get<semid::ranker::RankerConfig>();
    run.quantizer_levels = j.at("quantizer_levels").get<std::size_t>();
    run.train_from = j.at("train_from").get<std::int64_t>();
    return run;
  } catch (const nlohmann::json::exception& e) {
    throw semid::FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::string> all_runs(const ex::Layout& where) {
  std::vector<std::string> names;
  const auto dir = where.root / "ranker";
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (fs::exists(e.path() / "run.json")) names.push_back(e.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<ex::RankerRun> pick_runs(const ex::Layout& where, const std::vector<std::string>& requested) {
  const auto names = requested.empty() ? all_runs(where) : requested;
  if (names.empty()) throw semid::ContractError("precondition: no trained ranker runs under " + where.root.string());
  std::vector<ex::RankerRun> runs;
  for (const auto& n : names) runs.push_back(load_run(where, n));
  return runs;
}

ex::RankerRun first_with_target(const ex::Layout& where, LookupKind kind, const std::string& requested) {
  if (!requested.empty()) return load_run(where, requested);
  for (const auto& n : all_runs(where)) {
    auto run = load_run(where, n);
    if (run.config.target.kind == kind) return run;
  }
  throw semid::ContractError(std::string("precondition: no run with a ") +
                             semid::tokenization::lookup_kind_name(kind) + " target; pass --run");
}

std::vector<std::pair<ex::RankerRun, ex::RankerRun>> pick_pairs(const ex::Layout& where,
                                                                const std::vector<std::string>& requested) {
  std::vector<std::pair<ex::RankerRun, ex::RankerRun>> out;
  if (!requested.empty()) {
    for (const auto& p : requested) {
      const auto colon = p.find(':');
      if (colon == std::string::npos) throw semid::ConfigError("--pairs expects short:long, got '" + p + "'");
      out.emplace_back(load_run(where, p.substr(0, colon)), load_run(where, p.substr(colon + 1)));
    }
    return out;
  }
  // <name>-short pairs with <name>.
  const std::string suffix = "-short";
  for (const auto& n : all_runs(where)) {
    if (n.size() > suffix.size() && n.ends_with(suffix)) {
      const auto base = n.substr(0, n.size() - suffix.size());
      if (fs::exists(where.run(base) / "run.json")) out.emplace_back(load_run(where, n), load_run(where, base));
    }
  }
  if (out.empty()) throw semid::ContractError("precondition: no <run>-short/<run> pairs found; pass --pairs");
  return out;
}

semid::analysis::MetricsReport analyze(const Options& o, const ex::ExperimentConfig& c, const ex::Layout& where) {
  const auto in = ex::load_inputs(c, where);
  if (o.kind == "segments") return ex::analyze_segments(c, where, pick_runs(where, o.runs), in);
  if (o.kind == "drift-gap") return ex::analyze_drift(c, where, pick_runs(where, o.runs), in);
  if (o.kind == "retention") return ex::analyze_retention(c, where, pick_pairs(where, o.pairs));
  if (o.kind == "clusters") {
    return ex::analyze_clusters(c, where, first_with_target(where, LookupKind::IndividualEmbedding, o.run), in);
  }
  if (o.kind == "attention") {
    auto runs = pick_runs(where, o.runs);
    if (o.runs.empty()) {
      std::erase_if(runs, [](const auto& r) { return r.config.aggregation == semid::ranker::Aggregation::Bypass; });
      if (runs.empty()) throw semid::ContractError("precondition: no runs with an attention aggregation");
    }
    return ex::analyze_attention(c, where, runs, in);
  }
  if (o.kind == "aar") {
    // Checked before touching runs so the missing-pairs case reads clearly.
    if (std::none_of(in.corpus.items.begin(), in.corpus.items.end(), [](const auto& it) { return it.copy_of != 0; })) {
      throw semid::ContractError("precondition: the corpus has no injected A/A pairs (set corpus.aa_pairs > 0)");
    }
    return ex::analyze_aar(c, where, pick_runs(where, o.runs), in);
  }
  if (o.kind == "click-loss") {
    return ex::analyze_click_loss(c, where, first_with_target(where, LookupKind::SemanticId, o.run), in);
  }
  return ex::analyze_distributions(c, where, in);
}

int run_command(const std::string& command, const Options& o) {
  const auto c = resolve_config(o);
  const ex::Layout where{output_root(o, c)};
  fs::create_directories(where.root);
  fs::remove(where.root / "error.json");

  if (command == "gen-corpus") {
    ex::gen_corpus(c, where);
    std::cout << "corpus written to " << where.corpus().string() << "\n";
  } else if (command == "train-rqvae") {
    ex::train_quantizer(c, where, o.levels);
    const auto dir = where.quantizer(o.levels ? o.levels : c.rqvae.levels, c.rqvae.levels);
    std::cout << "quantizer written to " << dir.string() << "\n";
  } else if (command == "train-ranker") {
    ex::RankerRun run{o.name, c.ranker, o.levels, o.train_from};
    auto r = ex::train_ranker(c, where, run, o.threads);
    std::cout << "eval_ne " << semid::io::format_double(r.eval_ne) << "\nprogressive_ne "
              << semid::io::format_double(r.progressive_ne) << "\n";
  } else if (command == "analyze") {
    auto report = analyze(o, c, where);
    report.save(where.reports() / o.kind);
    std::cout << report.to_table();
  } else {
    auto report = ex::repro(o.target, c, where, o.threads);
    std::cout << report.to_table();
  }
  return 0;
}

int fail(const std::string& command, const Options& o, const std::exception_ptr& e) {
  const auto f = classify(e);
  std::string message;
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    message = ex.what();
  } catch (...) {
    message = "unknown error";
  }
  const nlohmann::json record{{"error", {{"type", f.type}, {"exit_code", f.code}, {"command", command}, {"message", message}}}};
  std::cerr << record.dump() << '\n';
  // Best effort: the output root may itself be the problem.
  try {
    fs::path root = o.out;
    if (root.empty()) {
      if (const char* env = std::getenv("SEMID_LAB_OUT"); env && *env) root = env;
    }
    if (root.empty() && !o.config.empty()) root = ex::load_config(o.config).out;
    if (root.empty()) root = ex::ExperimentConfig::desk().out;
    fs::create_directories(root);
    std::ofstream(root / "error.json") << record.dump(2) << '\n';
  } catch (...) {
  }
  return f.code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic ID embedding experiments on a synthetic recommendation stream"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config (JSON); desk defaults otherwise")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "overrides every stage seed");
    sub->add_option("--out", o.out, "output root (also $SEMID_LAB_OUT)");
    sub->add_option("--threads", o.threads, "prediction threads")->check(CLI::PositiveNumber);
    sub->add_flag("--quiet", o.quiet, "warnings and errors only");
  };

  auto* gen = app.add_subcommand("gen-corpus", "generate items, users and the event stream");
  common(gen);

  auto* rq = app.add_subcommand("train-rqvae", "train the quantizer and assign semantic IDs");
  common(rq);
  rq->add_option("--levels", o.levels, "code depth (default: config)");

  auto* rk = app.add_subcommand("train-ranker", "train one ranker run and dump its predictions");
  common(rk);
  rk->add_option("--name", o.name, "run name under ranker/")->capture_default_str();
  rk->add_option("--levels", o.levels, "quantizer depth the run reads (default: config)");
  rk->add_option("--train-from", o.train_from, "drop training events before this second");

  auto* an = app.add_subcommand("analyze", "compute a report from stage outputs");
  common(an);
  an->add_option("kind", o.kind)
      ->required()
      ->check(CLI::IsMember(
          {"segments", "drift-gap", "retention", "clusters", "attention", "aar", "click-loss", "distributions"}));
  an->add_option("--runs", o.runs, "run names (default: all)")->delimiter(',');
  an->add_option("--run", o.run, "single run for clusters / click-loss");
  an->add_option("--pairs", o.pairs, "short:long run pairs for retention")->delimiter(',');

  auto* rp = app.add_subcommand("repro", "run every stage of one experiment end to end");
  common(rp);
  rp->add_option("target", o.target)->required()->check(CLI::IsMember(ex::repro_targets()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  semid::set_log_level(o.quiet ? semid::LogLevel::Warning : semid::LogLevel::Info);
  try {
    return run_command(command, o);
  } catch (...) {
    return fail(command, o, std::current_exception());
  }
}

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

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Pass criterion numbers as arguments to run a
// subset, e.g. `acceptance 1 3 11`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "grad_check.hpp"
#include "op_cases.hpp"
#include "semid/analysis.hpp"
#include "semid/corpus.hpp"
#include "semid/experiment.hpp"
#include "semid/log.hpp"
#include "semid/metrics.hpp"
#include "semid/ranker.hpp"
#include "semid/rqvae.hpp"
#include "semid/tokenization.hpp"

namespace fs = std::filesystem;
namespace ex = semid::experiment;
using namespace semid;

namespace {

constexpr int kSeeds = 5;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i], 4);
  return s + "]";
}

double must(const analysis::MetricsReport& r, const std::string& name) {
  auto v = r.get(name);
  if (!v) throw std::runtime_error(r.kind() + ": metric " + name + " unavailable");
  return *v;
}

fs::path scratch_root() {
  static const fs::path root = fs::temp_directory_path() / ("semid-acceptance-" + std::to_string(::getpid()));
  return root;
}

// ---- 1: gradients ----

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::string> bad;
  const auto cases = testing::op_cases();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    Rng rng(100 + i);
    if (!testing::check_gradients(cases[i].fn, cases[i].inputs(rng)).pass()) bad.push_back(cases[i].name);
  }

  using ranker::Aggregation;
  std::vector<corpus::HistoryEntry> h1{{21, 95}, {22, 60}, {23, 3}}, h2{{24, 70}};
  std::vector<ranker::Example> batch{{1, 100, h1, 1.0}, {2, 100, h2, 0.0}};
  const std::vector<double> labels{1.0, 0.0};
  for (auto agg : {Aggregation::Bypass, Aggregation::Transformer, Aggregation::Pma}) {
    ranker::RankerConfig c;
    c.embedding_dim = c.attention_dim = 4;
    c.history_length = 4;
    c.pma_seeds = 3;
    c.aggregation = agg;
    c.top_hidden = {3};
    c.target.kind = c.history.kind = tokenization::LookupKind::RandomHash;
    c.target.table_size = 11;
    c.history.table_size = 13;
    c.history.hash_seed = 5;
    ranker::RankerModel model(c, ranker::Lookups{tokenization::LookupFn::hashed(11, c.target.hash_seed),
                                                 tokenization::LookupFn::hashed(13, 5)});
    auto res = testing::check_parameter_gradients(
        [&](tensor::Tape& tape) { return tensor::bce_with_logits(model.forward(tape, batch), labels); },
        model.parameters());
    if (!res.pass()) bad.push_back("ranker/" + ranker::aggregation_name(agg));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string detail = std::to_string(cases.size()) + " ops + 3 toy rankers, " + fmt(secs, 3) + " s";
  for (const auto& b : bad) detail += ", failed " + b;
  return {bad.empty() && secs < 60.0, detail};
}

// ---- 2: parameterization oracle ----

std::vector<SemanticId> all_ids(std::uint32_t K, std::size_t L) {
  std::vector<SemanticId> out;
  std::vector<std::uint32_t> c(L, 0);
  while (true) {
    out.push_back(SemanticId{c});
    std::size_t i = L;
    while (i > 0 && ++c[i - 1] == K) c[--i] = 0;
    if (i == 0) break;
  }
  return out;
}

Outcome parameterization() {
  using tokenization::Variant;
  const auto t0 = std::chrono::steady_clock::now();
  auto make = [](Variant v, std::uint32_t K, std::size_t n = 3) {
    tokenization::Parameterization p;
    p.variant = v;
    p.codebook_size = K;
    p.n = n;
    return p;
  };
  std::vector<std::string> bad;
  for (std::uint32_t K : {2u, 4u, 8u}) {
    for (std::size_t L : {3u, 4u}) {
      const auto ids = all_ids(K, L);
      std::set<std::uint64_t> seen;
      for (const auto& id : ids) {
        auto out = tokenization::parameterize(id, make(L == 3 ? Variant::Trigram : Variant::Fourgram, K));
        if (out.size() == 1 && out[0] < ids.size()) seen.insert(out[0]);
      }
      if (seen.size() != ids.size()) bad.push_back("bijection K=" + std::to_string(K) + " L=" + std::to_string(L));
    }
    for (std::size_t L = 2; L <= 4; ++L) {
      for (const auto& id : all_ids(K, L)) {
        if (tokenization::parameterize(id, make(Variant::AllBigrams, K)).size() != L - 1) {
          bad.push_back("bigram count K=" + std::to_string(K));
          break;
        }
      }
    }
    for (std::size_t L = 1; L <= 4; ++L) {
      for (std::size_t n = 1; n <= L; ++n) {
        std::vector<std::map<std::uint64_t, std::vector<std::uint32_t>>> by_depth(n);
        bool ok = true;
        for (const auto& id : all_ids(K, L)) {
          auto out = tokenization::parameterize(id, make(Variant::PrefixNgram, K, n));
          if (out.size() != n) ok = false;
          for (std::size_t i = 0; ok && i < n; ++i) {
            std::vector<std::uint32_t> prefix(id.codes.begin(), id.codes.begin() + i + 1);
            auto [it, fresh] = by_depth[i].emplace(out[i], prefix);
            if (!fresh && it->second != prefix) ok = false;
          }
        }
        std::uint64_t next = 0, width = 1;
        for (std::size_t i = 0; ok && i < n; ++i) {
          width *= K;
          ok = by_depth[i].size() == width && by_depth[i].begin()->first == next &&
               by_depth[i].rbegin()->first == next + width - 1;
          next += width;
        }
        if (!ok) bad.push_back("prefix K=" + std::to_string(K) + " L=" + std::to_string(L) + " n=" + std::to_string(n));
      }
    }
  }
  using V = std::vector<std::uint64_t>;
  const SemanticId abc{{1, 2, 3}}, abcd{{1, 2, 3, 0}};
  if (tokenization::parameterize(abc, make(Variant::Trigram, 4)) != V{27}) bad.push_back("trigram [27]");
  if (tokenization::parameterize(abc, make(Variant::PrefixNgram, 4, 3)) != V{1, 10, 47}) bad.push_back("prefix [1,10,47]");
  if (tokenization::parameterize(abc, make(Variant::AllBigrams, 4)) != V{6, 27}) bad.push_back("bigrams [6,27]");
  if (tokenization::parameterize(abcd, make(Variant::Fourgram, 4)) != V{108}) bad.push_back("fourgram [108]");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string detail = "K in {2,4,8}, L <= 4, hand values for K=4, " + fmt(secs, 3) + " s";
  for (const auto& b : bad) detail += ", failed " + b;
  return {bad.empty() && secs < 10.0, detail};
}

// ---- 3: NE ----

Outcome ne_correctness() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    corpus::CorpusConfig c;
    c.items = 5000;
    c.users = 300;
    c.train_events = 30000;
    c.eval_events = 5000;
    c.seed = seed;
    auto corp = corpus::generate_items(c);
    auto stream = corpus::generate_stream(corp);
    std::vector<double> labels;
    for (const auto& e : stream.events) labels.push_back(e.label);
    double rate = 0.0;
    for (double y : labels) rate += y;
    rate /= static_cast<double>(labels.size());
    std::vector<double> base(labels.size(), rate);
    worst = std::max(worst, std::abs(normalized_entropy(base, labels) - 1.0));
  }
  const double hand = normalized_entropy(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0});
  return {worst <= 1e-9 && hand == 1.0,
          "base-rate |NE-1| max " + fmt(worst, 3) + " over 3 streams; hand case NE = " + fmt(hand, 17)};
}

// ---- 4: RQ-VAE hierarchy ----

Outcome rqvae_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  corpus::CorpusConfig cc;
  cc.items = 10000;
  cc.dim = 16;
  cc.branching = {4, 4, 4};
  cc.seed = 1;
  auto corp = corpus::generate_items(cc);
  tensor::Tensor x({corp.items.size(), cc.dim}, 0.0);
  std::vector<std::uint32_t> labels;
  for (std::size_t i = 0; i < corp.items.size(); ++i) {
    std::copy(corp.items[i].embedding.begin(), corp.items[i].embedding.end(), x.row(i).begin());
    labels.push_back(corp.items[i].path[0]);
  }
  rqvae::RqVaeConfig rc;
  rc.levels = 3;
  rc.codebook_size = 8;
  rc.input_dim = 16;
  rc.seed = 1;
  rqvae::RqVaeModel model(rc);
  auto curve = rqvae::train(model, x);
  std::vector<std::uint32_t> top;
  for (std::size_t i = 0; i < x.rows(); ++i) top.push_back(model.semantic_id(x.row(i)).codes[0]);
  const double purity = rqvae::purity(top, labels);
  const double reduction = 1.0 - curve.final_mse / curve.post_init_mse;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {purity >= 0.9 && reduction >= 0.9 && secs < 300.0,
          "purity " + fmt(purity, 4) + ", MSE reduction " + fmt(100.0 * reduction, 4) + "%, " + fmt(secs, 3) + " s"};
}

// ---- 5: skew and lifetime calibration ----

Outcome calibration() {
  auto c = ex::ExperimentConfig::desk().corpus;
  auto skew = corpus::calibrate_skew(c);
  std::vector<double> survival;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    c.seed = seed;
    auto corp = corpus::generate_items(c);
    std::size_t alive = 0;
    for (std::size_t i = 0; i < corp.initial_cohort; ++i) alive += corp.items[i].alive_at(6 * corpus::kSecondsPerDay);
    survival.push_back(static_cast<double>(alive) / static_cast<double>(corp.initial_cohort));
  }
  const bool ok_skew = skew.share >= 0.23 && skew.share <= 0.27;
  const bool ok_surv = std::all_of(survival.begin(), survival.end(), [](double s) { return std::abs(s - 0.5) <= 0.02; });
  return {ok_skew && ok_surv,
          "top 0.1% weight share " + fmt(100.0 * skew.share, 4) + "%, survival at 6 days " + list(survival)};
}

// ---- 6-10: desk-scale experiments over seeds ----

struct SeedResult {
  std::map<std::string, double> ne, tail, fresh, gap;
  double semid_aar = 0.0, rh_aar = 0.0, aa_pairs = 0.0;
  double retention_semid = 0.0, retention_rh = 0.0;
  std::vector<double> click;
};

std::vector<SeedResult> seed_results;
double seed_seconds = 0.0;
double part_a_seconds = 0.0;

void run_seeds() {
  if (!seed_results.empty()) return;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    const auto t0 = std::chrono::steady_clock::now();
    auto c = ex::ExperimentConfig::desk();
    c.set_seed(seed);
    const ex::Layout where{scratch_root() / ("seed" + std::to_string(seed))};
    ex::gen_corpus(c, where);
    ex::train_quantizer(c, where);
    const auto in = ex::load_inputs(c, where);
    std::vector<ex::RankerRun> runs{ex::target_run(c, tokenization::LookupKind::IndividualEmbedding),
                                    ex::target_run(c, tokenization::LookupKind::RandomHash),
                                    ex::target_run(c, tokenization::LookupKind::SemanticId)};
    for (const auto& r : runs) ex::train_ranker(c, where, r, in);
    SeedResult s;
    auto seg = ex::analyze_segments(c, where, runs, in);
    auto drift = ex::analyze_drift(c, where, runs, in);
    for (const auto& r : runs) {
      s.ne[r.name] = must(seg, r.name + ".ne.overall");
      s.tail[r.name] = must(seg, r.name + ".ne.tail");
      s.fresh[r.name] = must(seg, r.name + ".ne.new");
      s.gap[r.name] = must(drift, r.name + ".gap.overall");
    }
    auto aar = ex::analyze_aar(c, where, {runs[1], runs[2]}, in);
    s.rh_aar = must(aar, "rh.aar.mean_abs");
    s.semid_aar = must(aar, "semid.aar.mean_abs");
    s.aa_pairs = must(aar, "semid.aar.pairs");
    auto click = ex::analyze_click_loss(c, where, runs[2], in);
    for (int k = 1; k <= 3; ++k) s.click.push_back(must(click, "depth" + std::to_string(k) + ".rate"));
    part_a_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    auto ret = ex::repro("t4", c, ex::Layout{where.root / "t4"});
    s.retention_rh = must(ret, "rh.gain");
    s.retention_semid = must(ret, "semid.gain");
    fs::remove_all(where.root);
    seed_results.push_back(std::move(s));
    seed_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "seed " << seed << " done (" << fmt(seed_seconds, 4) << " s so far)\n";
  }
}

std::vector<double> collect(const std::function<double(const SeedResult&)>& f) {
  std::vector<double> v;
  for (const auto& s : seed_results) v.push_back(f(s));
  return v;
}

Outcome segments() {
  run_seeds();
  auto semid = collect([](const SeedResult& s) { return s.ne.at("semid"); });
  auto rh = collect([](const SeedResult& s) { return s.ne.at("rh"); });
  auto semid_tail = collect([](const SeedResult& s) { return s.tail.at("semid"); });
  auto rh_tail = collect([](const SeedResult& s) { return s.tail.at("rh"); });
  // Gains as relative NE reductions of SemID against RH.
  auto gain_all = collect([](const SeedResult& s) { return (s.ne.at("rh") - s.ne.at("semid")) / s.ne.at("rh"); });
  auto gain_new =
      collect([](const SeedResult& s) { return (s.fresh.at("rh") - s.fresh.at("semid")) / s.fresh.at("rh"); });
  const bool ok = median(semid) < median(rh) && median(semid_tail) < median(rh_tail) &&
                  median(gain_new) > median(gain_all) && part_a_seconds < 3600.0;
  return {ok, "median NE semid " + fmt(median(semid)) + " vs rh " + fmt(median(rh)) + "; tail " +
                  fmt(median(semid_tail)) + " vs " + fmt(median(rh_tail)) + "; gain new " + fmt(median(gain_new), 4) +
                  " vs overall " + fmt(median(gain_all), 4) + "; " + fmt(part_a_seconds, 4) + " s"};
}

Outcome drift_gap() {
  run_seeds();
  auto ie = collect([](const SeedResult& s) { return s.gap.at("ie"); });
  auto rh = collect([](const SeedResult& s) { return s.gap.at("rh"); });
  auto semid = collect([](const SeedResult& s) { return s.gap.at("semid"); });
  const bool ok = median(rh) > median(ie) && median(semid) <= median(rh);
  return {ok, "median gap ie " + fmt(median(ie), 4) + ", rh " + fmt(median(rh), 4) + ", semid " +
                  fmt(median(semid), 4) + "; per seed ie " + list(ie) + " rh " + list(rh) + " semid " + list(semid)};
}

Outcome retention() {
  run_seeds();
  auto semid = collect([](const SeedResult& s) { return s.retention_semid; });
  auto rh = collect([](const SeedResult& s) { return s.retention_rh; });
  return {median(semid) < median(rh), "median NE change long-short semid " + fmt(median(semid), 4) + " vs rh " +
                                          fmt(median(rh), 4) + "; per seed semid " + list(semid) + " rh " + list(rh)};
}

Outcome aa() {
  run_seeds();
  auto semid = collect([](const SeedResult& s) { return s.semid_aar; });
  auto rh = collect([](const SeedResult& s) { return s.rh_aar; });
  auto pairs = collect([](const SeedResult& s) { return s.aa_pairs; });
  const bool ok = std::all_of(semid.begin(), semid.end(), [](double v) { return v == 0.0; }) &&
                  std::all_of(rh.begin(), rh.end(), [](double v) { return v > 0.0; }) &&
                  std::all_of(pairs.begin(), pairs.end(), [](double v) { return v == 1000.0; });
  return {ok, "mean |AAR| over 1000 pairs: semid " + list(semid) + ", rh " + list(rh)};
}

Outcome click_loss() {
  run_seeds();
  std::vector<double> mean(3, 0.0);
  for (const auto& s : seed_results) {
    for (std::size_t k = 0; k < 3; ++k) mean[k] += s.click[k] / static_cast<double>(seed_results.size());
  }
  const bool ok = std::abs(mean[0]) >= std::abs(mean[1]) && std::abs(mean[1]) >= std::abs(mean[2]);
  return {ok, "mean rate by depth 1..3 " + list(mean)};
}

// ---- 11: attention unit cases ----

ranker::AttentionTrace square_trace(std::size_t S, const std::vector<double>& row, bool identity) {
  ranker::AttentionTrace t;
  t.rows = t.cols = S;
  for (std::size_t i = 0; i < S; ++i) {
    for (std::size_t j = 0; j < S; ++j) t.weights.push_back(identity ? (i == j ? 1.0 : 0.0) : row[j]);
  }
  return t;
}

Outcome attention() {
  bool ok = true;
  std::string detail;
  for (std::size_t S : {2u, 4u, 8u, 16u}) {
    auto t = square_trace(S, std::vector<double>(S, 1.0 / static_cast<double>(S)), false);
    t.padding.push_back(std::vector<bool>(S, false));
    ok = ok && analysis::attention_metrics(t, true).entropy == std::log2(static_cast<double>(S));
  }
  auto pad = square_trace(4, {0.0, 0.0, 0.5, 0.5}, false);
  pad.padding.push_back({false, false, true, true});
  const auto p = analysis::attention_metrics(pad, true);
  auto id = square_trace(4, {}, true);
  id.padding.push_back({false, false, false, false});
  const auto i = analysis::attention_metrics(id, true);
  ok = ok && p.pad == 1.0 && i.self && *i.self == 1.0 && i.entropy == 0.0;
  return {ok, "uniform entropy = log2 S for S in {2,4,8,16}; pad-only pad " + fmt(p.pad) + "; identity self " +
                  fmt(i.self.value_or(-1.0)) + ", entropy " + fmt(i.entropy)};
}

// ---- 12: determinism of repro commands ----

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_tree(const fs::path& a, const fs::path& b, std::size_t& files) {
  std::vector<fs::path> left, right;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) left.push_back(fs::relative(e.path(), a));
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (e.is_regular_file()) right.push_back(fs::relative(e.path(), b));
  }
  std::sort(left.begin(), left.end());
  std::sort(right.begin(), right.end());
  if (left != right) return false;
  for (const auto& rel : left) {
    if (slurp(a / rel) != slurp(b / rel)) return false;
  }
  files += left.size();
  return true;
}

Outcome determinism() {
  const fs::path dir = scratch_root() / "determinism";
  fs::create_directories(dir);
  const fs::path config = dir / "small.json";
  std::ofstream(config) << R"({"corpus": {"items": 3000, "users": 300, "train_events": 20000, "eval_events": 3000,
  "aa_pairs": 50, "branching": [4, 4, 4]},
 "rqvae": {"codebook_size": 8, "epochs": 5}, "rqvae_sample": 0,
 "ranker": {"embedding_dim": 8, "attention_dim": 8, "target": {"table_size": 1000}, "history": {"table_size": 1000}},
 "analysis": {"attention_examples": 200, "click_loss_contexts": 100}, "seed": 7})";
  std::size_t files = 0;
  std::vector<std::string> bad;
  for (const auto& target : ex::repro_targets()) {
    for (const char* run : {"a", "b"}) {
      const std::string cmd = std::string(SEMID_LAB_EXE) + " repro " + target + " --quiet --config " +
                              config.string() + " --out " + (dir / target / run).string() + " > /dev/null";
      if (std::system(cmd.c_str()) != 0) bad.push_back(target + " exit");
    }
    if (!same_tree(dir / target / "a", dir / target / "b", files)) bad.push_back(target + " differs");
  }
  std::string detail = std::to_string(ex::repro_targets().size()) + " repro targets run twice, " +
                       std::to_string(files) + " files compared";
  for (const auto& b : bad) detail += ", " + b;
  return {bad.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  set_log_level(LogLevel::Warning);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient suite", gradients},
      {"parameterization oracle", parameterization},
      {"NE correctness", ne_correctness},
      {"RQ-VAE hierarchy recovery", rqvae_recovery},
      {"skew and lifetime calibration", calibration},
      {"segment NE direction", segments},
      {"drifting gap direction", drift_gap},
      {"retention direction", retention},
      {"A/A", aa},
      {"click loss by depth", click_loss},
      {"attention metric unit cases", attention},
      {"repro determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2d %-30s %s  %s\n", n, criteria[i].first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(scratch_root());
  return failed ? 1 : 0;
}

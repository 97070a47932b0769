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

#include "semid/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "semid/errors.hpp"
#include "semid/io.hpp"
#include "semid/log.hpp"

namespace semid::corpus {
namespace {

enum Stream_ : std::uint64_t {
  kIds = 1,
  kEmbeddings,
  kLifetimes,
  kBirths,
  kPopularity,
  kUsers,
  kBiases,
  kTimes,
  kEventUsers,
  kEventItems,
  kLabels,
};

// Prefix sums over item weights with O(log n) update and inverse lookup.
class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0.0) {
    top_ = 1;
    while (top_ * 2 <= n) top_ *= 2;
  }
  void add(std::size_t i, double w) {
    for (std::size_t k = i + 1; k < tree_.size(); k += k & (~k + 1)) tree_[k] += w;
  }
  // Smallest index whose inclusive prefix sum exceeds u.
  std::size_t find(double u) const {
    std::size_t pos = 0;
    for (std::size_t step = top_; step > 0; step >>= 1) {
      if (pos + step < tree_.size() && tree_[pos + step] <= u) {
        pos += step;
        u -= tree_[pos];
      }
    }
    return pos;
  }

 private:
  std::vector<double> tree_;
  std::size_t top_ = 1;
};

std::string join_doubles(std::span<const double> v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += io::format_double(v[i]);
  }
  return s;
}

std::vector<double> parse_doubles(std::string_view s) {
  std::vector<double> out;
  if (s.empty()) return out;
  for (auto part : io::split(s, ',')) out.push_back(io::parse_double(part));
  return out;
}

io::FileHeader header_for(const CorpusConfig& c, std::string kind) {
  return io::FileHeader{std::move(kind), 1, c.hash(), c.seed};
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot write " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("missing input file " + path.string());
  return is;
}

// Reads the header line and checks kind and config hash.
void expect_header(std::istream& is, const std::filesystem::path& path, std::string_view kind,
                   std::uint64_t hash) {
  std::string line;
  std::getline(is, line);
  auto h = io::FileHeader::parse(line);
  if (h.kind != kind) throw FormatError(path.string() + ": expected a " + std::string(kind) + " file");
  io::require_hash(h, hash, path);
}

}  // namespace

void CorpusConfig::validate() const {
  if (items == 0 || users == 0 || dim == 0) throw ConfigError("corpus: item, user and dim counts must be positive");
  if (!(horizon_days >= 1.0)) throw ConfigError("corpus: horizon must be at least 1 day");
  if (!(eval_hours > 0.0)) throw ConfigError("corpus: eval window must be positive");
  if (!(median_lifetime_days > 0.0)) throw ConfigError("corpus: median lifetime must be positive");
  if (branching.empty() || branching.size() != level_scales.size()) {
    throw ConfigError("corpus: branching and level_scales need the same nonzero length");
  }
  for (auto b : branching) {
    if (b == 0) throw ConfigError("corpus: branching factors must be positive");
  }
  if (history_length == 0) throw ConfigError("corpus: history length must be positive");
  if (train_events == 0 || eval_events == 0) throw ConfigError("corpus: event counts must be positive");
  if (!(temperature > 0.0)) throw ConfigError("corpus: temperature must be positive");
  if (!(head_fraction > 0.0 && head_fraction < 1.0)) throw ConfigError("corpus: head_fraction in (0,1)");
  if (!(head_share > 0.0 && head_share < 1.0)) throw ConfigError("corpus: head_share in (0,1)");
  if (zipf_exponent && *zipf_exponent < 0.0) throw ConfigError("corpus: zipf exponent must be >= 0");
}

std::int64_t CorpusConfig::horizon_seconds() const {
  return static_cast<std::int64_t>(std::llround(horizon_days * kSecondsPerDay));
}

std::int64_t CorpusConfig::eval_end_seconds() const {
  return horizon_seconds() + static_cast<std::int64_t>(std::llround(eval_hours * 3600.0));
}

std::uint64_t CorpusConfig::hash() const {
  nlohmann::json j = *this;
  return io::fnv1a64(j.dump());
}

void to_json(nlohmann::json& j, const CorpusConfig& c) {
  j = nlohmann::json{{"items", c.items},
                     {"dim", c.dim},
                     {"branching", c.branching},
                     {"level_scales", c.level_scales},
                     {"item_noise", c.item_noise},
                     {"head_fraction", c.head_fraction},
                     {"head_share", c.head_share},
                     {"median_lifetime_days", c.median_lifetime_days},
                     {"horizon_days", c.horizon_days},
                     {"eval_hours", c.eval_hours},
                     {"users", c.users},
                     {"history_length", c.history_length},
                     {"train_events", c.train_events},
                     {"eval_events", c.eval_events},
                     {"temperature", c.temperature},
                     {"global_pref_scale", c.global_pref_scale},
                     {"user_pref_scale", c.user_pref_scale},
                     {"base_logit", c.base_logit},
                     {"item_bias_std", c.item_bias_std},
                     {"aa_pairs", c.aa_pairs},
                     {"seed", c.seed}};
  j["zipf_exponent"] = c.zipf_exponent ? nlohmann::json(*c.zipf_exponent) : nlohmann::json("auto");
}

void from_json(const nlohmann::json& j, CorpusConfig& c) {
  CorpusConfig d;
  c.items = j.value("items", d.items);
  c.dim = j.value("dim", d.dim);
  c.branching = j.value("branching", d.branching);
  c.level_scales = j.value("level_scales", d.level_scales);
  c.item_noise = j.value("item_noise", d.item_noise);
  c.head_fraction = j.value("head_fraction", d.head_fraction);
  c.head_share = j.value("head_share", d.head_share);
  c.median_lifetime_days = j.value("median_lifetime_days", d.median_lifetime_days);
  c.horizon_days = j.value("horizon_days", d.horizon_days);
  c.eval_hours = j.value("eval_hours", d.eval_hours);
  c.users = j.value("users", d.users);
  c.history_length = j.value("history_length", d.history_length);
  c.train_events = j.value("train_events", d.train_events);
  c.eval_events = j.value("eval_events", d.eval_events);
  c.temperature = j.value("temperature", d.temperature);
  c.global_pref_scale = j.value("global_pref_scale", d.global_pref_scale);
  c.user_pref_scale = j.value("user_pref_scale", d.user_pref_scale);
  c.base_logit = j.value("base_logit", d.base_logit);
  c.item_bias_std = j.value("item_bias_std", d.item_bias_std);
  c.aa_pairs = j.value("aa_pairs", d.aa_pairs);
  c.seed = j.value("seed", d.seed);
  c.zipf_exponent.reset();
  if (j.contains("zipf_exponent") && j.at("zipf_exponent").is_number()) {
    c.zipf_exponent = j.at("zipf_exponent").get<double>();
  }
}

void Corpus::reindex() {
  index_.clear();
  index_.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!index_.emplace(items[i].raw_id, i).second) {
      throw FormatError("corpus: duplicate raw id " + std::to_string(items[i].raw_id));
    }
  }
}

std::size_t Corpus::position(std::uint64_t raw_id) const {
  auto it = index_.find(raw_id);
  if (it == index_.end()) throw IndexError("corpus: unknown raw id " + std::to_string(raw_id));
  return it->second;
}

const Item& Corpus::item(std::uint64_t raw_id) const { return items[position(raw_id)]; }

double head_weight_share(std::size_t n, double exponent, double fraction) {
  const std::size_t head = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
  double head_w = 0.0, total = 0.0;
  for (std::size_t r = 1; r <= n; ++r) {
    const double w = std::pow(static_cast<double>(r), -exponent);
    total += w;
    if (r <= head) head_w += w;
  }
  return head_w / total;
}

SkewCalibration calibrate_skew(const CorpusConfig& config) {
  const std::size_t n = config.items;
  const double target = config.head_share;
  double lo = 0.0, hi = 8.0;
  SkewCalibration out;
  if (head_weight_share(n, lo, config.head_fraction) >= target) {
    out = {lo, head_weight_share(n, lo, config.head_fraction), false};
  } else if (head_weight_share(n, hi, config.head_fraction) < target) {
    out = {hi, head_weight_share(n, hi, config.head_fraction), false};
  } else {
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (head_weight_share(n, mid, config.head_fraction) < target) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    out = {hi, head_weight_share(n, hi, config.head_fraction), true};
  }
  if (!out.reached || std::abs(out.share - target) > 0.02) {
    out.reached = false;
    log_warning("skew calibration: target head share " + io::format_double(target) +
                " unreachable with " + std::to_string(n) + " items; best " +
                io::format_double(out.share));
  }
  return out;
}

double death_hazard(double median_days) {
  return -std::expm1(-std::log(2.0) / (median_days * kSecondsPerDay));
}

Corpus generate_items(const CorpusConfig& config) {
  config.validate();
  Corpus corpus;
  corpus.config = config;
  corpus.zipf_exponent = config.zipf_exponent ? *config.zipf_exponent : calibrate_skew(config).exponent;
  const std::size_t I = config.items, D = config.dim, depth = config.branching.size();
  const std::int64_t span = config.eval_end_seconds();

  // Initial cohort sized so that births over the span keep the alive count steady.
  const double span_days = static_cast<double>(span) / kSecondsPerDay;
  const double i0 = static_cast<double>(I) / (1.0 + span_days * std::log(2.0) / config.median_lifetime_days);
  corpus.initial_cohort = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(i0)), 1, I);

  corpus.items.resize(I);
  {
    Rng rng(derive_seed(config.seed, kIds));
    std::unordered_set<std::uint64_t> used;
    for (auto& it : corpus.items) {
      std::uint64_t id;
      do {
        id = rng();
      } while (id == 0 || !used.insert(id).second);
      it.raw_id = id;
    }
  }
  {
    Rng rng(derive_seed(config.seed, kBirths));
    std::uniform_int_distribution<std::int64_t> when(1, std::max<std::int64_t>(1, span - 1));
    std::vector<std::int64_t> births(I - corpus.initial_cohort);
    for (auto& b : births) b = when(rng);
    std::sort(births.begin(), births.end());
    for (std::size_t i = corpus.initial_cohort; i < I; ++i) {
      corpus.items[i].birth = births[i - corpus.initial_cohort];
    }
  }
  {
    Rng rng(derive_seed(config.seed, kLifetimes));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double log_keep = std::log1p(-death_hazard(config.median_lifetime_days));
    for (auto& it : corpus.items) {
      const double u = 1.0 - unit(rng);  // (0, 1]
      const double extra = std::floor(std::log(u) / log_keep);
      it.death = it.birth + 1 + static_cast<std::int64_t>(std::min(extra, 1e15));
    }
  }
  {
    // Nested means: every node offsets its parent's mean.
    Rng rng(derive_seed(config.seed, kEmbeddings));
    std::vector<std::vector<double>> parent_means{std::vector<double>(D, 0.0)};
    for (std::size_t l = 0; l < depth; ++l) {
      std::vector<std::vector<double>> level;
      std::normal_distribution<double> nd(0.0, config.level_scales[l]);
      for (const auto& parent : parent_means) {
        for (std::size_t b = 0; b < config.branching[l]; ++b) {
          std::vector<double> m = parent;
          for (auto& v : m) v += nd(rng);
          level.push_back(std::move(m));
        }
      }
      parent_means = std::move(level);
    }
    const std::size_t leaves = parent_means.size();
    std::uniform_int_distribution<std::size_t> pick_leaf(0, leaves - 1);
    std::normal_distribution<double> noise(0.0, config.item_noise);
    for (auto& it : corpus.items) {
      std::size_t leaf = pick_leaf(rng);
      it.path.assign(depth, 0);
      std::size_t rest = leaf;
      for (std::size_t l = depth; l-- > 0;) {
        it.path[l] = static_cast<std::uint32_t>(rest % config.branching[l]);
        rest /= config.branching[l];
      }
      it.embedding = parent_means[leaf];
      for (auto& v : it.embedding) v += noise(rng);
    }
  }
  {
    Rng rng(derive_seed(config.seed, kPopularity));
    std::vector<std::size_t> perm(I);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    double total = 0.0;
    for (std::size_t r = 0; r < I; ++r) total += std::pow(static_cast<double>(r + 1), -corpus.zipf_exponent);
    for (std::size_t r = 0; r < I; ++r) {
      corpus.items[perm[r]].weight = std::pow(static_cast<double>(r + 1), -corpus.zipf_exponent) / total;
    }
  }
  {
    Rng rng(derive_seed(config.seed, kBiases));
    std::normal_distribution<double> nd(0.0, config.item_bias_std);
    for (auto& it : corpus.items) it.bias = nd(rng);
  }
  {
    Rng rng(derive_seed(config.seed, kUsers));
    const double dd = static_cast<double>(D);
    std::vector<double> global(D);
    fill_normal(rng, global, config.global_pref_scale / std::sqrt(dd));
    std::normal_distribution<double> nd(0.0, config.user_pref_scale / std::sqrt(dd));
    corpus.users.resize(config.users);
    for (std::size_t u = 0; u < config.users; ++u) {
      corpus.users[u].id = static_cast<std::uint32_t>(u);
      corpus.users[u].preference = global;
      for (auto& v : corpus.users[u].preference) v += nd(rng);
    }
  }
  corpus.reindex();
  return corpus;
}

double ground_truth_ctr(const User& user, const Item& item, const CorpusConfig& config) {
  double dot = 0.0;
  for (std::size_t i = 0; i < item.embedding.size(); ++i) dot += user.preference[i] * item.embedding[i];
  const double logit = dot / config.temperature + config.base_logit + item.bias;
  // Clamp keeps the probability strictly inside (0, 1) in double precision.
  return 1.0 / (1.0 + std::exp(-std::clamp(logit, -30.0, 30.0)));
}

Stream generate_stream(const Corpus& corpus) {
  const auto& cfg = corpus.config;
  const std::size_t I = corpus.items.size();
  const std::int64_t horizon = cfg.horizon_seconds(), end = cfg.eval_end_seconds();

  Stream stream;
  stream.train_count = cfg.train_events;
  stream.events.resize(cfg.train_events + cfg.eval_events);
  {
    Rng rng(derive_seed(cfg.seed, kTimes));
    std::uniform_int_distribution<std::int64_t> train_t(0, horizon - 1), eval_t(horizon, end - 1);
    for (std::size_t e = 0; e < stream.events.size(); ++e) {
      stream.events[e].time = e < cfg.train_events ? train_t(rng) : eval_t(rng);
      stream.events[e].eval = e >= cfg.train_events;
    }
    std::sort(stream.events.begin(), stream.events.begin() + cfg.train_events,
              [](const Event& a, const Event& b) { return a.time < b.time; });
    std::sort(stream.events.begin() + cfg.train_events, stream.events.end(),
              [](const Event& a, const Event& b) { return a.time < b.time; });
  }

  std::vector<std::size_t> by_birth(I), by_death(I);
  std::iota(by_birth.begin(), by_birth.end(), 0);
  std::iota(by_death.begin(), by_death.end(), 0);
  std::stable_sort(by_birth.begin(), by_birth.end(),
                   [&](auto a, auto b) { return corpus.items[a].birth < corpus.items[b].birth; });
  std::stable_sort(by_death.begin(), by_death.end(),
                   [&](auto a, auto b) { return corpus.items[a].death < corpus.items[b].death; });

  Fenwick alive_weight(I);
  std::vector<char> alive(I, 0);
  double total = 0.0;
  std::size_t next_birth = 0, next_death = 0;

  Rng user_rng(derive_seed(cfg.seed, kEventUsers));
  Rng item_rng(derive_seed(cfg.seed, kEventItems));
  Rng label_rng(derive_seed(cfg.seed, kLabels));
  std::uniform_int_distribution<std::uint32_t> pick_user(0, static_cast<std::uint32_t>(cfg.users - 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (std::size_t e = 0; e < stream.events.size(); ++e) {
    Event& ev = stream.events[e];
    while (next_birth < I && corpus.items[by_birth[next_birth]].birth <= ev.time) {
      const std::size_t i = by_birth[next_birth++];
      if (corpus.items[i].copy_of != 0) continue;
      alive[i] = 1;
      alive_weight.add(i, corpus.items[i].weight);
      total += corpus.items[i].weight;
    }
    while (next_death < I && corpus.items[by_death[next_death]].death <= ev.time) {
      const std::size_t i = by_death[next_death++];
      if (!alive[i]) continue;
      alive[i] = 0;
      alive_weight.add(i, -corpus.items[i].weight);
      total -= corpus.items[i].weight;
    }
    if (!(total > 0.0)) throw ContractError("stream: no alive item at t=" + std::to_string(ev.time));
    std::size_t pick;
    do {
      pick = std::min(alive_weight.find(unit(item_rng) * total), I - 1);
    } while (!alive[pick]);
    ev.id = e;
    ev.user = pick_user(user_rng);
    ev.item = corpus.items[pick].raw_id;
    const double p = ground_truth_ctr(corpus.users[ev.user], corpus.items[pick], cfg);
    ev.label = unit(label_rng) < p ? 1 : 0;
  }
  build_histories(stream, cfg.history_length);
  return stream;
}

void build_histories(Stream& stream, std::size_t length) {
  std::unordered_map<std::uint32_t, std::deque<HistoryEntry>> recent;
  stream.history_pool.clear();
  std::size_t e = 0;
  const std::size_t n = stream.events.size();
  while (e < n) {
    std::size_t group_end = e;
    while (group_end < n && stream.events[group_end].time == stream.events[e].time) ++group_end;
    // Snapshots first, so clicks at the same second stay invisible to each other.
    for (std::size_t k = e; k < group_end; ++k) {
      Event& ev = stream.events[k];
      ev.history_begin = static_cast<std::uint32_t>(stream.history_pool.size());
      auto it = recent.find(ev.user);
      ev.history_size = 0;
      if (it != recent.end()) {
        for (const auto& h : it->second) stream.history_pool.push_back(h);
        ev.history_size = static_cast<std::uint32_t>(it->second.size());
      }
    }
    for (std::size_t k = e; k < group_end; ++k) {
      const Event& ev = stream.events[k];
      if (!ev.label) continue;
      auto& q = recent[ev.user];
      q.push_front({ev.item, ev.time});
      if (q.size() > length) q.pop_back();
    }
    e = group_end;
  }
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> inject_aa_pairs(Corpus& corpus,
                                                                     std::size_t count,
                                                                     std::uint64_t seed) {
  const std::int64_t start = corpus.config.horizon_seconds();
  const std::int64_t end = corpus.config.eval_end_seconds();
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < corpus.items.size(); ++i) {
    const auto& it = corpus.items[i];
    if (it.copy_of == 0 && it.birth <= start && it.death >= end) candidates.push_back(i);
  }
  Rng rng(derive_seed(seed, 0xaa));
  std::shuffle(candidates.begin(), candidates.end(), rng);
  if (candidates.size() < count) {
    log_warning("A/A injection: only " + std::to_string(candidates.size()) +
                " items alive through the eval window");
    count = candidates.size();
  }
  std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs;
  std::unordered_set<std::uint64_t> fresh;
  for (std::size_t k = 0; k < count; ++k) {
    Item copy = corpus.items[candidates[k]];
    do {
      copy.raw_id = rng();
    } while (copy.raw_id == 0 || corpus.contains(copy.raw_id) || fresh.count(copy.raw_id));
    fresh.insert(copy.raw_id);
    copy.copy_of = corpus.items[candidates[k]].raw_id;
    pairs.emplace_back(copy.copy_of, copy.raw_id);
    corpus.items.push_back(std::move(copy));
  }
  corpus.reindex();
  return pairs;
}

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  const auto& cfg = corpus.config;
  {
    auto h = header_for(cfg, "corpus");
    nlohmann::json j{{"semid_lab", {{"kind", h.kind}, {"version", h.version},
                                    {"config_hash", io::hex64(h.config_hash)}, {"seed", h.seed}}},
                     {"config", cfg},
                     {"zipf_exponent", corpus.zipf_exponent},
                     {"initial_cohort", corpus.initial_cohort}};
    auto os = open_out(dir / "config.json");
    os << j.dump(2) << '\n';
  }
  {
    auto os = open_out(dir / "items.tsv");
    os << header_for(cfg, "items").to_line() << '\n';
    os << "# raw_id\tbirth\tdeath\tweight\tbias\tcopy_of\tpath\tembedding\n";
    for (const auto& it : corpus.items) {
      os << it.raw_id << '\t' << it.birth << '\t' << it.death << '\t' << io::format_double(it.weight)
         << '\t' << io::format_double(it.bias) << '\t' << it.copy_of << '\t';
      for (std::size_t l = 0; l < it.path.size(); ++l) os << (l ? "," : "") << it.path[l];
      os << '\t' << join_doubles(it.embedding) << '\n';
    }
  }
  {
    auto os = open_out(dir / "users.tsv");
    os << header_for(cfg, "users").to_line() << '\n';
    os << "# user\tpreference\n";
    for (const auto& u : corpus.users) os << u.id << '\t' << join_doubles(u.preference) << '\n';
  }
}

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  {
    auto is = open_in(dir / "config.json");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError((dir / "config.json").string() + ": " + e.what());
    }
    corpus.config = j.at("config").get<CorpusConfig>();
    corpus.zipf_exponent = j.at("zipf_exponent").get<double>();
    corpus.initial_cohort = j.at("initial_cohort").get<std::size_t>();
    const auto recorded = io::parse_hex64(j.at("semid_lab").at("config_hash").get<std::string>());
    if (recorded != corpus.config.hash()) {
      throw FormatError((dir / "config.json").string() + ": config-hash mismatch");
    }
  }
  const std::uint64_t hash = corpus.config.hash();
  std::string line;
  {
    auto path = dir / "items.tsv";
    auto is = open_in(path);
    expect_header(is, path, "items", hash);
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#') continue;
      auto c = io::split(line, '\t');
      if (c.size() != 8) throw FormatError(path.string() + ": expected 8 columns");
      Item it;
      it.raw_id = io::parse_u64(c[0]);
      it.birth = io::parse_i64(c[1]);
      it.death = io::parse_i64(c[2]);
      it.weight = io::parse_double(c[3]);
      it.bias = io::parse_double(c[4]);
      it.copy_of = io::parse_u64(c[5]);
      for (auto p : io::split(c[6], ',')) it.path.push_back(static_cast<std::uint32_t>(io::parse_u64(p)));
      it.embedding = parse_doubles(c[7]);
      corpus.items.push_back(std::move(it));
    }
  }
  {
    auto path = dir / "users.tsv";
    auto is = open_in(path);
    expect_header(is, path, "users", hash);
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#') continue;
      auto c = io::split(line, '\t');
      if (c.size() != 2) throw FormatError(path.string() + ": expected 2 columns");
      User u;
      u.id = static_cast<std::uint32_t>(io::parse_u64(c[0]));
      u.preference = parse_doubles(c[1]);
      corpus.users.push_back(std::move(u));
    }
  }
  corpus.reindex();
  return corpus;
}

void save_stream(const std::filesystem::path& path, const Stream& stream, const CorpusConfig& config) {
  auto os = open_out(path);
  os << header_for(config, "stream").to_line() << '\n';
  os << "# event_id\ttime\tuser\titem\tlabel\tsplit\n";
  for (const auto& e : stream.events) {
    os << e.id << '\t' << e.time << '\t' << e.user << '\t' << e.item << '\t' << int(e.label) << '\t'
       << (e.eval ? "eval" : "train") << '\n';
  }
}

Stream load_stream(const std::filesystem::path& path, const CorpusConfig& config) {
  auto is = open_in(path);
  expect_header(is, path, "stream", config.hash());
  Stream stream;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto c = io::split(line, '\t');
    if (c.size() != 6) throw FormatError(path.string() + ": expected 6 columns");
    Event e;
    e.id = io::parse_u64(c[0]);
    e.time = io::parse_i64(c[1]);
    e.user = static_cast<std::uint32_t>(io::parse_u64(c[2]));
    e.item = io::parse_u64(c[3]);
    e.label = c[4] == "1" ? 1 : 0;
    e.eval = c[5] == "eval";
    if (!e.eval) ++stream.train_count;
    stream.events.push_back(e);
  }
  build_histories(stream, config.history_length);
  return stream;
}

}  // namespace semid::corpus

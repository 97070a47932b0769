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

#include "semid/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "semid/errors.hpp"
#include "semid/metrics.hpp"
#include "semid/random.hpp"

namespace semid::analysis {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  return in;
}

// Reads the header line and returns the remaining non-comment lines.
std::vector<std::string> read_body(const std::filesystem::path& path, const std::string& kind,
                                   io::FileHeader* header) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  auto h = io::FileHeader::parse(line);
  if (h.kind != kind) throw FormatError(path.string() + ": expected " + kind + ", found " + h.kind);
  if (header) *header = h;
  std::vector<std::string> lines;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    lines.push_back(line);
  }
  return lines;
}

struct MeanStd {
  std::optional<double> mean, std;
};

MeanStd mean_std(std::span<const double> v) {
  MeanStd out;
  if (v.empty()) return out;
  double s = 0.0;
  for (double x : v) s += x;
  const double m = s / static_cast<double>(v.size());
  double q = 0.0;
  for (double x : v) q += (x - m) * (x - m);
  out.mean = m;
  out.std = std::sqrt(q / static_cast<double>(v.size()));
  return out;
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

// ---- reports ----

Metric* MetricsReport::find(const std::string& name) {
  for (auto& m : metrics_) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

void MetricsReport::set(const std::string& name, double value, std::string note) {
  if (!std::isfinite(value)) {
    unavailable(name, note.empty() ? "non-finite" : note);
    return;
  }
  Metric m{name, value, std::move(note)};
  if (auto* old = find(name)) {
    *old = std::move(m);
  } else {
    metrics_.push_back(std::move(m));
  }
}

void MetricsReport::unavailable(const std::string& name, std::string reason) {
  Metric m{name, std::nullopt, std::move(reason)};
  if (auto* old = find(name)) {
    *old = std::move(m);
  } else {
    metrics_.push_back(std::move(m));
  }
}

std::optional<double> MetricsReport::get(const std::string& name) const {
  for (const auto& m : metrics_) {
    if (m.name == name) return m.value;
  }
  throw IndexError("report has no metric " + name);
}

bool MetricsReport::has(const std::string& name) const {
  return std::any_of(metrics_.begin(), metrics_.end(), [&](const Metric& m) { return m.name == name; });
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  for (const auto& m : metrics_) {
    nlohmann::ordered_json e;
    if (m.value) {
      e["value"] = *m.value;
    } else {
      e["value"] = nullptr;
    }
    if (!m.note.empty()) e["note"] = m.note;
    metrics[m.name] = e;
  }
  nlohmann::json j;
  j["semid_lab"] = {{"kind", "report"},
                    {"version", 1},
                    {"config_hash", io::hex64(config_hash_)},
                    {"seed", seed_}};
  j["report"] = kind_;
  j["metrics"] = nlohmann::json::parse(metrics.dump());
  j["order"] = nlohmann::json::array();
  for (const auto& m : metrics_) j["order"].push_back(m.name);
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  const auto& meta = j.at("semid_lab");
  MetricsReport r(j.at("report").get<std::string>(),
                  io::parse_hex64(meta.at("config_hash").get<std::string>()),
                  meta.at("seed").get<std::uint64_t>());
  for (const auto& name : j.at("order")) {
    const auto& e = j.at("metrics").at(name.get<std::string>());
    const std::string note = e.value("note", "");
    if (e.at("value").is_null()) {
      r.unavailable(name, note);
    } else {
      r.set(name, e.at("value").get<double>(), note);
    }
  }
  return r;
}

std::string MetricsReport::to_table() const {
  std::size_t width = 6;
  for (const auto& m : metrics_) width = std::max(width, m.name.size());
  std::ostringstream os;
  os << "# " << kind_ << "  config_hash=" << io::hex64(config_hash_) << "  seed=" << seed_ << '\n';
  os << std::left << std::setw(static_cast<int>(width)) << "metric" << "  value\n";
  for (const auto& m : metrics_) {
    os << std::left << std::setw(static_cast<int>(width)) << m.name << "  ";
    if (m.value) {
      os << io::format_double(*m.value);
      if (!m.note.empty()) os << "  (" << m.note << ')';
    } else {
      os << "n/a (" << m.note << ')';
    }
    os << '\n';
  }
  return os.str();
}

void MetricsReport::save(const std::filesystem::path& stem) const {
  auto json_path = stem;
  json_path += ".json";
  auto txt_path = stem;
  txt_path += ".txt";
  open_out(json_path) << to_json().dump(2) << '\n';
  open_out(txt_path) << to_table();
}

// ---- prediction dumps ----

std::vector<PredictionRecord> make_records(std::span<const corpus::Event> events,
                                           std::span<const double> predictions) {
  if (events.size() != predictions.size()) throw DimensionError("records: events/predictions differ in length");
  std::vector<PredictionRecord> out;
  out.reserve(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    out.push_back({events[i].id, events[i].time, events[i].item,
                   static_cast<double>(events[i].label), predictions[i], ""});
  }
  return out;
}

void save_predictions(const std::filesystem::path& path, const io::FileHeader& header,
                      std::span<const PredictionRecord> records) {
  auto out = open_out(path);
  out << header.to_line() << '\n';
  out << "# event_id\ttime\titem\tlabel\tprediction\tsegment\n";
  for (const auto& r : records) {
    out << r.event_id << '\t' << r.time << '\t' << r.item << '\t' << io::format_double(r.label) << '\t'
        << io::format_double(r.prediction) << '\t' << (r.segment.empty() ? "-" : r.segment) << '\n';
  }
}

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path, io::FileHeader* header) {
  std::vector<PredictionRecord> out;
  for (const auto& line : read_body(path, "predictions", header)) {
    auto f = io::split(line, '\t');
    if (f.size() != 6) throw FormatError(path.string() + ": expected 6 columns");
    PredictionRecord r{io::parse_u64(f[0]), io::parse_i64(f[1]), io::parse_u64(f[2]),
                       io::parse_double(f[3]), io::parse_double(f[4]),
                       f[5] == "-" ? std::string() : std::string(f[5])};
    out.push_back(std::move(r));
  }
  return out;
}

std::optional<double> records_ne(std::span<const PredictionRecord> records) {
  std::vector<double> p, y;
  p.reserve(records.size());
  y.reserve(records.size());
  for (const auto& r : records) {
    p.push_back(r.prediction);
    y.push_back(r.label);
  }
  try {
    return normalized_entropy(p, y);
  } catch (const MetricError&) {
    return std::nullopt;
  }
}

// ---- segments ----

const std::string& ItemSegments::segment(std::uint64_t raw_id) const {
  static const std::string kNew = "new";
  auto it = of_item.find(raw_id);
  return it == of_item.end() ? kNew : it->second;
}

ItemSegments build_segments(std::span<const corpus::Event> train, const SegmentSpec& spec) {
  if (!(0.0 < spec.head_cut && spec.head_cut <= spec.torso_cut && spec.torso_cut <= 1.0)) {
    throw ConfigError("segments: need 0 < head_cut <= torso_cut <= 1");
  }
  std::unordered_map<std::uint64_t, std::uint64_t> counts;
  for (const auto& e : train) ++counts[e.item];
  std::vector<std::pair<std::uint64_t, std::uint64_t>> order(counts.begin(), counts.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  ItemSegments seg;
  seg.impressions = train.size();
  const double total = static_cast<double>(train.size());
  std::uint64_t before = 0;
  for (const auto& [item, n] : order) {
    const double share = static_cast<double>(before) / total;
    if (share < spec.head_cut) {
      seg.of_item[item] = "head";
      ++seg.head_items;
    } else if (share < spec.torso_cut) {
      seg.of_item[item] = "torso";
      ++seg.torso_items;
    } else {
      seg.of_item[item] = "tail";
      ++seg.tail_items;
    }
    before += n;
  }
  return seg;
}

void tag_segments(std::span<PredictionRecord> records, const ItemSegments& segments) {
  for (auto& r : records) r.segment = segments.segment(r.item);
}

MetricsReport segment_ne(std::span<const PredictionRecord> records, MetricsReport report) {
  static const std::vector<std::string> kSegments{"head", "torso", "tail", "new"};
  std::map<std::string, std::vector<PredictionRecord>> by;
  std::vector<PredictionRecord> seen;
  for (const auto& r : records) {
    if (r.segment.empty()) throw ContractError("segment_ne: record without a segment tag");
    by[r.segment].push_back(r);
    if (r.segment != "new") seen.push_back(r);
  }
  auto put = [&](const std::string& name, std::span<const PredictionRecord> rs) {
    report.set("count." + name, static_cast<double>(rs.size()));
    if (auto ne = records_ne(rs)) {
      report.set("ne." + name, *ne);
    } else {
      report.unavailable("ne." + name, rs.empty() ? "no examples" : "single-class segment");
    }
  };
  put("overall", records);
  for (const auto& s : kSegments) put(s, by[s]);
  put("seen", seen);
  return report;
}

// ---- drifting gap ----

DriftWindows default_drift_windows(std::int64_t horizon_seconds) {
  constexpr double kHour = 3600.0;
  const double scale = static_cast<double>(horizon_seconds) / (4.0 * 24.0 * kHour);
  auto at = [&](double hours_before_end) {
    return horizon_seconds - static_cast<std::int64_t>(std::llround(hours_before_end * kHour * scale));
  };
  return DriftWindows{{at(48.0), at(42.0)}, {at(6.0), horizon_seconds}};
}

DriftGap drifting_gap(std::span<const PredictionRecord> records, const DriftWindows& windows) {
  std::vector<PredictionRecord> early, late;
  for (const auto& r : records) {
    if (windows.early.contains(r.time)) early.push_back(r);
    if (windows.late.contains(r.time)) late.push_back(r);
  }
  if (early.empty() || late.empty()) throw MetricError("drifting gap: empty window");
  auto e = records_ne(early), l = records_ne(late);
  if (!e || !l) throw MetricError("drifting gap: single-class window");
  return DriftGap{*e, *l, *e - *l, early.size(), late.size()};
}

std::vector<corpus::Event> drift_events(std::span<const corpus::Event> train, const DriftWindows& windows) {
  std::vector<corpus::Event> out;
  for (const auto& e : train) {
    if (windows.early.contains(e.time) || windows.late.contains(e.time)) out.push_back(e);
  }
  return out;
}

// ---- cluster geometry ----

namespace {

GeometryStats geometry_of(const std::vector<std::vector<const std::vector<double>*>>& clusters,
                          std::uint64_t seed, std::size_t max_pairs) {
  GeometryStats g;
  g.clusters = clusters.size();
  if (clusters.empty()) return g;
  const std::size_t dim = clusters.front().front()->size();
  std::vector<double> variances;
  std::vector<std::vector<double>> centroids;
  for (const auto& c : clusters) {
    std::vector<double> mu(dim, 0.0);
    for (const auto* v : c) {
      for (std::size_t j = 0; j < dim; ++j) mu[j] += (*v)[j];
    }
    for (auto& m : mu) m /= static_cast<double>(c.size());
    if (c.size() >= 2) {
      double var = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        double s = 0.0;
        for (const auto* v : c) s += ((*v)[j] - mu[j]) * ((*v)[j] - mu[j]);
        var += s / static_cast<double>(c.size());
      }
      variances.push_back(var / static_cast<double>(dim));
    }
    centroids.push_back(std::move(mu));
  }
  auto vs = mean_std(variances);
  g.variance_mean = vs.mean;
  g.variance_std = vs.std;

  const std::size_t n = centroids.size();
  if (n < 2) return g;
  auto dist = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t j = 0; j < dim; ++j) s += (centroids[a][j] - centroids[b][j]) * (centroids[a][j] - centroids[b][j]);
    return std::sqrt(s);
  };
  std::vector<double> d;
  const std::size_t all_pairs = n * (n - 1) / 2;
  if (all_pairs <= max_pairs) {
    d.reserve(all_pairs);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) d.push_back(dist(a, b));
    }
  } else {
    Rng rng(derive_seed(seed, 0x6e0));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    d.reserve(max_pairs);
    while (d.size() < max_pairs) {
      const std::size_t a = pick(rng), b = pick(rng);
      if (a != b) d.push_back(dist(a, b));
    }
  }
  g.pairs = d.size();
  auto ds = mean_std(d);
  g.distance_mean = ds.mean;
  g.distance_std = ds.std;
  return g;
}

}  // namespace

ClusterGeometry cluster_geometry(const std::unordered_map<std::uint64_t, std::vector<double>>& embeddings,
                                 const std::unordered_map<std::uint64_t, std::uint64_t>& partition,
                                 std::uint64_t seed, std::size_t max_pairs) {
  // Ordered containers keep the reduction order independent of hashing.
  std::map<std::uint64_t, std::vector<std::uint64_t>> members;
  for (const auto& [raw, key] : partition) {
    if (embeddings.count(raw)) members[key].push_back(raw);
  }
  std::vector<std::vector<const std::vector<double>*>> all;
  for (auto& [key, raws] : members) {
    std::sort(raws.begin(), raws.end());
    std::vector<const std::vector<double>*> c;
    for (auto r : raws) c.push_back(&embeddings.at(r));
    all.push_back(std::move(c));
  }
  std::vector<std::vector<const std::vector<double>*>> small, top;
  for (const auto& c : all) {
    if (c.size() >= 4 && c.size() <= 10) small.push_back(c);
  }
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return all[a].size() > all[b].size(); });
  order.resize(std::min<std::size_t>(order.size(), 1000));
  for (auto i : order) top.push_back(all[i]);
  return ClusterGeometry{geometry_of(small, seed, max_pairs), geometry_of(top, seed + 1, max_pairs)};
}

void add_geometry(MetricsReport& report, const std::string& prefix, const ClusterGeometry& g) {
  auto put = [&](const std::string& name, const std::optional<double>& v, const char* why) {
    if (v) {
      report.set(name, *v);
    } else {
      report.unavailable(name, why);
    }
  };
  for (const auto& [label, s] : {std::pair<std::string, const GeometryStats&>{"small", g.small},
                                 std::pair<std::string, const GeometryStats&>{"top", g.top}}) {
    const std::string p = prefix + "." + label + ".";
    report.set(p + "clusters", static_cast<double>(s.clusters));
    put(p + "variance_mean", s.variance_mean, "no cluster with two or more items");
    put(p + "variance_std", s.variance_std, "no cluster with two or more items");
    put(p + "distance_mean", s.distance_mean, "fewer than two clusters");
    put(p + "distance_std", s.distance_std, "fewer than two clusters");
  }
}

// ---- attention ----

AttentionStats attention_metrics(const ranker::AttentionTrace& trace, bool square) {
  if (trace.rows == 0 || trace.cols == 0) throw ContractError("attention: empty trace");
  const std::size_t per = trace.rows * trace.cols;
  if (trace.weights.size() % per != 0) throw DimensionError("attention: ragged trace");
  const std::size_t examples = trace.weights.size() / per;
  if (trace.padding.size() != examples) throw DimensionError("attention: padding rows do not match examples");
  if (square && trace.rows != trace.cols) throw DimensionError("attention: self needs a square matrix");

  AttentionStats s;
  double first = 0.0, pad = 0.0, entropy = 0.0, self = 0.0;
  for (std::size_t e = 0; e < examples; ++e) {
    const auto& padding = trace.padding[e];
    for (std::size_t i = 0; i < trace.rows; ++i) {
      const double* a = trace.weights.data() + e * per + i * trace.cols;
      first += a[0];
      double h = 0.0, p = 0.0;
      for (std::size_t j = 0; j < trace.cols; ++j) {
        if (a[j] > 0.0) h -= a[j] * std::log2(a[j]);
        if (padding[j]) p += a[j];
      }
      entropy += h;
      pad += p;
      if (square) self += a[i];
    }
  }
  const double n = static_cast<double>(examples * trace.rows);
  s.rows = examples * trace.rows;
  s.first = first / n;
  s.pad = pad / n;
  s.entropy = entropy / n;
  if (square) s.self = self / n;
  return s;
}

ranker::AttentionTrace collect_attention(const ranker::RankerModel& model, const corpus::Stream& stream,
                                         std::span<const corpus::Event> events) {
  if (model.config().aggregation == ranker::Aggregation::Bypass) {
    throw ContractError("attention: the bypass aggregation has no attention weights");
  }
  ranker::AttentionTrace trace;
  constexpr std::size_t kBatch = 1024;
  std::vector<ranker::Example> batch;
  for (std::size_t s = 0; s < events.size(); s += kBatch) {
    batch.clear();
    for (std::size_t i = s; i < std::min(events.size(), s + kBatch); ++i) {
      batch.push_back(ranker::example_of(events[i], stream));
    }
    tensor::Tape tape;
    model.forward(tape, batch, &trace);
  }
  return trace;
}

// ---- A/A ----

double aar(double p1, double p2, double eps) { return 2.0 * (p1 - p2) / (p1 + p2 + eps); }

std::vector<AarPair> score_aa_pairs(const ranker::RankerModel& model, const corpus::Stream& stream,
                                    std::span<const std::pair<std::uint64_t, std::uint64_t>> pairs) {
  const auto eval = stream.eval();
  if (eval.empty()) throw ContractError("A/A: no eval events to borrow contexts from");
  std::vector<ranker::Example> batch;
  batch.reserve(2 * pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& ctx = eval[i % eval.size()];
    auto ex = ranker::example_of(ctx, stream);
    ex.target = pairs[i].first;
    batch.push_back(ex);
    ex.target = pairs[i].second;
    batch.push_back(ex);
  }
  const auto p = model.predict(batch);
  std::vector<AarPair> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out.push_back({pairs[i].first, pairs[i].second, p[2 * i], p[2 * i + 1]});
  }
  return out;
}

MetricsReport aar_report(std::span<const AarPair> pairs, MetricsReport report, double eps) {
  if (pairs.empty()) throw ContractError("A/A: no injected pairs");
  std::vector<double> v;
  double sum = 0.0;
  std::size_t identical = 0;
  for (const auto& p : pairs) {
    const double a = std::abs(aar(p.p_original, p.p_copy, eps));
    v.push_back(a);
    sum += a;
    identical += p.p_original == p.p_copy;
  }
  report.set("aar.pairs", static_cast<double>(pairs.size()));
  report.set("aar.mean_abs", sum / static_cast<double>(pairs.size()));
  report.set("aar.identical_share", static_cast<double>(identical) / static_cast<double>(pairs.size()));
  report.set("aar.p50_abs", quantile(v, 0.5));
  report.set("aar.p90_abs", quantile(v, 0.9));
  report.set("aar.p99_abs", quantile(v, 0.99));
  report.set("aar.max_abs", *std::max_element(v.begin(), v.end()));
  return report;
}

void save_aa_pairs(const std::filesystem::path& path, const io::FileHeader& header,
                   std::span<const AarPair> pairs) {
  auto out = open_out(path);
  out << header.to_line() << '\n';
  out << "# original\tcopy\tp_original\tp_copy\n";
  for (const auto& p : pairs) {
    out << p.original << '\t' << p.copy << '\t' << io::format_double(p.p_original) << '\t'
        << io::format_double(p.p_copy) << '\n';
  }
}

std::vector<AarPair> load_aa_pairs(const std::filesystem::path& path, io::FileHeader* header) {
  std::vector<AarPair> out;
  for (const auto& line : read_body(path, "aa-pairs", header)) {
    auto f = io::split(line, '\t');
    if (f.size() != 4) throw FormatError(path.string() + ": expected 4 columns");
    out.push_back({io::parse_u64(f[0]), io::parse_u64(f[1]), io::parse_double(f[2]), io::parse_double(f[3])});
  }
  return out;
}

// ---- click loss ----

std::vector<ClickLossDepth> click_loss_analog(const ranker::RankerModel& model, const corpus::Corpus& corpus,
                                              const corpus::Stream& stream, const SemanticIdTable& semids,
                                              const ClickLossOptions& options) {
  const auto eval = stream.eval();
  if (eval.empty()) throw ContractError("click loss: empty eval stream");
  if (options.set_size == 0 || options.candidates < options.set_size) {
    throw ConfigError("click loss: need candidates >= set_size > 0");
  }
  const std::size_t L = semids.levels();
  const std::uint64_t K = semids.codebook_size();

  // prefix[k-1]: depth-k prefix key -> corpus positions, ascending.
  std::vector<std::unordered_map<std::uint64_t, std::vector<std::size_t>>> prefix(L);
  std::vector<std::vector<std::uint64_t>> key_of(corpus.items.size(), std::vector<std::uint64_t>(L, 0));
  std::vector<char> has_id(corpus.items.size(), 0);
  std::vector<std::size_t> originals;
  for (std::size_t i = 0; i < corpus.items.size(); ++i) {
    const auto& item = corpus.items[i];
    if (item.copy_of) continue;
    originals.push_back(i);
    const SemanticId* id = semids.find(item.raw_id);
    if (!id) continue;
    has_id[i] = 1;
    std::uint64_t acc = 0;
    for (std::size_t k = 0; k < L; ++k) {
      acc = acc * K + id->codes[k];
      key_of[i][k] = acc;
      prefix[k][acc].push_back(i);
    }
  }

  std::vector<ClickLossDepth> out(L);
  std::vector<double> base_ctr(L, 0.0), swapped_ctr(L, 0.0);
  for (std::size_t k = 0; k < L; ++k) out[k].depth = k + 1;

  const std::size_t contexts = std::min(options.contexts, eval.size());
  Rng rng(derive_seed(options.seed, 0xc1c));
  std::uniform_int_distribution<std::size_t> any_item(0, originals.size() - 1);
  std::vector<ranker::Example> batch;
  std::vector<std::size_t> cand;
  for (std::size_t c = 0; c < contexts; ++c) {
    const auto& ev = eval[c * eval.size() / contexts];
    const auto& user = corpus.users.at(ev.user);

    cand.clear();
    std::set<std::size_t> chosen;
    for (std::size_t tries = 0; cand.size() < options.candidates && tries < 50 * options.candidates; ++tries) {
      const std::size_t pos = originals[any_item(rng)];
      if (!has_id[pos] || !corpus.items[pos].alive_at(ev.time) || !chosen.insert(pos).second) continue;
      cand.push_back(pos);
    }
    if (cand.size() < options.set_size) {
      for (auto& d : out) ++d.skips;
      continue;
    }
    batch.clear();
    auto base = ranker::example_of(ev, stream);
    for (auto pos : cand) {
      base.target = corpus.items[pos].raw_id;
      batch.push_back(base);
    }
    const auto scores = model.predict(batch);
    std::vector<std::size_t> order(cand.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores[a] != scores[b] ? scores[a] > scores[b] : cand[a] < cand[b];
    });
    std::vector<std::size_t> top;
    for (std::size_t i = 0; i < options.set_size; ++i) top.push_back(cand[order[i]]);
    const std::set<std::size_t> in_set(top.begin(), top.end());

    double ctr = 0.0;
    for (auto pos : top) ctr += corpus::ground_truth_ctr(user, corpus.items[pos], corpus.config);
    const std::size_t slot = std::uniform_int_distribution<std::size_t>(0, top.size() - 1)(rng);
    const std::size_t victim = top[slot];
    const double victim_ctr = corpus::ground_truth_ctr(user, corpus.items[victim], corpus.config);

    for (std::size_t k = 0; k < L; ++k) {
      std::vector<std::size_t> pool;
      for (auto pos : prefix[k].at(key_of[victim][k])) {
        if (!in_set.count(pos) && corpus.items[pos].alive_at(ev.time)) pool.push_back(pos);
      }
      if (pool.empty()) {
        ++out[k].skips;
        continue;
      }
      Rng pick(derive_seed(options.seed, (c << 8) | k));
      const std::size_t repl = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(pick)];
      const double repl_ctr = corpus::ground_truth_ctr(user, corpus.items[repl], corpus.config);
      base_ctr[k] += ctr;
      swapped_ctr[k] += ctr - victim_ctr + repl_ctr;
      ++out[k].swaps;
    }
  }
  for (std::size_t k = 0; k < L; ++k) {
    out[k].rate = base_ctr[k] > 0.0 ? (swapped_ctr[k] - base_ctr[k]) / base_ctr[k] : std::nan("");
  }
  return out;
}

// ---- distributions ----

double gini(std::vector<double> values) {
  if (values.empty()) throw MetricError("gini: empty input");
  std::sort(values.begin(), values.end());
  double total = 0.0, weighted = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    total += values[i];
    weighted += static_cast<double>(i + 1) * values[i];
  }
  if (total <= 0.0) throw MetricError("gini: all values are zero");
  const double n = static_cast<double>(values.size());
  return 2.0 * weighted / (n * total) - (n + 1.0) / n;
}

void Series::save(const std::filesystem::path& path, const io::FileHeader& header) const {
  auto out = open_out(path);
  out << header.to_line() << '\n';
  out << "#";
  for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "\t" : " ") << columns[i];
  out << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "\t" : "") << io::format_double(r[i]);
    out << '\n';
  }
}

namespace {

// Every row when short, else evenly spaced rows always keeping the last one.
std::vector<std::size_t> thin(std::size_t n, std::size_t max_points) {
  std::vector<std::size_t> idx;
  if (n == 0) return idx;
  if (n <= max_points || max_points < 2) {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
  }
  for (std::size_t i = 0; i < max_points; ++i) idx.push_back(i * (n - 1) / (max_points - 1));
  return idx;
}

Series ranked(const std::vector<double>& sorted_desc, std::size_t max_points) {
  Series s{{"rank", "clicks"}, {}};
  for (auto i : thin(sorted_desc.size(), max_points)) {
    s.rows.push_back({static_cast<double>(i + 1), sorted_desc[i]});
  }
  return s;
}

}  // namespace

Distributions distribution_exports(const corpus::Corpus& corpus, const corpus::Stream& stream,
                                   const SemanticIdTable& semids, std::size_t max_points) {
  Distributions d;

  std::unordered_map<std::uint64_t, double> impressions, clicks;
  for (const auto& e : stream.events) {
    impressions[e.item] += 1.0;
    if (e.label) clicks[e.item] += 1.0;
  }
  std::vector<double> imp, raw_clicks;
  std::map<SemanticId, double> code_clicks;
  for (const auto& item : corpus.items) {
    if (item.copy_of) continue;
    auto it = impressions.find(item.raw_id);
    imp.push_back(it == impressions.end() ? 0.0 : it->second);
    auto ct = clicks.find(item.raw_id);
    const double c = ct == clicks.end() ? 0.0 : ct->second;
    raw_clicks.push_back(c);
    if (const SemanticId* id = semids.find(item.raw_id)) code_clicks[*id] += c;
  }

  std::sort(imp.begin(), imp.end(), std::greater<>());
  const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
  d.cumulative_impressions.columns = {"item_share", "impression_share"};
  std::vector<double> cum(imp.size());
  double run = 0.0;
  for (std::size_t i = 0; i < imp.size(); ++i) {
    run += imp[i];
    cum[i] = run;
  }
  for (auto i : thin(imp.size(), max_points)) {
    const bool last = i + 1 == imp.size();
    d.cumulative_impressions.rows.push_back(
        {static_cast<double>(i + 1) / static_cast<double>(imp.size()), last ? 1.0 : cum[i] / total});
  }

  d.survival.columns = {"day", "alive_share"};
  const double span_days =
      std::max(3.0 * corpus.config.median_lifetime_days,
               static_cast<double>(corpus.config.eval_end_seconds()) / corpus::kSecondsPerDay);
  const std::size_t cohort = corpus.initial_cohort;
  std::vector<std::int64_t> deaths;
  for (std::size_t i = 0; i < cohort; ++i) deaths.push_back(corpus.items[i].death);
  std::sort(deaths.begin(), deaths.end());
  for (double day = 0.0; day <= span_days + 1e-9; day += 0.25) {
    const auto t = static_cast<std::int64_t>(std::llround(day * corpus::kSecondsPerDay));
    const auto alive = deaths.end() - std::upper_bound(deaths.begin(), deaths.end(), t);
    d.survival.rows.push_back({day, cohort ? static_cast<double>(alive) / static_cast<double>(cohort) : 0.0});
  }

  std::vector<double> semid_clicks;
  for (const auto& [id, c] : code_clicks) semid_clicks.push_back(c);
  d.gini_raw = gini(raw_clicks);
  d.gini_semid = gini(semid_clicks);
  std::sort(raw_clicks.begin(), raw_clicks.end(), std::greater<>());
  std::sort(semid_clicks.begin(), semid_clicks.end(), std::greater<>());
  d.raw_clicks = ranked(raw_clicks, max_points);
  d.semid_clicks = ranked(semid_clicks, max_points);
  return d;
}

}  // namespace semid::analysis

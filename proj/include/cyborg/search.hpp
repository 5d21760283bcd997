#pragma once

// The alpha x measure grid search and rank-sum preset selection at three
// tiers: opt (one architecture and domain), arch (summed over domains) and
// gen (summed over architectures and domains).

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cyborg/csv.hpp"
#include "cyborg/cyborg_loss.hpp"
#include "cyborg/training.hpp"

namespace cyborg {

inline std::size_t measure_order(MeasureKind m) {
  return static_cast<std::size_t>(std::find(kAllMeasures.begin(), kAllMeasures.end(), m) - kAllMeasures.begin());
}

/// Grid cell. Ordering is the tie-break order: lower alpha, then L1 < MSE <
/// SSIM < SSIM+L1 < SSIM+MSE.
struct Cell {
  double alpha = 1.0;
  MeasureKind measure = MeasureKind::SSIM;

  friend bool operator==(const Cell&, const Cell&) = default;
  friend bool operator<(const Cell& a, const Cell& b) {
    if (a.alpha != b.alpha) return a.alpha < b.alpha;
    return measure_order(a.measure) < measure_order(b.measure);
  }
};

struct CellStats {
  double mean_val_auc = 0.0;
  double std_val_auc = 0.0;
  int runs = 0;

  friend bool operator==(const CellStats&, const CellStats&) = default;
};

struct SearchTable {
  std::string architecture;
  std::string domain;
  std::map<Cell, CellStats> cells;

  friend bool operator==(const SearchTable&, const SearchTable&) = default;
};

/// alpha in {0.05, 0.10, ..., 1.00} when `full`, else {0.25, 0.5, 0.75, 1.0}.
inline std::vector<double> alpha_grid(bool full) {
  std::vector<double> out;
  if (full)
    for (int k = 1; k <= 20; ++k) out.push_back(k / 20.0);
  else
    out = {0.25, 0.5, 0.75, 1.0};
  return out;
}

/// Produces mean/std validation AUC for one (alpha, measure) setting.
using CellEvaluator = std::function<CellStats(const CyborgTerm&)>;

/// Evaluates every cell. Alpha = 1 ignores the measure, so it is evaluated
/// once and shared by all measures.
inline SearchTable grid_search(std::span<const double> alphas, std::span<const MeasureKind> measures,
                               const CellEvaluator& evaluate, std::string architecture = "toy_cnn",
                               std::string domain = "synthetic") {
  if (alphas.empty() || measures.empty()) fail(ErrorKind::ConfigInvalid, "search grid is empty");
  SearchTable table{std::move(architecture), std::move(domain), {}};
  std::optional<CellStats> traditional;
  for (double alpha : alphas) {
    if (!(alpha > 0 && alpha <= 1)) fail(ErrorKind::ConfigInvalid, "alpha outside (0,1]");
    for (auto m : measures) {
      const CyborgTerm term{alpha, DistanceMeasure{m}};
      if (alpha == 1.0) {
        if (!traditional) traditional = evaluate(term);
        table.cells[{alpha, m}] = *traditional;
      } else {
        table.cells[{alpha, m}] = evaluate(term);
      }
    }
  }
  return table;
}

/// Cell evaluator backed by repeated training; selection runs on val AUC.
template <class Factory>
CellEvaluator training_evaluator(TrainConfig base, const Dataset& data, Factory factory, unsigned jobs = 1) {
  base.selection = SelectionMetric::val_auc;
  return [base, &data, factory, jobs](const CyborgTerm& term) {
    TrainConfig c = base;
    c.term = term;
    const auto r = train_repeated(c, data, factory, std::nullopt, jobs);
    return CellStats{r.best_val_auc.mean, r.best_val_auc.std, c.runs};
  };
}

inline const csv::Row& search_header() {
  static const csv::Row h{"alpha", "measure", "mean_val_auc", "std_val_auc", "runs"};
  return h;
}

inline void write_search_table(const std::filesystem::path& path, const SearchTable& t) {
  std::vector<csv::Row> rows;
  for (const auto& [cell, s] : t.cells)
    rows.push_back({csv::number(cell.alpha), std::string(to_string(cell.measure)), csv::number(s.mean_val_auc),
                    csv::number(s.std_val_auc), std::to_string(s.runs)});
  csv::write(path, search_header(), rows);
}

inline SearchTable read_search_table(const std::filesystem::path& path, std::string architecture,
                                     std::string domain) {
  const auto rows = csv::read(path);
  if (rows.empty() || rows[0] != search_header()) fail(ErrorKind::SchemaError, path.string() + ": bad header");
  SearchTable t{std::move(architecture), std::move(domain), {}};
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto where = path.string() + " row " + std::to_string(i);
    if (r.size() != 5) fail(ErrorKind::SchemaError, where + ": expected 5 fields");
    const auto m = parse_measure(r[1]);
    if (!m) fail(ErrorKind::SchemaError, where + ": unknown measure '" + r[1] + "'");
    t.cells[{csv::parse_double(r[0], "alpha"), *m}] = {csv::parse_double(r[2], "mean_val_auc"),
                                                      csv::parse_double(r[3], "std_val_auc"), std::stoi(r[4])};
  }
  return t;
}

// ---------------------------------------------------------------------------
// Ranking

/// Points 1..k by descending AUC; ties follow the cell order.
inline std::map<Cell, int> rank_points(const SearchTable& t) {
  std::vector<std::pair<Cell, double>> v;
  for (const auto& [cell, s] : t.cells) v.push_back({cell, s.mean_val_auc});
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::map<Cell, int> points;
  for (std::size_t i = 0; i < v.size(); ++i) points[v[i].first] = static_cast<int>(i + 1);
  return points;
}

/// Sum of per-table points; every table must cover the same cells.
inline std::map<Cell, int> point_sums(std::span<const SearchTable> tables) {
  if (tables.empty()) fail(ErrorKind::EmptyInput, "no search tables");
  std::map<Cell, int> sums;
  for (const auto& [cell, s] : tables[0].cells) sums[cell] = 0;
  for (const auto& t : tables) {
    if (t.cells.size() != sums.size())
      fail(ErrorKind::GridMismatch, t.architecture + "/" + t.domain + " has a different grid");
    for (const auto& [cell, p] : rank_points(t)) {
      auto it = sums.find(cell);
      if (it == sums.end()) fail(ErrorKind::GridMismatch, t.architecture + "/" + t.domain + " has a different grid");
      it->second += p;
    }
  }
  return sums;
}

enum class Tier { opt, arch, gen };

constexpr std::string_view to_string(Tier t) {
  switch (t) {
    case Tier::opt: return "opt";
    case Tier::arch: return "arch";
    case Tier::gen: return "gen";
  }
  return "?";
}

inline std::optional<Tier> parse_tier(std::string_view s) {
  for (auto t : {Tier::opt, Tier::arch, Tier::gen})
    if (s == to_string(t)) return t;
  return std::nullopt;
}

struct Preset {
  Tier tier = Tier::gen;
  MeasureKind measure = MeasureKind::SSIM;
  double alpha = 0.75;
  std::string architecture;  // empty for gen
  std::string domain;        // set for opt only

  CyborgTerm term() const { return {alpha, DistanceMeasure{measure}}; }
  friend bool operator==(const Preset&, const Preset&) = default;
};

inline Cell min_sum_cell(const std::map<Cell, int>& sums) {
  // Map iteration follows the tie-break order, so the first minimum wins.
  auto best = sums.begin();
  for (auto it = sums.begin(); it != sums.end(); ++it)
    if (it->second < best->second) best = it;
  return best->first;
}

/// Best cell of a single table.
inline Preset rank_opt(const SearchTable& table) {
  const auto cell = min_sum_cell(point_sums(std::span(&table, 1)));
  return {Tier::opt, cell.measure, cell.alpha, table.architecture, table.domain};
}

/// Per-domain tables of one architecture.
inline Preset rank_arch(std::span<const SearchTable> tables) {
  const auto cell = min_sum_cell(point_sums(tables));
  return {Tier::arch, cell.measure, cell.alpha, tables.front().architecture, ""};
}

/// All architecture x domain tables; points are summed over every table.
inline Preset rank_gen(std::span<const SearchTable> tables) {
  const auto cell = min_sum_cell(point_sums(tables));
  return {Tier::gen, cell.measure, cell.alpha, "", ""};
}

// ---------------------------------------------------------------------------
// Preset files: one `key=value` per line.

inline std::string format_preset(const Preset& p) {
  std::ostringstream out;
  out << "tier=" << to_string(p.tier) << "\n"
      << "measure=" << to_string(p.measure) << "\n"
      << "alpha=" << csv::number(p.alpha) << "\n";
  if (!p.architecture.empty()) out << "architecture=" << p.architecture << "\n";
  if (!p.domain.empty()) out << "domain=" << p.domain << "\n";
  return out.str();
}

inline Preset parse_preset(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::SchemaError, "preset line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const char* key : {"tier", "measure", "alpha"})
    if (!kv.count(key)) fail(ErrorKind::SchemaError, std::string("preset is missing ") + key);
  Preset p;
  const auto tier = parse_tier(kv["tier"]);
  const auto measure = parse_measure(kv["measure"]);
  if (!tier || !measure) fail(ErrorKind::SchemaError, "preset has an unknown tier or measure");
  p.tier = *tier;
  p.measure = *measure;
  p.alpha = csv::parse_double(kv["alpha"], "alpha");
  if (!(p.alpha >= 0 && p.alpha <= 1)) fail(ErrorKind::SchemaError, "preset alpha outside [0,1]");
  p.architecture = kv["architecture"];
  p.domain = kv["domain"];
  return p;
}

inline void save_preset(const std::filesystem::path& path, const Preset& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << format_preset(p);
}

inline Preset load_preset(const std::filesystem::path& path) { return parse_preset(csv::read_text(path)); }

// ---------------------------------------------------------------------------
// Published parameter sets

inline const std::vector<std::string>& published_architectures() {
  static const std::vector<std::string> a{"densenet", "resnet", "inception"};
  return a;
}

inline const std::vector<std::string>& published_domains() {
  static const std::vector<std::string> d{"face", "iris", "cxr"};
  return d;
}

inline const std::vector<Preset>& published_presets() {
  using M = MeasureKind;
  static const std::vector<Preset> p{
      {Tier::gen, M::SSIM, 0.75, "", ""},
      {Tier::arch, M::SSIM_MSE, 0.8, "densenet", ""},
      {Tier::arch, M::L1, 0.65, "resnet", ""},
      {Tier::arch, M::SSIM_L1, 0.85, "inception", ""},
      {Tier::opt, M::L1, 0.25, "densenet", "face"},
      {Tier::opt, M::L1, 0.55, "densenet", "iris"},
      {Tier::opt, M::SSIM, 0.7, "densenet", "cxr"},
      {Tier::opt, M::L1, 0.35, "resnet", "face"},
      {Tier::opt, M::SSIM_L1, 0.85, "resnet", "iris"},
      {Tier::opt, M::SSIM_L1, 0.75, "resnet", "cxr"},
      {Tier::opt, M::L1, 0.45, "inception", "face"},
      {Tier::opt, M::SSIM_L1, 0.75, "inception", "iris"},
      {Tier::opt, M::SSIM_L1, 0.85, "inception", "cxr"},
  };
  return p;
}

/// Looks up a published preset. `architecture` is needed for arch and opt,
/// `domain` for opt.
inline std::optional<Preset> find_preset(Tier tier, const std::string& architecture = "",
                                         const std::string& domain = "") {
  for (const auto& p : published_presets())
    if (p.tier == tier && (tier == Tier::gen || p.architecture == architecture) &&
        (tier != Tier::opt || p.domain == domain))
      return p;
  return std::nullopt;
}

}  // namespace cyborg

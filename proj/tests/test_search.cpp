#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include "cyborg/search.hpp"
#include "oracles.hpp"
#include "published_tables.hpp"

using namespace cyborg;
namespace fs = std::filesystem;

namespace {

// AUCs of `tables` laid out for the oracle, cells in map (tie-break) order.
std::vector<std::vector<double>> auc_matrix(const std::vector<SearchTable>& tables, std::vector<Cell>& cells) {
  cells.clear();
  for (const auto& [c, s] : tables[0].cells) cells.push_back(c);
  std::vector<std::vector<double>> out;
  for (const auto& t : tables) {
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(t.cells.at(c).mean_val_auc);
    out.push_back(row);
  }
  return out;
}

SearchTable random_table(std::mt19937_64& rng, std::span<const double> alphas, bool coarse_values) {
  std::uniform_real_distribution<double> u(0.5, 1.0);
  std::uniform_int_distribution<int> level(0, 4);
  SearchTable t{"a", "d", {}};
  for (double a : alphas)
    for (auto m : kAllMeasures) t.cells[{a, m}] = {coarse_values ? 0.5 + 0.1 * level(rng) : u(rng), 0.0, 1};
  return t;
}

Dataset tiny_dataset() {
  SpuriousConfig cfg;
  cfg.image_size = 16;
  cfg.salient = {7, 7, 8, 8};
  cfg.marker = {0, 0, 3, 3};
  cfg.saliency_sigma_px = 1.0;
  cfg.n_train_per_class = 6;
  cfg.n_val_per_class = 5;
  cfg.n_test_per_class = 2;
  cfg.signal = 0.3;
  auto data = generate_spurious_dataset(cfg);
  align_saliency(data, {4, 4});
  return data;
}

ToyCnn tiny_model(std::uint64_t seed) {
  BackboneSpec spec;
  spec.input_size = 16;
  spec.stage_widths = {3, 3, 3};
  spec.initialization = "seed:" + std::to_string(seed);
  return ToyCnn(spec);
}

}  // namespace

TEST(Grid, AlphaValues) {
  const auto full = alpha_grid(true);
  ASSERT_EQ(full.size(), 20u);
  EXPECT_EQ(full.front(), 0.05);
  EXPECT_EQ(full[14], 0.75);
  EXPECT_EQ(full.back(), 1.0);
  EXPECT_EQ(alpha_grid(false), (std::vector<double>{0.25, 0.5, 0.75, 1.0}));
}

TEST(GridSearch, AlphaOneCellsShareOneEvaluation) {
  int calls = 0;
  const double alphas[] = {1.0};
  const auto t = grid_search(alphas, kAllMeasures, [&](const CyborgTerm&) {
    ++calls;
    return CellStats{0.5 + 0.01 * calls, 0.0, 1};
  });
  EXPECT_EQ(calls, 1);
  ASSERT_EQ(t.cells.size(), 5u);
  for (const auto& [c, s] : t.cells) EXPECT_NEAR(s.mean_val_auc, t.cells.begin()->second.mean_val_auc, 1e-9);
}

TEST(GridSearch, AlphaOneTrainingMatchesAcrossMeasures) {
  const auto data = tiny_dataset();
  TrainConfig c;
  c.max_epochs = 2;
  c.runs = 1;
  c.batch_size = 4;
  c.lr = 0.1;
  const double alphas[] = {1.0};
  // Every alpha = 1 cell trained separately still agrees, since the measure is unused.
  std::vector<double> values;
  for (auto m : kAllMeasures) {
    const MeasureKind one[] = {m};
    const auto t = grid_search(alphas, one, training_evaluator(c, data, tiny_model));
    values.push_back(t.cells.begin()->second.mean_val_auc);
  }
  for (double v : values) EXPECT_NEAR(v, values[0], 1e-9);
}

TEST(GridSearch, RerunIsBitwiseIdentical) {
  const auto data = tiny_dataset();
  TrainConfig c;
  c.max_epochs = 2;
  c.runs = 2;
  c.batch_size = 4;
  c.lr = 0.1;
  const double alphas[] = {0.5, 1.0};
  const MeasureKind measures[] = {MeasureKind::L1, MeasureKind::SSIM};
  const auto a = grid_search(alphas, measures, training_evaluator(c, data, tiny_model));
  const auto b = grid_search(alphas, measures, training_evaluator(c, data, tiny_model));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.cells.size(), 4u);
  EXPECT_EQ(a.cells.at({0.5, MeasureKind::L1}).runs, 2);
}

TEST(GridSearch, PlantedWinnerIsFound) {
  // Evaluator whose response surface peaks at (0.5, L1).
  const auto evaluate = [](const CyborgTerm& t) {
    const double d = std::abs(t.alpha - 0.5) + 0.03 * static_cast<double>(measure_order(t.measure.kind));
    return CellStats{0.95 - d, 0.0, 1};
  };
  const auto alphas = alpha_grid(true);
  const auto t = grid_search(alphas, kAllMeasures, evaluate);
  const auto p = rank_opt(t);
  EXPECT_EQ(p.alpha, 0.5);
  EXPECT_EQ(p.measure, MeasureKind::L1);
}

TEST(GridSearch, RejectsEmptyGrid) {
  const std::vector<double> none;
  EXPECT_THROW(grid_search(none, kAllMeasures, [](const CyborgTerm&) { return CellStats{}; }), Error);
}

TEST(Rank, PointsCoverOneToK) {
  std::mt19937_64 rng(1);
  const auto alphas = alpha_grid(false);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = random_table(rng, alphas, trial % 2 == 0);
    const auto points = rank_points(t);
    long long sum = 0;
    std::set<int> seen;
    for (const auto& [c, p] : points) sum += p, seen.insert(p);
    const long long k = static_cast<long long>(t.cells.size());
    EXPECT_EQ(sum, k * (k + 1) / 2);
    EXPECT_EQ(seen.size(), t.cells.size());
  }
}

TEST(Rank, SingleDomainGivesArgmax) {
  std::mt19937_64 rng(2);
  const auto alphas = alpha_grid(false);
  const auto t = random_table(rng, alphas, false);
  auto best = t.cells.begin();
  for (auto it = t.cells.begin(); it != t.cells.end(); ++it)
    if (it->second.mean_val_auc > best->second.mean_val_auc) best = it;
  const auto p = rank_arch(std::vector<SearchTable>{t});
  EXPECT_EQ(p.tier, Tier::arch);
  EXPECT_EQ(p.alpha, best->first.alpha);
  EXPECT_EQ(p.measure, best->first.measure);
}

TEST(Rank, MatchesExhaustiveRankSums) {
  std::mt19937_64 rng(3);
  const auto alphas = alpha_grid(false);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<SearchTable> tables;
    const int n = 2 + trial % 3;
    for (int i = 0; i < n; ++i) tables.push_back(random_table(rng, alphas, trial % 2 == 1));
    if (trial < 10) {
      // Two domains with reversed orderings.
      tables.resize(2);
      tables[1] = tables[0];
      for (auto& [c, s] : tables[1].cells) s.mean_val_auc = 2.0 - s.mean_val_auc;
    }
    std::vector<Cell> cells;
    const auto winner = oracle::rank_sum_winner(auc_matrix(tables, cells));
    const auto p = rank_arch(tables);
    EXPECT_EQ(p.alpha, cells[winner].alpha);
    EXPECT_EQ(p.measure, cells[winner].measure);
  }
}

TEST(Rank, AllEqualUsesTieBreak) {
  SearchTable t{"a", "d", {}};
  for (double a : alpha_grid(false))
    for (auto m : kAllMeasures) t.cells[{a, m}] = {0.7, 0.0, 1};
  const auto p = rank_arch(std::vector<SearchTable>{t, t});
  EXPECT_EQ(p.alpha, 0.25);
  EXPECT_EQ(p.measure, MeasureKind::L1);
  const auto points = rank_points(t);
  EXPECT_EQ(points.at({0.25, MeasureKind::SSIM_MSE}), 5);
  EXPECT_EQ(points.at({0.5, MeasureKind::L1}), 6);
}

TEST(Rank, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(4);
  const auto alphas = alpha_grid(false);
  std::vector<SearchTable> tables{random_table(rng, alphas, true), random_table(rng, alphas, true)};
  auto warped = tables;
  for (auto& t : warped)
    for (auto& [c, s] : t.cells) s.mean_val_auc = std::pow(s.mean_val_auc, 3) * 0.5;
  EXPECT_EQ(rank_arch(tables), rank_arch(warped));
  EXPECT_EQ(point_sums(tables), point_sums(warped));
}

TEST(Rank, GridMismatch) {
  std::mt19937_64 rng(5);
  const auto coarse = alpha_grid(false);
  const std::vector<double> other{0.25, 0.5, 0.7, 1.0};
  const std::vector<SearchTable> tables{random_table(rng, coarse, false), random_table(rng, other, false)};
  try {
    rank_arch(tables);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GridMismatch);
  }
  std::vector<SearchTable> shorter{tables[0], tables[0]};
  shorter[1].cells.erase(shorter[1].cells.begin());
  EXPECT_THROW(rank_gen(shorter), Error);
}

TEST(Rank, GenWithOneArchitectureEqualsArch) {
  std::mt19937_64 rng(6);
  const auto alphas = alpha_grid(false);
  const std::vector<SearchTable> tables{random_table(rng, alphas, false), random_table(rng, alphas, false)};
  const auto a = rank_arch(tables);
  const auto g = rank_gen(tables);
  EXPECT_EQ(a.alpha, g.alpha);
  EXPECT_EQ(a.measure, g.measure);
  EXPECT_EQ(g.tier, Tier::gen);
}

TEST(Published, TablesReproducePresets) {
  for (const auto& arch : published_architectures()) {
    for (const auto& domain : published_domains()) {
      const auto opt = rank_opt(fixture::published_table(arch, domain));
      EXPECT_EQ(opt, *find_preset(Tier::opt, arch, domain));
    }
    const auto tables = fixture::published_tables_for(arch);
    EXPECT_EQ(rank_arch(tables), *find_preset(Tier::arch, arch));
    std::vector<Cell> cells;
    const auto w = oracle::rank_sum_winner(auc_matrix(tables, cells));
    EXPECT_EQ((Cell{find_preset(Tier::arch, arch)->alpha, find_preset(Tier::arch, arch)->measure}), cells[w]);
  }
  auto all = fixture::all_published_tables();
  const auto gen = rank_gen(all);
  EXPECT_EQ(gen, *find_preset(Tier::gen));
  EXPECT_EQ(gen.measure, MeasureKind::SSIM);
  EXPECT_EQ(gen.alpha, 0.75);
  EXPECT_EQ(point_sums(all).at({0.75, MeasureKind::SSIM}), 26);
  std::reverse(all.begin(), all.end());
  std::swap(all[1], all[5]);
  EXPECT_EQ(rank_gen(all), gen);
}

TEST(Published, RegistryContents) {
  EXPECT_EQ(published_presets().size(), 13u);
  EXPECT_EQ(find_preset(Tier::arch, "resnet")->measure, MeasureKind::L1);
  EXPECT_EQ(find_preset(Tier::arch, "resnet")->alpha, 0.65);
  EXPECT_EQ(find_preset(Tier::opt, "densenet", "cxr")->alpha, 0.7);
  EXPECT_FALSE(find_preset(Tier::arch, "vgg"));
}

TEST(Preset, RoundTripsExactly) {
  for (const auto& p : published_presets()) EXPECT_EQ(parse_preset(format_preset(p)), p);
  const Preset odd{Tier::opt, MeasureKind::MSE, 0.1 + 0.2, "toy_cnn", "synthetic"};
  const auto path = fs::temp_directory_path() / "cyborg_preset.txt";
  save_preset(path, odd);
  EXPECT_EQ(load_preset(path), odd);
  EXPECT_THROW(parse_preset("tier=gen\nmeasure=SSIM\n"), Error);
  EXPECT_THROW(parse_preset("tier=best\nmeasure=SSIM\nalpha=0.5\n"), Error);
}

TEST(SearchCsv, RoundTrip) {
  std::mt19937_64 rng(7);
  const auto alphas = alpha_grid(true);
  auto t = random_table(rng, alphas, false);
  t.architecture = "toy_cnn";
  t.domain = "synthetic";
  const auto path = fs::temp_directory_path() / "cyborg_search.csv";
  write_search_table(path, t);
  EXPECT_EQ(read_search_table(path, "toy_cnn", "synthetic"), t);
  EXPECT_EQ(csv::read(path)[0], search_header());
}

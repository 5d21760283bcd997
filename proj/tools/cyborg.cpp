// Command-line front end: data generation, training, search, ranking,
// evaluation, scaling, eye-tracking heatmaps and the annotation server.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cyborg/ablations.hpp"
#include "cyborg/annotation_service.hpp"
#include "cyborg/datasets.hpp"
#include "cyborg/evaluation.hpp"
#include "cyborg/search.hpp"
#include "cyborg/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace cyborg;

namespace {

fs::path env_dir(const char* name, const char* fallback) {
  const char* v = std::getenv(name);
  return v && *v ? fs::path(v) : fs::path(fallback);
}

fs::path data_dir() { return env_dir("CYBORG_DATA_DIR", "data"); }
fs::path runs_dir() { return env_dir("CYBORG_RUNS_DIR", "runs"); }

// Options shared by every command that trains models.
struct TrainOptions {
  fs::path manifest;
  std::string preset;
  std::string architecture_preset;
  std::string domain_preset;
  std::optional<double> alpha;
  std::string measure;
  std::string saliency_source = "human";
  std::string cam_class = "true_label";
  std::string selection = "val_accuracy";
  double lr = TrainConfig{}.lr;
  int lr_step = TrainConfig{}.lr_step_epochs;
  int epochs = TrainConfig{}.max_epochs;
  std::size_t batch_size = TrainConfig{}.batch_size;
  int runs = TrainConfig{}.runs;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::size_t input_size = 0;
  std::vector<std::size_t> widths = BackboneSpec{}.stage_widths;
};

void add_model_options(CLI::App* cmd, TrainOptions& o) {
  cmd->add_option("--manifest", o.manifest, "Dataset manifest (default: $CYBORG_DATA_DIR/manifest.csv)");
  cmd->add_option("--lr", o.lr, "Initial learning rate")->capture_default_str();
  cmd->add_option("--lr-step", o.lr_step, "Epochs between x0.1 decays")->capture_default_str();
  cmd->add_option("--epochs", o.epochs, "Maximum epochs")->capture_default_str();
  cmd->add_option("--batch-size", o.batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--runs", o.runs, "Independent runs (seed, seed+1, ...)")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Base seed")->capture_default_str();
  cmd->add_option("--jobs", o.jobs, "Runs trained concurrently")->capture_default_str();
  cmd->add_option("--input-size", o.input_size, "Model input size (default: first image width)");
  cmd->add_option("--widths", o.widths, "Channels per conv stage")->delimiter(',')->capture_default_str();
  cmd->add_option("--saliency-source", o.saliency_source, "human, noise, inverted, gaussian or mask")
      ->check(CLI::IsMember({"human", "noise", "inverted", "gaussian", "mask"}))
      ->capture_default_str();
  cmd->add_option("--cam-class", o.cam_class, "Class whose weights build the CAM")
      ->check(CLI::IsMember({"true_label", "predicted"}))
      ->capture_default_str();
}

fs::path manifest_path(const TrainOptions& o) { return o.manifest.empty() ? data_dir() / "manifest.csv" : o.manifest; }

CamClass parse_cam_class(const std::string& s) { return s == "predicted" ? CamClass::predicted : CamClass::true_label; }

BackboneSpec backbone_for(const TrainOptions& o, std::size_t input_size) {
  BackboneSpec spec;
  spec.input_size = input_size;
  spec.stage_widths = o.widths;
  return spec;
}

struct LoadedData {
  Dataset data;
  BackboneSpec spec;
};

LoadedData load_training_data(const TrainOptions& o) {
  const auto source = *parse_saliency_source(o.saliency_source);
  const auto records = load_manifest(manifest_path(o));
  std::size_t size = o.input_size;
  if (size == 0) size = io::load_gray_png(records.at(0).image).width();
  LoadOptions load;
  load.image_size = Size{size, size};
  load.saliency_source = source;
  LoadedData out{load_dataset(records, load), backbone_for(o, size)};
  const ToyCnn probe(out.spec);
  align_saliency(out.data, probe.feature_size());
  if (source != SaliencySourceKind::human && source != SaliencySourceKind::mask)
    substitute_saliency(out.data, source, o.seed);
  return out;
}

auto factory_for(const BackboneSpec& spec) {
  return [spec](std::uint64_t seed) {
    BackboneSpec s = spec;
    s.initialization = "seed:" + std::to_string(seed);
    return ToyCnn(s);
  };
}

TrainConfig train_config(const TrainOptions& o, const CyborgTerm& term) {
  TrainConfig c;
  c.term = term;
  c.lr = o.lr;
  c.lr_step_epochs = o.lr_step;
  c.max_epochs = o.epochs;
  c.batch_size = o.batch_size;
  c.runs = o.runs;
  c.seed = o.seed;
  c.cam_class = parse_cam_class(o.cam_class);
  c.selection = o.selection == "val_auc" ? SelectionMetric::val_auc : SelectionMetric::val_accuracy;
  return c;
}

CyborgTerm resolve_term(const TrainOptions& o) {
  CyborgTerm term;
  if (!o.preset.empty()) {
    const auto tier = parse_tier(o.preset);
    if (!tier) fail(ErrorKind::ConfigInvalid, "unknown preset tier '" + o.preset + "'");
    const auto p = find_preset(*tier, o.architecture_preset, o.domain_preset);
    if (!p) fail(ErrorKind::ConfigInvalid, "no published " + o.preset + " preset for that architecture/domain");
    term = p->term();
  }
  if (!o.measure.empty()) {
    const auto m = parse_measure(o.measure);
    if (!m) fail(ErrorKind::ConfigInvalid, "unknown measure '" + o.measure + "'");
    term.measure.kind = *m;
  }
  if (o.alpha) term.alpha = *o.alpha;
  return term;
}

nlohmann::json summary_json(const RepeatedResult& r, const CyborgTerm& term) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : r.runs)
    runs.push_back({{"best_epoch", run.best_epoch},
                    {"best_metric", run.best_metric},
                    {"test_auc", run.test_auc ? nlohmann::json(*run.test_auc) : nlohmann::json()},
                    {"test_ap", run.test_ap ? nlohmann::json(*run.test_ap) : nlohmann::json()}});
  return {{"alpha", term.alpha},
          {"measure", to_string(term.measure.kind)},
          {"test_auc", {{"mean", r.test_auc.mean}, {"std", r.test_auc.std}}},
          {"test_ap", {{"mean", r.test_ap.mean}, {"std", r.test_ap.std}}},
          {"runs", runs}};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------

struct MakeDataOptions {
  fs::path out;
  SpuriousConfig cfg;
};

int cmd_make_data(const MakeDataOptions& o) {
  const fs::path out = o.out.empty() ? data_dir() : o.out;
  const auto manifest = write_dataset(generate_spurious_dataset(o.cfg), out);
  std::cout << manifest.string() << "\n";
  return 0;
}

struct TrainCommand {
  TrainOptions opts;
  std::string name = "run";
  std::string setting;
  std::string domain = "synthetic";
  fs::path results;
};

int cmd_train(const TrainCommand& c) {
  const auto term = resolve_term(c.opts);
  const auto loaded = load_training_data(c.opts);
  const auto dir = runs_dir() / c.name;
  const auto r = train_repeated(train_config(c.opts, term), loaded.data, factory_for(loaded.spec), dir, c.opts.jobs);
  for (std::size_t i = 0; i < r.runs.size(); ++i)
    plot_curves(r.runs[i], dir / ("run_" + std::to_string(i)) / "curves.png");
  write_text(dir / "summary.json", summary_json(r, term).dump(2) + "\n");
  const std::string setting =
      !c.setting.empty() ? c.setting
                         : term.alpha == 1.0 ? "traditional"
                                             : "cyborg_" + std::string(to_string(term.measure.kind)) + "_" +
                                                   csv::number(term.alpha);
  append_result(c.results.empty() ? runs_dir() / "results.csv" : c.results,
                {c.domain, loaded.spec.architecture, setting, r.test_auc, r.test_ap});
  std::cout << dir.string() << "\n"
            << "test AUC " << r.test_auc.mean << " +- " << r.test_auc.std << ", AP " << r.test_ap.mean << " +- "
            << r.test_ap.std << "\n";
  return 0;
}

struct SearchCommand {
  TrainOptions opts;
  bool full_grid = false;
  std::vector<std::string> measures;
  std::string architecture = "toy_cnn";
  std::string domain = "synthetic";
  fs::path out;
};

int cmd_search(const SearchCommand& c) {
  std::vector<MeasureKind> measures;
  for (const auto& m : c.measures) {
    const auto k = parse_measure(m);
    if (!k) fail(ErrorKind::ConfigInvalid, "unknown measure '" + m + "'");
    measures.push_back(*k);
  }
  if (measures.empty()) measures.assign(kAllMeasures.begin(), kAllMeasures.end());
  const auto loaded = load_training_data(c.opts);
  const auto alphas = alpha_grid(c.full_grid);
  const auto table = grid_search(
      alphas, measures, training_evaluator(train_config(c.opts, {}), loaded.data, factory_for(loaded.spec), c.opts.jobs),
      c.architecture, c.domain);
  const fs::path out = c.out.empty() ? runs_dir() / ("search_" + c.architecture + "_" + c.domain + ".csv") : c.out;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_search_table(out, table);
  const auto best = rank_opt(table);
  std::cout << out.string() << "\n" << "best: " << to_string(best.measure) << " alpha " << best.alpha << "\n";
  return 0;
}

struct RankCommand {
  std::string tier = "gen";
  std::vector<std::string> tables;  // ARCH:DOMAIN:PATH
  fs::path out;
};

int cmd_rank(const RankCommand& c) {
  std::vector<SearchTable> tables;
  for (const auto& spec : c.tables) {
    const auto a = spec.find(':'), b = spec.find(':', a == std::string::npos ? a : a + 1);
    if (a == std::string::npos || b == std::string::npos)
      fail(ErrorKind::ConfigInvalid, "table must be ARCH:DOMAIN:PATH, got '" + spec + "'");
    tables.push_back(read_search_table(spec.substr(b + 1), spec.substr(0, a), spec.substr(a + 1, b - a - 1)));
  }
  Preset p;
  if (c.tier == "opt") {
    if (tables.size() != 1) fail(ErrorKind::ConfigInvalid, "opt ranking takes exactly one table");
    p = rank_opt(tables[0]);
  } else if (c.tier == "arch") {
    for (const auto& t : tables)
      if (t.architecture != tables[0].architecture)
        fail(ErrorKind::ConfigInvalid, "arch ranking takes tables of a single architecture");
    p = rank_arch(tables);
  } else {
    p = rank_gen(tables);
  }
  const auto text = format_preset(p);
  if (!c.out.empty()) write_text(c.out, text);
  std::cout << text;
  return 0;
}

struct EvalCommand {
  fs::path manifest;
  fs::path checkpoint;
  std::string split = "test";
  std::string cam_class = "true_label";
  fs::path out;
};

int cmd_eval(const EvalCommand& c) {
  const auto model = toy_cnn_from_checkpoint(load_checkpoint(c.checkpoint));
  const auto records = load_manifest(c.manifest.empty() ? data_dir() / "manifest.csv" : c.manifest);
  LoadOptions load;
  load.image_size = model.input_size();
  auto data = load_dataset(records, load);
  align_saliency(data, model.feature_size());
  const auto& split = data.split(*parse_split(c.split));
  const fs::path out = c.out.empty() ? c.checkpoint.parent_path() / ("eval_" + c.split) : c.out;
  fs::create_directories(out);
  const auto mode = parse_cam_class(c.cam_class);

  const auto metrics = split_metrics(score_samples(model, split));
  nlohmann::json report{{"split", c.split}, {"samples", split.size()}, {"accuracy", metrics.accuracy}};
  if (metrics.auc) report["auc"] = *metrics.auc;
  if (metrics.ap) report["ap"] = *metrics.ap;
  const auto cam = average_cam(model, split, mode);
  render_cam(cam, out / "average_cam.png");
  io::store_gray_png(out / "average_cam_gray.png", cam.values());
  const bool all_have_maps =
      std::all_of(split.begin(), split.end(), [](const Sample& s) { return s.saliency.has_value(); });
  if (all_have_maps) {
    nlohmann::json agreement;
    for (const auto& [m, v] : cam_human_agreement(model, split, kAllMeasures, mode))
      agreement[std::string(to_string(m))] = v;
    report["cam_human_agreement"] = agreement;
  }
  write_text(out / "metrics.json", report.dump(2) + "\n");
  std::cout << report.dump(2) << "\n";
  return 0;
}

struct ScaleCommand {
  TrainOptions opts;
  std::vector<double> multiples{1.0, 2.0, 3.0};
  SpuriousConfig synthetic;
  fs::path pool;  // manifest of extra samples for fixed corpora
  std::string name = "scale";
};

int cmd_scale(const ScaleCommand& c) {
  const auto term = resolve_term(c.opts);
  Dataset base;
  BackboneSpec spec;
  std::optional<SpuriousGenerator> generator;
  std::vector<Sample> pool;
  if (c.pool.empty()) {
    generator.emplace(c.synthetic);
    base = generate_spurious_dataset(c.synthetic);
    spec = backbone_for(c.opts, c.synthetic.image_size);
  } else {
    auto loaded = load_training_data(c.opts);
    base = std::move(loaded.data);
    spec = loaded.spec;
    LoadOptions load;
    load.image_size = Size{spec.input_size, spec.input_size};
    pool = load_dataset(load_manifest(c.pool), load).train;
  }
  const Size cam = ToyCnn(spec).feature_size();
  align_saliency(base, cam);
  const auto dir = runs_dir() / c.name;
  const auto reference =
      train_repeated(train_config(c.opts, term), base, factory_for(spec), dir / "cyborg", c.opts.jobs);

  std::vector<ScalingPoint> points;
  std::vector<csv::Row> rows;
  for (double m : c.multiples) {
    // A fresh source per multiple: larger splits extend smaller ones.
    std::unique_ptr<SampleSource> source;
    if (generator)
      source = std::make_unique<GeneratorSource>(*generator, c.synthetic.n_train_per_class);
    else
      source = std::make_unique<PoolSource>(pool);
    const auto scaled = scale_dataset(base, m, *source);
    const auto r = train_repeated(train_config(c.opts, {1.0, {}}), scaled, factory_for(spec),
                                  dir / ("traditional_x" + csv::number(m)), c.opts.jobs);
    points.push_back({m, r.test_auc.mean});
    rows.push_back({csv::number(m), std::to_string(scaled.train.size()), csv::number(r.test_auc.mean),
                    csv::number(r.test_auc.std)});
  }
  csv::write(dir / "scaling.csv", {"multiple", "train_size", "mean_auc", "std_auc"}, rows);
  const auto crossover = scaling_crossover(reference.test_auc.mean, points);
  nlohmann::json summary{{"cyborg_auc", reference.test_auc.mean},
                         {"crossover", crossover ? nlohmann::json(*crossover) : nlohmann::json("not reached")}};
  write_text(dir / "crossover.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

struct HeatmapCommand {
  fs::path fixations;
  fs::path out;
  std::size_t width = 0, height = 0;
  std::optional<double> sigma_px;
  double viewing_distance_mm = 0, pixel_pitch_mm = 0;
  double min_duration_ms = EyetrackConfig{}.min_duration_ms;
};

int cmd_heatmap(const HeatmapCommand& c) {
  EyetrackConfig cfg;
  cfg.min_duration_ms = c.min_duration_ms;
  if (c.sigma_px)
    cfg.sigma_px = *c.sigma_px;
  else if (c.viewing_distance_mm > 0 && c.pixel_pitch_mm > 0)
    cfg.sigma_px = visual_angle_to_pixels(1.0, c.viewing_distance_mm, c.pixel_pitch_mm);
  else
    fail(ErrorKind::ConfigInvalid, "give --sigma-px or both --viewing-distance-mm and --pixel-pitch-mm");
  std::vector<fs::path> logs;
  if (fs::is_directory(c.fixations)) {
    for (const auto& e : fs::directory_iterator(c.fixations))
      if (e.path().extension() == ".csv") logs.push_back(e.path());
  } else {
    logs.push_back(c.fixations);
  }
  std::sort(logs.begin(), logs.end());
  fs::create_directories(c.out);
  std::size_t written = 0;
  for (const auto& log : logs) {
    try {
      const auto map = fixations_to_heatmap(read_fixation_log(log), {c.width, c.height}, cfg);
      io::store_gray_png(c.out / (log.stem().string() + ".png"), map.values());
      ++written;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoSurvivingFixations) throw;
      std::cerr << "warning: dropping " << log.filename().string() << ": " << e.what() << "\n";
    }
  }
  std::cout << written << " heatmaps written to " << c.out.string() << "\n";
  return 0;
}

struct ServeCommand {
  annotation::ServiceConfig cfg;
  std::string host = "127.0.0.1";
  int port = 8080;
};

int cmd_serve(ServeCommand c) {
  if (c.cfg.store_dir.empty()) c.cfg.store_dir = data_dir() / "annotations";
  annotation::Service service(c.cfg);
  httplib::Server server;
  service.bind(server);
  std::cout << "listening on http://" << c.host << ":" << c.port << "\n" << std::flush;
  if (!server.listen(c.host, c.port)) fail(ErrorKind::Io, "cannot listen on " + c.host + ":" + std::to_string(c.port));
  return 0;
}

void add_spurious_options(CLI::App* cmd, SpuriousConfig& cfg) {
  cmd->add_option("--image-size", cfg.image_size, "Image side in pixels")->capture_default_str();
  cmd->add_option("--n-train", cfg.n_train_per_class, "Training samples per class")->capture_default_str();
  cmd->add_option("--n-val", cfg.n_val_per_class, "Validation samples per class")->capture_default_str();
  cmd->add_option("--n-test", cfg.n_test_per_class, "Test samples per class")->capture_default_str();
  cmd->add_option("--rho-train", cfg.rho_train, "Marker/label correlation in train and val")->capture_default_str();
  cmd->add_option("--rho-test", cfg.rho_test, "Marker/label correlation in test")->capture_default_str();
  cmd->add_option("--signal", cfg.signal, "Stripe amplitude")->capture_default_str();
  cmd->add_option("--noise", cfg.noise, "Pixel noise standard deviation")->capture_default_str();
  cmd->add_option("--data-seed", cfg.seed, "Generator seed")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Saliency-guided classifier training"};
  app.require_subcommand(1);

  MakeDataOptions make;
  auto* make_cmd = app.add_subcommand("make-data", "Generate the synthetic spurious-correlation dataset");
  make_cmd->add_option("--out", make.out, "Output directory (default: $CYBORG_DATA_DIR)");
  add_spurious_options(make_cmd, make.cfg);
  make_cmd->add_option("--seed", make.cfg.seed, "Generator seed");

  TrainCommand train;
  auto* train_cmd = app.add_subcommand("train", "Train repeated runs and append a results row");
  add_model_options(train_cmd, train.opts);
  train_cmd->add_option("--preset", train.opts.preset, "Published preset tier: gen, arch or opt")
      ->check(CLI::IsMember({"gen", "arch", "opt"}));
  train_cmd->add_option("--preset-architecture", train.opts.architecture_preset, "densenet, resnet or inception");
  train_cmd->add_option("--preset-domain", train.opts.domain_preset, "face, iris or cxr");
  train_cmd->add_option("--alpha", train.opts.alpha, "Classification weight; 1.0 is traditional training");
  train_cmd->add_option("--measure", train.opts.measure, "L1, MSE, SSIM, SSIM+L1 or SSIM+MSE");
  train_cmd->add_option("--selection", train.opts.selection, "Best-epoch metric")
      ->check(CLI::IsMember({"val_accuracy", "val_auc"}))
      ->capture_default_str();
  train_cmd->add_option("--name", train.name, "Run directory name under $CYBORG_RUNS_DIR")->capture_default_str();
  train_cmd->add_option("--setting", train.setting, "Label for the results row");
  train_cmd->add_option("--domain", train.domain, "Domain label for the results row")->capture_default_str();
  train_cmd->add_option("--results", train.results, "Results CSV (default: $CYBORG_RUNS_DIR/results.csv)");

  SearchCommand search;
  auto* search_cmd = app.add_subcommand("search", "Alpha x measure grid search on validation AUC");
  add_model_options(search_cmd, search.opts);
  search_cmd->add_flag("--full-grid", search.full_grid, "Alpha 0.05..1.00 instead of 0.25/0.5/0.75/1.0");
  search_cmd->add_option("--measures", search.measures, "Subset of measures")->delimiter(',');
  search_cmd->add_option("--architecture", search.architecture, "Architecture label")->capture_default_str();
  search_cmd->add_option("--domain", search.domain, "Domain label")->capture_default_str();
  search_cmd->add_option("--out", search.out, "Search table CSV");

  RankCommand rank;
  auto* rank_cmd = app.add_subcommand("rank", "Derive a preset from search tables by rank sums");
  rank_cmd->add_option("--tier", rank.tier, "opt, arch or gen")
      ->check(CLI::IsMember({"opt", "arch", "gen"}))
      ->capture_default_str();
  rank_cmd->add_option("tables", rank.tables, "ARCH:DOMAIN:PATH per search table")->required();
  rank_cmd->add_option("--out", rank.out, "Write the preset file here");

  EvalCommand eval;
  auto* eval_cmd = app.add_subcommand("eval", "Metrics, average CAM and CAM/human agreement for a checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--manifest", eval.manifest, "Dataset manifest (default: $CYBORG_DATA_DIR/manifest.csv)");
  eval_cmd->add_option("--split", eval.split, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  eval_cmd->add_option("--cam-class", eval.cam_class, "true_label or predicted")
      ->check(CLI::IsMember({"true_label", "predicted"}))
      ->capture_default_str();
  eval_cmd->add_option("--out", eval.out, "Output directory");

  ScaleCommand scale;
  auto* scale_cmd = app.add_subcommand("scale", "Traditional training on enlarged splits vs CYBORG on the original");
  add_model_options(scale_cmd, scale.opts);
  scale_cmd->add_option("--preset", scale.opts.preset, "Preset tier for the CYBORG reference")
      ->check(CLI::IsMember({"gen", "arch", "opt"}));
  scale_cmd->add_option("--alpha", scale.opts.alpha, "CYBORG reference alpha");
  scale_cmd->add_option("--measure", scale.opts.measure, "CYBORG reference measure");
  scale_cmd->add_option("--multiples", scale.multiples, "Training-set multiples")->delimiter(',')->capture_default_str();
  scale_cmd->add_option("--pool", scale.pool, "Manifest of extra samples (fixed corpus); synthetic when absent");
  scale_cmd->add_option("--name", scale.name, "Output directory name")->capture_default_str();
  add_spurious_options(scale_cmd, scale.synthetic);

  HeatmapCommand heat;
  auto* heat_cmd = app.add_subcommand("heatmap", "Fixation logs to duration-weighted heatmaps");
  heat_cmd->add_option("--fixations", heat.fixations, "Fixation CSV or directory of them")->required();
  heat_cmd->add_option("--out", heat.out, "Output directory")->required();
  heat_cmd->add_option("--width", heat.width, "Image width")->required();
  heat_cmd->add_option("--height", heat.height, "Image height")->required();
  heat_cmd->add_option("--sigma-px", heat.sigma_px, "Gaussian sigma in pixels");
  heat_cmd->add_option("--viewing-distance-mm", heat.viewing_distance_mm, "Eye-to-screen distance");
  heat_cmd->add_option("--pixel-pitch-mm", heat.pixel_pitch_mm, "Physical pixel size");
  heat_cmd->add_option("--min-duration-ms", heat.min_duration_ms, "Shorter fixations are dropped")
      ->capture_default_str();

  ServeCommand serve;
  auto* serve_cmd = app.add_subcommand("annotate-serve", "Serve the annotation HTTP API");
  serve_cmd->add_option("--tasks", serve.cfg.task_list, "Task list CSV image_id,image,label[,split]")->required();
  serve_cmd->add_option("--store", serve.cfg.store_dir, "Annotation store (default: $CYBORG_DATA_DIR/annotations)");
  serve_cmd->add_option("--min-regions", serve.cfg.min_regions, "Minimum painted regions")->capture_default_str();
  serve_cmd->add_option("--host", serve.host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--port", serve.port, "Port")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (make_cmd->parsed()) return cmd_make_data(make);
    if (train_cmd->parsed()) return cmd_train(train);
    if (search_cmd->parsed()) return cmd_search(search);
    if (rank_cmd->parsed()) return cmd_rank(rank);
    if (eval_cmd->parsed()) return cmd_eval(eval);
    if (scale_cmd->parsed()) return cmd_scale(scale);
    if (heat_cmd->parsed()) return cmd_heatmap(heat);
    if (serve_cmd->parsed()) return cmd_serve(serve);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::MissingSaliency ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

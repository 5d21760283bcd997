#pragma once

// HTTP service that hands out annotation tasks, accepts painted masks with a
// typical/atypical/unsure decision, keeps an append-only log, and exports
// averaged masks of correct decisions as a training manifest.
//
//   GET  /task              least-annotated task
//   GET  /image/<id>        task image (PNG)
//   POST /annotation        {image_id, decision, mask (base64 PNG), submission_id?}
//   GET  /export/manifest   manifest CSV; also written under <store>/export/

#include <boost/beast/core/detail/base64.hpp>
#include <chrono>
#include <ctime>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "cyborg/csv.hpp"
#include "cyborg/image_io.hpp"
#include "cyborg/saliency_ingest.hpp"
#include "httplib.h"
#include "json.hpp"

namespace cyborg::annotation {

namespace base64 {

inline std::string encode(const std::vector<std::uint8_t>& bytes) {
  std::string out(boost::beast::detail::base64::encoded_size(bytes.size()), '\0');
  out.resize(boost::beast::detail::base64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

/// nullopt unless the whole input is valid base64.
inline std::optional<std::vector<std::uint8_t>> decode(std::string_view text) {
  if (text.size() % 4 != 0) return std::nullopt;
  for (int pad = 0; pad < 2 && !text.empty() && text.back() == '='; ++pad) text.remove_suffix(1);
  std::vector<std::uint8_t> out(boost::beast::detail::base64::decoded_size(text.size()) + 3);
  const auto [written, read] = boost::beast::detail::base64::decode(out.data(), text.data(), text.size());
  if (read != text.size()) return std::nullopt;
  out.resize(written);
  return out;
}

}  // namespace base64

enum class Decision { typical, atypical, unsure };

inline std::optional<Decision> parse_decision(std::string_view s) {
  if (s == "typical") return Decision::typical;
  if (s == "atypical") return Decision::atypical;
  if (s == "unsure") return Decision::unsure;
  return std::nullopt;
}

constexpr std::string_view to_string(Decision d) {
  return d == Decision::typical ? "typical" : d == Decision::atypical ? "atypical" : "unsure";
}

/// Unsure is never correct.
inline bool is_correct(Decision d, Label truth) {
  return (d == Decision::typical && truth == Label::typical) || (d == Decision::atypical && truth == Label::atypical);
}

/// Connected foreground regions under 8-connectivity.
inline std::size_t count_regions(const Map& mask) {
  const std::size_t w = mask.width(), h = mask.height();
  std::vector<char> seen(mask.count(), 0);
  std::size_t regions = 0;
  std::deque<std::size_t> queue;
  for (std::size_t start = 0; start < mask.count(); ++start) {
    if (mask[start] < 0.5 || seen[start]) continue;
    ++regions;
    seen[start] = 1;
    queue.push_back(start);
    while (!queue.empty()) {
      const std::size_t i = queue.front();
      queue.pop_front();
      const auto x = static_cast<std::ptrdiff_t>(i % w), y = static_cast<std::ptrdiff_t>(i / w);
      for (std::ptrdiff_t dy = -1; dy <= 1; ++dy)
        for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
          const auto nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= static_cast<std::ptrdiff_t>(w) || ny >= static_cast<std::ptrdiff_t>(h)) continue;
          const auto j = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
          if (mask[j] >= 0.5 && !seen[j]) {
            seen[j] = 1;
            queue.push_back(j);
          }
        }
    }
  }
  return regions;
}

struct Task {
  std::string image_id;
  std::filesystem::path image;
  Label label = Label::typical;
  Split split = Split::train;
};

/// Task list CSV `image_id,image,label[,split]`; paths relative to the list.
inline std::vector<Task> load_tasks(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) fail(ErrorKind::MissingFile, "task list not found: " + path.string());
  const auto rows = csv::read(path);
  const csv::Row base{"image_id", "image", "label"}, with_split{"image_id", "image", "label", "split"};
  if (rows.empty() || (rows[0] != base && rows[0] != with_split))
    fail(ErrorKind::SchemaError, path.string() + ": expected header image_id,image,label[,split]");
  std::vector<Task> tasks;
  std::set<std::string> ids;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto where = path.string() + " row " + std::to_string(i);
    if (r.size() != rows[0].size()) fail(ErrorKind::SchemaError, where + ": wrong field count");
    Task t{r[0], (path.parent_path() / r[1]).lexically_normal(), Label::typical, Split::train};
    const auto label = parse_label(r[2]);
    if (t.image_id.empty() || !label) fail(ErrorKind::SchemaError, where + ": bad image_id or label");
    t.label = *label;
    if (r.size() == 4) {
      const auto split = parse_split(r[3]);
      if (!split) fail(ErrorKind::SchemaError, where + ": bad split");
      t.split = *split;
    }
    if (!ids.insert(t.image_id).second) fail(ErrorKind::SchemaError, where + ": duplicate image_id");
    if (!std::filesystem::is_regular_file(t.image)) fail(ErrorKind::DanglingPath, where + ": missing image");
    tasks.push_back(std::move(t));
  }
  if (tasks.empty()) fail(ErrorKind::EmptyInput, path.string() + ": no tasks");
  return tasks;
}

struct ServiceConfig {
  std::filesystem::path task_list;
  std::filesystem::path store_dir;
  std::size_t min_regions = 5;
};

struct Reply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

class Service {
 public:
  explicit Service(ServiceConfig cfg) : cfg_(std::move(cfg)), tasks_(load_tasks(cfg_.task_list)) {
    if (cfg_.min_regions < 1) fail(ErrorKind::ConfigInvalid, "min_regions must be at least 1");
    std::filesystem::create_directories(cfg_.store_dir / "masks");
    for (std::size_t i = 0; i < tasks_.size(); ++i) {
      index_[tasks_[i].image_id] = i;
      sizes_.push_back(io::load_gray_png(tasks_[i].image).size());
    }
    replay_log();
  }

  const ServiceConfig& config() const { return cfg_; }
  std::filesystem::path log_path() const { return cfg_.store_dir / "annotations.jsonl"; }

  Reply next_task() const {
    std::lock_guard lock(mutex_);
    std::size_t best = 0;
    for (std::size_t i = 1; i < tasks_.size(); ++i)
      if (count_for(tasks_[i].image_id) < count_for(tasks_[best].image_id)) best = i;
    const auto& t = tasks_[best];
    nlohmann::json j{{"image_id", t.image_id},
                     {"image_url", "/image/" + t.image_id},
                     {"width", sizes_[best].width},
                     {"height", sizes_[best].height},
                     {"min_regions", cfg_.min_regions},
                     {"annotations", count_for(t.image_id)}};
    return {200, "application/json", j.dump()};
  }

  Reply image(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) return error(404, "unknown image_id '" + id + "'");
    const auto bytes = io::read_bytes(tasks_[it->second].image);
    return {200, "image/png", std::string(bytes.begin(), bytes.end())};
  }

  Reply submit(const std::string& body) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      return error(400, "body is not valid JSON");
    }
    if (!j.is_object()) return error(400, "body must be a JSON object");
    for (const char* key : {"image_id", "decision", "mask"})
      if (!j.contains(key) || !j[key].is_string()) return error(400, std::string("missing string field '") + key + "'");
    if (j.contains("submission_id") && !j["submission_id"].is_string())
      return error(400, "submission_id must be a string");
    const auto image_id = j["image_id"].get<std::string>();
    const auto it = index_.find(image_id);
    if (it == index_.end()) return error(404, "unknown image_id '" + image_id + "'");
    const auto decision = parse_decision(j["decision"].get<std::string>());
    if (!decision) return error(400, "decision must be typical, atypical or unsure");
    const auto bytes = base64::decode(j["mask"].get<std::string>());
    if (!bytes) return error(400, "mask is not valid base64");
    io::RawImage raw;
    try {
      raw = io::decode_png(*bytes);
    } catch (const Error&) {
      return error(400, "mask is not a PNG");
    }
    if (raw.channels != 1) return error(400, "mask must be single-channel");
    const Size expected = sizes_[it->second];
    if (raw.width != expected.width || raw.height != expected.height)
      return error(400, "mask is " + std::to_string(raw.width) + "x" + std::to_string(raw.height) + ", image is " +
                            to_string(expected));
    for (auto v : raw.pixels)
      if (v != 0 && v != 255) return error(400, "mask must be binary (0 or 255)");
    const Map mask = io::to_gray_map(raw);
    const std::size_t regions = count_regions(mask);
    if (regions < cfg_.min_regions)
      return error(400, "mask has " + std::to_string(regions) + " regions; at least " +
                            std::to_string(cfg_.min_regions) + " required");

    std::lock_guard lock(mutex_);
    std::string sid = j.value("submission_id", std::string());
    if (!sid.empty() && submission_ids_.count(sid)) return error(409, "duplicate submission_id '" + sid + "'");
    const std::string fingerprint = image_id + "\n" + std::string(to_string(*decision)) + "\n" +
                                    std::string(raw.pixels.begin(), raw.pixels.end());
    if (fingerprints_.count(fingerprint)) return error(409, "identical annotation already stored");
    const std::size_t seq = records_.size();
    if (sid.empty()) sid = image_id + "-" + std::to_string(seq);
    const auto mask_rel = std::filesystem::path("masks") / (std::to_string(seq) + ".png");
    io::write_png(cfg_.store_dir / mask_rel, raw);
    Record rec{sid, image_id, *decision, mask_rel.generic_string(), regions, utc_timestamp()};
    append_log(rec);
    remember(rec, fingerprint);
    nlohmann::json out{{"submission_id", sid},
                       {"regions", regions},
                       {"correct", is_correct(*decision, tasks_[it->second].label)}};
    return {201, "application/json", out.dump()};
  }

  /// Averages masks of correct decisions per image and writes PNGs plus a
  /// manifest under <store>/export. Training tasks without a correct
  /// annotation are left out so the manifest passes strict validation.
  Reply export_manifest() {
    std::lock_guard lock(mutex_);
    const auto dir = cfg_.store_dir / "export";
    std::filesystem::create_directories(dir / "saliency");
    std::map<std::string, std::vector<Map>> masks;
    for (const auto& r : records_)
      if (is_correct(r.decision, tasks_[index_.at(r.image_id)].label))
        masks[r.image_id].push_back(io::load_gray_png(cfg_.store_dir / r.mask_file));
    std::vector<ManifestRecord> rows;
    for (const auto& t : tasks_) {
      ManifestRecord rec{t.image, t.label, std::nullopt, t.split};
      if (auto m = masks.find(t.image_id); m != masks.end()) {
        rec.saliency = dir / "saliency" / (t.image_id + ".png");
        io::store_gray_png(*rec.saliency, average_annotations(m->second).values());
      } else if (t.split == Split::train) {
        continue;
      }
      rows.push_back(std::move(rec));
    }
    write_manifest(dir / "manifest.csv", rows);
    return {200, "text/csv", csv::read_text(dir / "manifest.csv")};
  }

  void bind(httplib::Server& server) {
    auto send = [](httplib::Response& res, const Reply& r) {
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };
    server.Get("/task", [this, send](const httplib::Request&, httplib::Response& res) { send(res, next_task()); });
    server.Get(R"(/image/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, image(req.matches[1]));
    });
    server.Post("/annotation", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, submit(req.body));
    });
    server.Get("/export/manifest", [this, send](const httplib::Request&, httplib::Response& res) {
      try {
        send(res, export_manifest());
      } catch (const Error& e) {
        send(res, error(500, e.what()));
      }
    });
  }

 private:
  struct Record {
    std::string submission_id;
    std::string image_id;
    Decision decision;
    std::string mask_file;  // relative to the store
    std::size_t regions;
    std::string timestamp;
  };

  static Reply error(int status, const std::string& message) {
    return {status, "application/json", nlohmann::json{{"error", message}}.dump()};
  }

  std::size_t count_for(const std::string& id) const {
    const auto it = counts_.find(id);
    return it == counts_.end() ? 0 : it->second;
  }

  void remember(const Record& rec, const std::string& fingerprint) {
    submission_ids_.insert(rec.submission_id);
    fingerprints_.insert(fingerprint);
    ++counts_[rec.image_id];
    records_.push_back(rec);
  }

  void append_log(const Record& r) {
    std::ofstream out(log_path(), std::ios::app | std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot append to " + log_path().string());
    out << nlohmann::json{{"submission_id", r.submission_id}, {"image_id", r.image_id},
                          {"decision", to_string(r.decision)},  {"mask", r.mask_file},
                          {"regions", r.regions},               {"timestamp", r.timestamp}}
               .dump()
        << "\n";
  }

  void replay_log() {
    std::ifstream in(log_path());
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      Record r{j.at("submission_id"), j.at("image_id"), *parse_decision(j.at("decision").get<std::string>()),
               j.at("mask"), j.at("regions"), j.at("timestamp")};
      if (!index_.count(r.image_id)) fail(ErrorKind::SchemaError, "log references unknown image " + r.image_id);
      const auto raw = io::read_png(cfg_.store_dir / r.mask_file);
      remember(r, r.image_id + "\n" + std::string(to_string(r.decision)) + "\n" +
                      std::string(raw.pixels.begin(), raw.pixels.end()));
    }
  }

  ServiceConfig cfg_;
  std::vector<Task> tasks_;
  std::map<std::string, std::size_t> index_;
  std::vector<Size> sizes_;
  mutable std::mutex mutex_;
  std::vector<Record> records_;
  std::set<std::string> submission_ids_;
  std::set<std::string> fingerprints_;
  std::map<std::string, std::size_t> counts_;
};

}  // namespace cyborg::annotation

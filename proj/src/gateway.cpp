#include "palmscan/gateway.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>
#include <tuple>
#include <variant>

namespace palmscan::gateway {

namespace {

Json parse_line(const std::string& line) {
  try {
    Json j = Json::parse(line);
    if (!j.is_object()) throw ProtocolError("backend message is not a JSON object", line);
    return j;
  } catch (const Json::parse_error&) {
    throw ProtocolError("malformed backend message", line);
  }
}

// Validates op/id and returns the declared error message, if any.
std::optional<std::string> check_envelope(const Json& j, const std::string& line, std::size_t id) {
  const auto op = j.contains("op") && j["op"].is_string() ? j["op"].get<std::string>() : std::string();
  if (op != "result" && op != "error") throw ProtocolError("unexpected op '" + op + "'", line);
  if (!j.contains("id") || !j["id"].is_number_unsigned() || j["id"].get<std::size_t>() != id) {
    throw ProtocolError("reply id does not echo request id " + std::to_string(id), line);
  }
  if (op == "error") {
    const auto& m = j.value("message", Json());
    return m.is_string() ? m.get<std::string>() : std::string("backend error");
  }
  return std::nullopt;
}

Json box_json(const geo::PixelBox& b) { return Json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

bool detection_order(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::tie(a.box, a.label) < std::tie(b.box, b.label);
}

using Outcome = std::variant<std::monostate, std::string /*failure*/, DetectReply, ClassifyReply>;

// One backend conversation with handshake and restart-on-failure.
class Session {
 public:
  Session(const ChannelFactory& factory, Task task) : factory_(factory), task_(task) {}

  // Returns the reply line, or nullopt with `failure` filled when the
  // channel died. Throws BackendError when the backend never came up.
  std::optional<std::string> call(const std::string& line, std::string& failure) {
    if (!ensure(failure)) return std::nullopt;
    try {
      return channel_->exchange(line);
    } catch (const ChannelFailure& e) {
      channel_.reset();
      failure = e.what();
      return std::nullopt;
    }
  }

 private:
  bool ensure(std::string& failure) {
    if (channel_) return true;
    try {
      channel_ = factory_();
      if (!channel_) throw BackendError("backend factory produced no channel");
      parse_hello_reply(channel_->exchange(hello_message(task_)));
      ever_started_ = true;
      return true;
    } catch (const ChannelFailure& e) {
      channel_.reset();
      if (!ever_started_) throw BackendError(std::string("backend failed to start: ") + e.what());
      failure = std::string("backend restart failed: ") + e.what();
      return false;
    }
  }

  const ChannelFactory& factory_;
  Task task_;
  std::unique_ptr<BackendChannel> channel_;
  bool ever_started_ = false;
};

template <typename Fn>
std::vector<Outcome> fan_out(std::size_t count, std::size_t workers, const ChannelFactory& factory, Task task,
                             Fn&& per_request) {
  std::vector<Outcome> outcomes(count);
  if (count == 0) return outcomes;
  workers = std::clamp<std::size_t>(workers, 1, count);
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::size_t err_index = count;
  std::exception_ptr err;

  auto worker = [&]() {
    std::size_t i = count;
    try {
      Session session(factory, task);
      while ((i = next.fetch_add(1)) < count) {
        outcomes[i] = per_request(session, i);
      }
    } catch (...) {
      std::lock_guard lock(err_mu);
      if (i <= err_index) {
        err_index = i;
        err = std::current_exception();
      }
      next.store(count);
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);
  return outcomes;
}

}  // namespace

std::string_view to_string(Task t) noexcept { return t == Task::detect ? "detect" : "classify"; }

DetectionRequest DetectionRequest::aerial(std::string image_ref, const geo::TileId& tile) {
  DetectionRequest r;
  r.image_ref = std::move(image_ref);
  r.kind = ImageKind::aerial_tile;
  r.tile = tile;
  return r;
}

DetectionRequest DetectionRequest::street_view(std::string image_ref, const StreetImageRequest& req) {
  DetectionRequest r;
  r.image_ref = std::move(image_ref);
  r.kind = ImageKind::street_view;
  r.street = req;
  return r;
}

int DetectionRequest::image_width() const noexcept {
  return kind == ImageKind::aerial_tile ? kAerialTileSize : (street ? street->width : kStreetImageSize);
}

int DetectionRequest::image_height() const noexcept {
  return kind == ImageKind::aerial_tile ? kAerialTileSize : (street ? street->height : kStreetImageSize);
}

// ---------------------------------------------------------------------------

std::string hello_message(Task task) {
  Json j;
  j["op"] = "hello";
  j["version"] = kProtocolVersion;
  j["task"] = to_string(task);
  return j.dump();
}

std::string request_message(Task task, std::size_t id, const std::string& image) {
  Json j;
  j["op"] = to_string(task);
  j["id"] = id;
  j["image"] = image;
  return j.dump();
}

std::string hello_reply(const std::vector<std::string>& labels) {
  Json j;
  j["op"] = "hello";
  j["version"] = kProtocolVersion;
  j["labels"] = labels;
  return j.dump();
}

std::string detections_reply(std::size_t id, const std::vector<Detection>& dets) {
  Json arr = Json::array();
  for (const auto& d : dets) {
    Json item;
    item["box"] = box_json(d.box);
    item["score"] = d.score;
    item["label"] = d.label;
    arr.push_back(item);
  }
  Json j;
  j["op"] = "result";
  j["id"] = id;
  j["detections"] = arr;
  return j.dump();
}

std::string probs_reply(std::size_t id, const ClassificationResult& c) {
  Json j;
  j["op"] = "result";
  j["id"] = id;
  j["probs"] = to_json(c);
  return j.dump();
}

std::string error_reply(std::size_t id, const std::string& message) {
  Json j;
  j["op"] = "error";
  j["id"] = id;
  j["message"] = message;
  return j.dump();
}

std::vector<std::string> parse_hello_reply(const std::string& line) {
  const Json j = parse_line(line);
  if (j.value("op", std::string()) != "hello") throw ProtocolError("expected hello reply", line);
  if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != kProtocolVersion) {
    throw ProtocolError("unsupported protocol version", line);
  }
  if (!j.contains("labels") || !j["labels"].is_array()) throw ProtocolError("hello reply lacks labels", line);
  std::vector<std::string> labels;
  for (const auto& l : j["labels"]) {
    if (!l.is_string()) throw ProtocolError("non-string label in hello reply", line);
    labels.push_back(l.get<std::string>());
  }
  return labels;
}

DetectReply parse_detect_reply(const std::string& line, std::size_t id, const DetectionRequest& req) {
  const Json j = parse_line(line);
  DetectReply out;
  if (auto err = check_envelope(j, line, id)) {
    out.error = std::move(err);
    return out;
  }
  if (!j.contains("detections") || !j["detections"].is_array()) {
    throw ProtocolError("result lacks a detections array", line);
  }
  for (const auto& d : j["detections"]) {
    if (!d.is_object() || !d.contains("box") || !d["box"].is_array() || d["box"].size() != 4) {
      throw ProtocolError("detection needs a 4-element box", line);
    }
    for (const auto& v : d["box"]) {
      if (!v.is_number()) throw ProtocolError("non-numeric box coordinate", line);
    }
    if (!d.contains("score") || !d["score"].is_number()) throw ProtocolError("detection lacks a score", line);
    if (!d.contains("label") || !d["label"].is_string()) throw ProtocolError("detection lacks a label", line);
    Detection det;
    const auto& b = d["box"];
    det.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    det.score = d["score"].get<double>();
    det.label = d["label"].get<std::string>();
    det.request = req;
    if (!(det.score >= 0.0 && det.score <= 1.0)) throw ProtocolError("score outside [0,1]", line);
    if (!det.box.valid_within(req.image_width(), req.image_height())) {
      throw ProtocolError("box outside source image", line);
    }
    out.detections.push_back(std::move(det));
  }
  return out;
}

ClassifyReply parse_classify_reply(const std::string& line, std::size_t id) {
  const Json j = parse_line(line);
  ClassifyReply out;
  if (auto err = check_envelope(j, line, id)) {
    out.error = std::move(err);
    return out;
  }
  if (!j.contains("probs")) throw ProtocolError("result lacks probs", line);
  try {
    out.result = classification_from_json(j["probs"]);
  } catch (const DomainError& e) {
    throw ProtocolError(e.what(), line);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string replay_handle(const Json& manifest, const std::string& line) {
  Json req;
  try {
    req = Json::parse(line);
  } catch (const Json::parse_error&) {
    return error_reply(0, "malformed request");
  }
  const auto op = req.value("op", std::string());
  if (op == "hello") {
    return hello_reply(manifest.value("labels", std::vector<std::string>{}));
  }
  const auto id = req.value("id", std::size_t{0});
  const auto image = req.value("image", std::string());
  const auto& images = manifest.at("images");
  if (!images.contains(image)) return error_reply(id, "unknown image " + image);
  const auto& entry = images.at(image);
  if (entry.contains("error")) return error_reply(id, entry["error"].get<std::string>());
  Json j;
  j["op"] = "result";
  j["id"] = id;
  if (op == "detect" && entry.contains("detections")) {
    j["detections"] = entry["detections"];
  } else if (op == "classify" && entry.contains("probs")) {
    j["probs"] = entry["probs"];
  } else {
    return error_reply(id, "no " + op + " answer for " + image);
  }
  return j.dump();
}

ChannelFactory replay_factory(Json manifest) {
  auto shared = std::make_shared<const Json>(std::move(manifest));
  return [shared]() -> std::unique_ptr<BackendChannel> {
    return std::make_unique<InProcessChannel>([shared](const std::string& line) { return replay_handle(*shared, line); });
  };
}

// ---------------------------------------------------------------------------

DetectionBatch run_detection_batch(const std::vector<DetectionRequest>& requests, const ChannelFactory& backend,
                                   const BatchOptions& opts) {
  if (!(opts.score_threshold >= 0.0 && opts.score_threshold <= 1.0)) {
    throw DomainError("score threshold must be in [0,1]");
  }
  auto outcomes = fan_out(requests.size(), opts.workers, backend, Task::detect, [&](Session& s, std::size_t i) -> Outcome {
    std::string failure;
    auto reply = s.call(request_message(Task::detect, i, requests[i].image_ref), failure);
    if (!reply) return failure;
    return parse_detect_reply(*reply, i, requests[i]);
  });
  DetectionBatch out;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (auto* f = std::get_if<std::string>(&outcomes[i])) {
      out.failures.push_back({i, *f});
      continue;
    }
    auto& reply = std::get<DetectReply>(outcomes[i]);
    if (reply.error) {
      out.failures.push_back({i, *reply.error});
      continue;
    }
    std::vector<Detection> kept;
    for (auto& d : reply.detections) {
      if (d.score >= opts.score_threshold) kept.push_back(std::move(d));
    }
    std::sort(kept.begin(), kept.end(), detection_order);
    std::move(kept.begin(), kept.end(), std::back_inserter(out.detections));
  }
  return out;
}

ClassificationBatch run_classification_batch(const std::vector<std::string>& image_refs, const ChannelFactory& backend,
                                             std::size_t workers) {
  auto outcomes = fan_out(image_refs.size(), workers, backend, Task::classify, [&](Session& s, std::size_t i) -> Outcome {
    std::string failure;
    auto reply = s.call(request_message(Task::classify, i, image_refs[i]), failure);
    if (!reply) return failure;
    return parse_classify_reply(*reply, i);
  });
  ClassificationBatch out;
  out.results.resize(image_refs.size());
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (auto* f = std::get_if<std::string>(&outcomes[i])) {
      out.failures.push_back({i, *f});
      continue;
    }
    auto& reply = std::get<ClassifyReply>(outcomes[i]);
    if (reply.error) {
      out.failures.push_back({i, *reply.error});
      continue;
    }
    out.results[i] = reply.result;
  }
  return out;
}

// ---------------------------------------------------------------------------

void write_batch_requests(const std::filesystem::path& dir, Task task, const std::vector<std::string>& image_refs) {
  std::string text = hello_message(task) + "\n";
  for (std::size_t i = 0; i < image_refs.size(); ++i) text += request_message(task, i, image_refs[i]) + "\n";
  io::write_file_atomic(dir / "requests.jsonl", text);
}

namespace {

// Hello line first, then one result line per id in any order.
std::map<std::size_t, std::string> read_result_lines(const std::filesystem::path& dir) {
  const std::string text = io::read_file(dir / "results.jsonl");
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty()) lines.push_back(std::move(line));
  }
  if (lines.empty()) throw ProtocolError("results.jsonl is empty", "");
  parse_hello_reply(lines.front());
  std::map<std::size_t, std::string> by_id;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const Json j = parse_line(lines[i]);
    if (!j.contains("id") || !j["id"].is_number_unsigned()) throw ProtocolError("result without id", lines[i]);
    if (!by_id.emplace(j["id"].get<std::size_t>(), lines[i]).second) {
      throw ProtocolError("duplicate result id", lines[i]);
    }
  }
  return by_id;
}

}  // namespace

DetectionBatch read_detection_results(const std::filesystem::path& dir, const std::vector<DetectionRequest>& requests,
                                      double score_threshold) {
  const auto by_id = read_result_lines(dir);
  DetectionBatch out;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    auto it = by_id.find(i);
    if (it == by_id.end()) {
      out.failures.push_back({i, "no result for request " + std::to_string(i)});
      continue;
    }
    auto reply = parse_detect_reply(it->second, i, requests[i]);
    if (reply.error) {
      out.failures.push_back({i, *reply.error});
      continue;
    }
    std::vector<Detection> kept;
    for (auto& d : reply.detections) {
      if (d.score >= score_threshold) kept.push_back(std::move(d));
    }
    std::sort(kept.begin(), kept.end(), detection_order);
    std::move(kept.begin(), kept.end(), std::back_inserter(out.detections));
  }
  return out;
}

ClassificationBatch read_classification_results(const std::filesystem::path& dir, std::size_t request_count) {
  const auto by_id = read_result_lines(dir);
  ClassificationBatch out;
  out.results.resize(request_count);
  for (std::size_t i = 0; i < request_count; ++i) {
    auto it = by_id.find(i);
    if (it == by_id.end()) {
      out.failures.push_back({i, "no result for request " + std::to_string(i)});
      continue;
    }
    auto reply = parse_classify_reply(it->second, i);
    if (reply.error) {
      out.failures.push_back({i, *reply.error});
      continue;
    }
    out.results[i] = reply.result;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<GeoCandidate> georeference(const std::vector<Detection>& detections) {
  std::vector<GeoCandidate> out;
  out.reserve(detections.size());
  for (const auto& d : detections) {
    if (d.request.kind != ImageKind::aerial_tile || !d.request.tile) {
      throw DomainError("georeference needs aerial detections; got " + d.request.image_ref);
    }
    const int size = d.request.image_width();
    out.push_back({geo::box_center_geo(*d.request.tile, d.box, size), d.score, *d.request.tile, d.box});
  }
  return out;
}

std::vector<registry::TreeRecord> merge_candidates(const std::vector<GeoCandidate>& cands, double radius_m) {
  if (!(radius_m > 0.0)) throw DomainError("merge radius must be positive");
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ca = cands[a];
    const auto& cb = cands[b];
    if (ca.score != cb.score) return ca.score > cb.score;
    return ca.location < cb.location;
  });
  double max_lat = 0.0;
  for (const auto& c : cands) max_lat = std::max(max_lat, std::abs(c.location.lat));
  geo::GridIndex seeds(radius_m, max_lat);
  std::vector<registry::TreeRecord> trees;
  for (std::size_t idx : order) {
    const auto& c = cands[idx];
    std::optional<std::size_t> join;
    for (std::size_t cluster : seeds.candidates(c.location)) {
      if (geo::haversine_m(trees[cluster].location, c.location) <= radius_m && (!join || cluster < *join)) {
        join = cluster;
      }
    }
    if (join) continue;
    registry::TreeRecord t;
    t.location = c.location;
    t.id = registry::tree_id_for(c.location);
    t.source = registry::TreeSource::aerial;
    t.aerial_score = c.score;
    seeds.insert(trees.size(), c.location);
    trees.push_back(std::move(t));
  }
  return trees;
}

}  // namespace palmscan::gateway

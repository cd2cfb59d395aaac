#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "palmscan/classification.hpp"
#include "palmscan/errors.hpp"
#include "palmscan/geo.hpp"
#include "palmscan/imagery.hpp"
#include "palmscan/io.hpp"
#include "palmscan/registry.hpp"

namespace palmscan::gateway {

inline constexpr int kProtocolVersion = 1;
inline constexpr double kDefaultScoreThreshold = 0.5;
inline constexpr double kDefaultMergeRadiusM = 3.0;

enum class ImageKind { aerial_tile, street_view };
enum class Task { detect, classify };

std::string_view to_string(Task t) noexcept;

struct DetectionRequest {
  std::string image_ref;
  ImageKind kind = ImageKind::aerial_tile;
  std::optional<geo::TileId> tile;             // aerial requests
  std::optional<StreetImageRequest> street;    // street requests

  static DetectionRequest aerial(std::string image_ref, const geo::TileId& tile);
  static DetectionRequest street_view(std::string image_ref, const StreetImageRequest& req);

  // Source image width/height in pixels.
  int image_width() const noexcept;
  int image_height() const noexcept;
};

struct Detection {
  geo::PixelBox box;
  double score = 0.0;
  std::string label;
  DetectionRequest request;
};

struct GeoCandidate {
  geo::GeoPoint location;
  double score = 0.0;
  geo::TileId source_tile;
  geo::PixelBox box;
};

struct RequestFailure {
  std::size_t request_index = 0;
  std::string message;
};

// ---------------------------------------------------------------------------
// Transport. A channel carries one request line and returns one reply line.
// exchange() throws ChannelFailure when the peer died or timed out; the
// session then restarts the channel for the next request.

class ChannelFailure : public BackendError {
 public:
  using BackendError::BackendError;
};

class BackendChannel {
 public:
  virtual ~BackendChannel() = default;
  virtual std::string exchange(const std::string& line) = 0;
};

using ChannelFactory = std::function<std::unique_ptr<BackendChannel>()>;

// Wraps a pure line handler, for in-process backends.
class InProcessChannel final : public BackendChannel {
 public:
  explicit InProcessChannel(std::function<std::string(const std::string&)> handler) : handler_(std::move(handler)) {}
  std::string exchange(const std::string& line) override { return handler_(line); }

 private:
  std::function<std::string(const std::string&)> handler_;
};

// Child process speaking the protocol on stdin/stdout.
class SubprocessChannel final : public BackendChannel {
 public:
  SubprocessChannel(std::vector<std::string> argv, std::chrono::milliseconds timeout);
  ~SubprocessChannel() override;
  SubprocessChannel(const SubprocessChannel&) = delete;
  SubprocessChannel& operator=(const SubprocessChannel&) = delete;

  std::string exchange(const std::string& line) override;

 private:
  void terminate() noexcept;

  std::vector<std::string> argv_;
  std::chrono::milliseconds timeout_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

ChannelFactory subprocess_factory(std::vector<std::string> argv,
                                  std::chrono::milliseconds timeout = std::chrono::seconds(30));

// Replays pre-recorded answers keyed by image reference. Manifest layout:
//   {"labels": [...], "images": {"<ref>": {"detections": [...]} |
//                                          {"probs": {...}} | {"error": "..."}}}
std::string replay_handle(const Json& manifest, const std::string& line);
ChannelFactory replay_factory(Json manifest);

// ---------------------------------------------------------------------------
// Wire messages (newline-delimited JSON, fields in protocol order).

std::string hello_message(Task task);
std::string request_message(Task task, std::size_t id, const std::string& image);
std::string hello_reply(const std::vector<std::string>& labels);
std::string detections_reply(std::size_t id, const std::vector<Detection>& dets);
std::string probs_reply(std::size_t id, const ClassificationResult& c);
std::string error_reply(std::size_t id, const std::string& message);

// Parsed reply to one request: a payload or a backend-declared error.
struct DetectReply {
  std::vector<Detection> detections;
  std::optional<std::string> error;
};
struct ClassifyReply {
  std::optional<ClassificationResult> result;
  std::optional<std::string> error;
};

// Each throws ProtocolError carrying the offending line.
std::vector<std::string> parse_hello_reply(const std::string& line);
DetectReply parse_detect_reply(const std::string& line, std::size_t id, const DetectionRequest& req);
ClassifyReply parse_classify_reply(const std::string& line, std::size_t id);

// ---------------------------------------------------------------------------
// Batch execution.

struct BatchOptions {
  double score_threshold = kDefaultScoreThreshold;
  std::size_t workers = 1;
};

struct DetectionBatch {
  std::vector<Detection> detections;  // request order, score desc, box lexicographic
  std::vector<RequestFailure> failures;
};

struct ClassificationBatch {
  std::vector<std::optional<ClassificationResult>> results;  // parallel to requests
  std::vector<RequestFailure> failures;
};

// Request ids on the wire are the request's index in `requests`.
DetectionBatch run_detection_batch(const std::vector<DetectionRequest>& requests, const ChannelFactory& backend,
                                   const BatchOptions& opts = {});
ClassificationBatch run_classification_batch(const std::vector<std::string>& image_refs,
                                             const ChannelFactory& backend, std::size_t workers = 1);

// Manifest-file batch mode: the same records through requests.jsonl and results.jsonl.
void write_batch_requests(const std::filesystem::path& dir, Task task, const std::vector<std::string>& image_refs);
DetectionBatch read_detection_results(const std::filesystem::path& dir, const std::vector<DetectionRequest>& requests,
                                      double score_threshold = kDefaultScoreThreshold);
ClassificationBatch read_classification_results(const std::filesystem::path& dir, std::size_t request_count);

// ---------------------------------------------------------------------------
// Georeferencing.

std::vector<GeoCandidate> georeference(const std::vector<Detection>& detections);

// Greedy seed clustering by descending score (ties: lat, lon). A candidate
// joins the earliest cluster whose seed is within radius_m.
std::vector<registry::TreeRecord> merge_candidates(const std::vector<GeoCandidate>& cands,
                                                   double radius_m = kDefaultMergeRadiusM);

}  // namespace palmscan::gateway

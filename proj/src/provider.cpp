#include "palmscan/provider.hpp"

#include <curl/curl.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "palmscan/errors.hpp"

namespace palmscan::provider {

namespace {

constexpr std::string_view kSim = "sim";

std::size_t curl_sink(char* data, std::size_t size, std::size_t n, void* user) {
  static_cast<std::string*>(user)->append(data, size * n);
  return size * n;
}

std::string fetch_http(const std::string& url) {
  static std::once_flag init;
  std::call_once(init, [] { curl_global_init(CURL_GLOBAL_DEFAULT); });
  CURL* h = curl_easy_init();
  if (!h) throw ProviderError("cannot initialise HTTP client");
  std::string body;
  curl_easy_setopt(h, CURLOPT_URL, url.c_str());
  curl_easy_setopt(h, CURLOPT_WRITEFUNCTION, curl_sink);
  curl_easy_setopt(h, CURLOPT_WRITEDATA, &body);
  curl_easy_setopt(h, CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(h, CURLOPT_TIMEOUT, 60L);
  curl_easy_setopt(h, CURLOPT_NOSIGNAL, 1L);
  const CURLcode rc = curl_easy_perform(h);
  long status = 0;
  curl_easy_getinfo(h, CURLINFO_RESPONSE_CODE, &status);
  curl_easy_cleanup(h);
  // Keys travel in query strings; never echo the URL.
  if (rc != CURLE_OK) throw ProviderError(std::string("imagery request failed: ") + curl_easy_strerror(rc));
  if (status == 401 || status == 403) {
    throw ProviderError("imagery provider rejected the API key (HTTP " + std::to_string(status) +
                        "); check the key environment variable and rerun the stage");
  }
  if (status == 429) {
    throw ProviderError("imagery provider quota exhausted (HTTP 429); lower rate_limit_per_s or wait, then rerun "
                        "the stage; cached images are kept");
  }
  if (status >= 400) throw ProviderError("imagery provider returned HTTP " + std::to_string(status));
  return body;
}

std::string cost_text(std::int64_t micro) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%lld.%06lld", static_cast<long long>(micro / 1'000'000),
                static_cast<long long>(micro % 1'000'000));
  return buf;
}

}  // namespace

std::string expand_template(const std::string& tmpl, const std::vector<std::pair<std::string, std::string>>& vars) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find('{', pos);
    if (open == std::string::npos) {
      out += tmpl.substr(pos);
      break;
    }
    const auto close = tmpl.find('}', open);
    if (close == std::string::npos) throw ConfigError("unterminated placeholder in template " + tmpl);
    out += tmpl.substr(pos, open - pos);
    const auto name = tmpl.substr(open + 1, close - open - 1);
    auto it = std::find_if(vars.begin(), vars.end(), [&](const auto& kv) { return kv.first == name; });
    if (it == vars.end()) throw ConfigError("unknown placeholder {" + name + "} in template " + tmpl);
    out += it->second;
    pos = close + 1;
  }
  return out;
}

std::string fetch_url(const std::string& url) {
  if (url.rfind("file://", 0) == 0) {
    const std::filesystem::path p = url.substr(7);
    if (!std::filesystem::exists(p)) throw ProviderError("imagery file not found: " + p.string());
    try {
      return io::read_file(p);
    } catch (const PersistenceError& e) {
      throw ProviderError(e.what());
    }
  }
  if (url.rfind("http://", 0) == 0 || url.rfind("https://", 0) == 0) return fetch_http(url);
  throw ProviderError("unsupported imagery URL scheme");
}

TokenBucket::TokenBucket(double rate_per_s) : rate_(rate_per_s), tokens_(std::max(1.0, rate_per_s)),
                                              last_(std::chrono::steady_clock::now()) {
  if (!(rate_per_s > 0.0)) throw ConfigError("rate limit must be positive");
}

void TokenBucket::acquire() {
  std::unique_lock lock(mu_);
  for (;;) {
    const auto now = std::chrono::steady_clock::now();
    const double dt = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(std::max(1.0, rate_), tokens_ + dt * rate_);
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    lock.unlock();
    std::this_thread::sleep_for(wait);
    lock.lock();
  }
}

ImageryClient::ImageryClient(ProviderSettings settings, std::filesystem::path cache_dir, Fetcher fetcher)
    : settings_(std::move(settings)), cache_(std::move(cache_dir)), fetcher_(std::move(fetcher)),
      bucket_(settings_.rate_limit_per_s) {}

std::filesystem::path ImageryClient::tile_path(const geo::TileId& t) const { return cache_ / aerial_tile_ref(t); }

std::filesystem::path ImageryClient::street_path(const std::string& pano_id, double heading) const {
  return cache_ / street_image_ref(pano_id, heading);
}

std::string ImageryClient::api_key() const {
  if (settings_.key_env.empty()) return {};
  const char* v = std::getenv(settings_.key_env.c_str());
  return v ? v : "";
}

std::filesystem::path ImageryClient::fetch(const std::string& kind, const std::string& ref, const std::string& url,
                                           std::int64_t cost_micro) {
  const auto path = cache_ / ref;
  if (std::filesystem::exists(path)) return path;
  std::string bytes;
  if (url == kSim) {
    bytes = "palmscan placeholder image\n" + ref + "\n";
  } else {
    bucket_.acquire();
    bytes = fetcher_(url);
  }
  io::write_file_atomic(path, bytes);

  Json line;
  line["kind"] = kind;
  line["ref"] = ref;
  line["digest"] = io::hex64(io::fnv1a64(bytes));
  line["cost_usd"] = cost_text(cost_micro);
  std::lock_guard lock(ledger_mu_);
  const auto ledger_path = cache_ / "meta" / "ledger.jsonl";
  std::filesystem::create_directories(ledger_path.parent_path());
  std::ofstream out(ledger_path, std::ios::app | std::ios::binary);
  out << line.dump() << '\n';
  if (!out) throw PersistenceError("cannot append to " + ledger_path.string());
  ++fetched_;
  return path;
}

std::filesystem::path ImageryClient::fetch_tile(const geo::TileId& t) {
  const auto ref = aerial_tile_ref(t);
  std::string url(kSim);
  if (settings_.aerial_template != kSim) {
    url = expand_template(settings_.aerial_template, {{"z", std::to_string(t.zoom)},
                                                      {"x", std::to_string(t.x)},
                                                      {"y", std::to_string(t.y)},
                                                      {"key", api_key()}});
  }
  return fetch("aerial", ref, url, settings_.aerial_unit_cost_micro);
}

std::filesystem::path ImageryClient::fetch_street(const StreetImageRequest& req) {
  if (!req.pano_id) throw DomainError("street fetch needs a pano_id");
  const auto ref = street_image_ref(*req.pano_id, req.heading);
  std::string url(kSim);
  if (settings_.street_template != kSim) {
    const auto loc = req.location.value_or(geo::GeoPoint{});
    url = expand_template(settings_.street_template, {{"pano", *req.pano_id},
                                                      {"lat", io::fixed(loc.lat, 7)},
                                                      {"lon", io::fixed(loc.lon, 7)},
                                                      {"heading", heading_token(req.heading)},
                                                      {"fov", io::fixed(req.fov, 1)},
                                                      {"width", std::to_string(req.width)},
                                                      {"height", std::to_string(req.height)},
                                                      {"key", api_key()}});
  }
  return fetch("street", ref, url, settings_.street_unit_cost_micro);
}

std::vector<LedgerEntry> ImageryClient::ledger() const {
  const auto path = cache_ / "meta" / "ledger.jsonl";
  std::vector<LedgerEntry> out;
  if (!std::filesystem::exists(path)) return out;
  for (const auto& j : io::read_jsonl(path)) {
    const auto cost = j.at("cost_usd").get<std::string>();
    const auto dot = cost.find('.');
    const std::int64_t micro = std::stoll(cost.substr(0, dot)) * 1'000'000 + std::stoll(cost.substr(dot + 1));
    out.push_back({j.at("kind").get<std::string>(), j.at("ref").get<std::string>(), j.at("digest").get<std::string>(), micro});
  }
  return out;
}

std::int64_t ImageryClient::ledger_cost_micro() const {
  std::int64_t total = 0;
  for (const auto& e : ledger()) total += e.cost_micro;
  return total;
}

void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& job) {
  if (count == 0) return;
  workers = std::clamp<std::size_t>(workers, 1, count);
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t err_index = count;
  std::exception_ptr err;
  auto run = [&] {
    std::size_t i = count;
    try {
      while ((i = next.fetch_add(1)) < count) job(i);
    } catch (...) {
      std::lock_guard lock(mu);
      if (i < err_index) {
        err_index = i;
        err = std::current_exception();
      }
      next.store(count);
    }
  };
  if (workers == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace palmscan::provider

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <future>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>

#include "fse/engine.hpp"

namespace fse {

class OverloadError : public Error {
 public:
  using Error::Error;
};

// Mutex-guarded least-recently-used map from cache key to response body.
class LruCache {
 public:
  explicit LruCache(std::size_t capacity) : capacity_(capacity) {}

  std::optional<std::string> get(const std::string& key);
  void put(const std::string& key, std::string value);
  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }

 private:
  using Entry = std::pair<std::string, std::string>;
  std::size_t capacity_;
  mutable std::mutex m_;
  std::list<Entry> order_;  // most recent first
  std::unordered_map<std::string, std::list<Entry>::iterator> index_;
};

struct BatchConfig {
  std::chrono::milliseconds window{10};
  std::size_t max_batch = 32;
  std::size_t max_pending = 256;
};

// Collects queries arriving within the window after the first pending one
// and runs them through Engine::query_batch as one unit.
class QueryBatcher {
 public:
  QueryBatcher(const Engine& engine, BatchConfig config);
  ~QueryBatcher();
  QueryBatcher(const QueryBatcher&) = delete;
  QueryBatcher& operator=(const QueryBatcher&) = delete;

  // Throws OverloadError when max_pending requests are already waiting.
  std::future<QueryOutcome> submit(QueryRequest request);

  std::size_t batches_run() const;
  std::size_t largest_batch() const;

 private:
  struct Pending {
    QueryRequest request;
    std::promise<QueryOutcome> promise;
  };
  void run(std::stop_token stop);

  const Engine& engine_;
  BatchConfig config_;
  mutable std::mutex m_;
  std::condition_variable_any cv_;
  std::deque<Pending> queue_;
  std::size_t batches_ = 0;
  std::size_t largest_ = 0;
  std::jthread worker_;
};

struct ServiceConfig {
  BatchConfig batch;
  std::size_t cache_size = 1024;
};
ServiceConfig service_config(const Config& config);

// JSON responses of the endpoints, independent of the HTTP layer. Errors
// propagate as exceptions (see Service for the status mapping).
class QueryHandler {
 public:
  QueryHandler(const Engine& engine, const ServiceConfig& config);

  struct Response {
    std::string body;
    bool cache_hit = false;
  };
  // {"id": ...} or {"exercise": {...}}, optional "profile".
  Response similar(const std::string& body);
  // {"a": id | exercise, "b": id | exercise}
  std::string duplicate(const std::string& body) const;
  std::string health() const;

  const LruCache& cache() const { return cache_; }
  const QueryBatcher& batcher() const { return batcher_; }

 private:
  const Engine& engine_;
  LruCache cache_;
  QueryBatcher batcher_;
};

// HTTP front end: POST /similar, POST /duplicate, GET /healthz.
// 400 malformed request, 404 unknown id, 429 overload (Retry-After),
// 500 otherwise. /similar responses carry X-Cache: hit|miss.
class Service {
 public:
  Service(const Engine& engine, const ServiceConfig& config);
  ~Service();

  // Binds and serves on a background thread; port 0 picks a free port.
  // Returns the bound port.
  int start(const std::string& host, int port);
  // Blocks until stop() is called from elsewhere.
  void wait();
  void stop();

  QueryHandler& handler() { return *handler_; }

 private:
  struct Impl;
  std::unique_ptr<QueryHandler> handler_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace fse

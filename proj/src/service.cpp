#include "fse/service.hpp"

// The library default backlog of 5 drops connections under modest bursts.
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#include <httplib.h>

namespace fse {

std::optional<std::string> LruCache::get(const std::string& key) {
  std::lock_guard lock(m_);
  const auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  order_.splice(order_.begin(), order_, it->second);
  return it->second->second;
}

void LruCache::put(const std::string& key, std::string value) {
  if (capacity_ == 0) return;
  std::lock_guard lock(m_);
  if (const auto it = index_.find(key); it != index_.end()) {
    it->second->second = std::move(value);
    order_.splice(order_.begin(), order_, it->second);
    return;
  }
  order_.emplace_front(key, std::move(value));
  index_[key] = order_.begin();
  if (order_.size() > capacity_) {
    index_.erase(order_.back().first);
    order_.pop_back();
  }
}

std::size_t LruCache::size() const {
  std::lock_guard lock(m_);
  return order_.size();
}

// ---------------------------------------------------------------------------

QueryBatcher::QueryBatcher(const Engine& engine, BatchConfig config)
    : engine_(engine), config_(config), worker_([this](std::stop_token st) { run(st); }) {
  if (config_.max_batch == 0) throw ConfigError("service.max_batch must be >= 1");
}

QueryBatcher::~QueryBatcher() {
  worker_.request_stop();
  cv_.notify_all();
}

std::future<QueryOutcome> QueryBatcher::submit(QueryRequest request) {
  std::lock_guard lock(m_);
  if (queue_.size() >= config_.max_pending) throw OverloadError("query queue is full");
  queue_.push_back({std::move(request), {}});
  auto f = queue_.back().promise.get_future();
  cv_.notify_all();
  return f;
}

std::size_t QueryBatcher::batches_run() const {
  std::lock_guard lock(m_);
  return batches_;
}

std::size_t QueryBatcher::largest_batch() const {
  std::lock_guard lock(m_);
  return largest_;
}

void QueryBatcher::run(std::stop_token stop) {
  for (;;) {
    std::vector<Pending> batch;
    {
      std::unique_lock lock(m_);
      if (!cv_.wait(lock, stop, [&] { return !queue_.empty(); })) break;
      const auto deadline = std::chrono::steady_clock::now() + config_.window;
      cv_.wait_until(lock, stop, deadline, [&] { return queue_.size() >= config_.max_batch; });
      while (!queue_.empty() && batch.size() < config_.max_batch) {
        batch.push_back(std::move(queue_.front()));
        queue_.pop_front();
      }
      ++batches_;
      largest_ = std::max(largest_, batch.size());
    }
    std::vector<QueryRequest> requests;
    for (auto& p : batch) requests.push_back(std::move(p.request));
    std::vector<QueryOutcome> outcomes;
    try {
      outcomes = engine_.query_batch(requests);
    } catch (...) {
      outcomes.assign(batch.size(), QueryOutcome{std::nullopt, std::current_exception()});
    }
    for (std::size_t i = 0; i < batch.size(); ++i) batch[i].promise.set_value(std::move(outcomes[i]));
  }
  std::lock_guard lock(m_);
  for (auto& p : queue_)
    p.promise.set_value({std::nullopt, std::make_exception_ptr(OverloadError("service is shutting down"))});
  queue_.clear();
}

// ---------------------------------------------------------------------------

ServiceConfig service_config(const Config& c) {
  ServiceConfig s;
  s.batch.window = std::chrono::milliseconds(c.get_int("service.batch_window_ms"));
  s.batch.max_batch = c.get_u64("service.max_batch");
  s.batch.max_pending = c.get_u64("service.max_pending");
  s.cache_size = c.get_u64("cache.size");
  return s;
}

namespace {

nlohmann::json parse_body(const std::string& body) {
  try {
    auto j = nlohmann::json::parse(body);
    if (!j.is_object()) throw ValidationError("request body must be a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed JSON: ") + e.what());
  }
}

// An id string or an exercise object.
std::variant<std::string, Exercise> parse_target(const nlohmann::json& j, const char* field) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_object()) {
    try {
      return exercise_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("malformed exercise in '") + field + "': " + e.what());
    }
  }
  throw ValidationError(std::string("'") + field + "' must be an exercise id or an exercise object");
}

}  // namespace

QueryHandler::QueryHandler(const Engine& engine, const ServiceConfig& config)
    : engine_(engine), cache_(config.cache_size), batcher_(engine, config.batch) {}

QueryHandler::Response QueryHandler::similar(const std::string& body) {
  const auto j = parse_body(body);
  QueryRequest req;
  if (j.contains("id") == j.contains("exercise")) throw ValidationError("give exactly one of 'id' or 'exercise'");
  if (j.contains("id") && !j.at("id").is_string()) throw ValidationError("'id' must be a string");
  if (j.contains("exercise") && !j.at("exercise").is_object()) throw ValidationError("'exercise' must be an object");
  req.target = j.contains("id") ? parse_target(j.at("id"), "id") : parse_target(j.at("exercise"), "exercise");
  if (j.contains("profile") && !j.at("profile").is_null()) req.profile = profile_from_json(j.at("profile"));

  std::string target_key;
  std::string query_id;
  if (const auto* id = std::get_if<std::string>(&req.target)) {
    target_key = "id:" + *id;
    query_id = *id;
  } else {
    const auto& e = std::get<Exercise>(req.target);
    target_key = "body:" + hex64(fnv1a(to_json(e).dump()));
    query_id = e.id;
  }
  const auto key = target_key + "|" + (req.profile ? req.profile->key() : "-") + "|" + engine_.version_key();
  if (auto hit = cache_.get(key)) return {std::move(*hit), true};

  auto outcome = batcher_.submit(std::move(req)).get();
  if (outcome.error) std::rethrow_exception(outcome.error);
  auto out = outcome.result->to_json();
  out["query_id"] = query_id;
  auto text = out.dump();
  cache_.put(key, text);
  return {std::move(text), false};
}

std::string QueryHandler::duplicate(const std::string& body) const {
  const auto j = parse_body(body);
  if (!j.contains("a") || !j.contains("b")) throw ValidationError("give both 'a' and 'b'");
  auto resolve = [&](const char* field) -> Exercise {
    auto t = parse_target(j.at(field), field);
    if (const auto* id = std::get_if<std::string>(&t)) return engine_.exercise(*id);
    validate_exercise(std::get<Exercise>(t), engine_.corpus().schema());
    return std::get<Exercise>(std::move(t));
  };
  const auto a = resolve("a"), b = resolve("b");
  const double p = engine_.duplicate_probability(a, b);
  const double threshold = engine_.config().recall.dedup_threshold;
  return nlohmann::json{{"duplicate", p >= threshold}, {"probability", p}, {"threshold", threshold}}.dump();
}

std::string QueryHandler::health() const {
  return nlohmann::json{{"status", "ok"}, {"versions", engine_.versions()}}.dump();
}

// ---------------------------------------------------------------------------

struct Service::Impl {
  httplib::Server server;
  std::thread thread;
};

namespace {

void send_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    send_error(res, 400, e.what());
  } catch (const ParseError& e) {
    send_error(res, 400, e.what());
  } catch (const NotFoundError& e) {
    send_error(res, 404, e.what());
  } catch (const OverloadError& e) {
    res.set_header("Retry-After", "1");
    send_error(res, 429, e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

}  // namespace

Service::Service(const Engine& engine, const ServiceConfig& config)
    : handler_(std::make_unique<QueryHandler>(engine, config)), impl_(std::make_unique<Impl>()) {
  auto& s = impl_->server;
  s.new_task_queue = [] { return new httplib::ThreadPool(32); };
  s.Post("/similar", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto r = handler_->similar(req.body);
      res.set_header("X-Cache", r.cache_hit ? "hit" : "miss");
      res.set_content(std::move(r.body), "application/json");
    });
  });
  s.Post("/duplicate", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { res.set_content(handler_->duplicate(req.body), "application/json"); });
  });
  s.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { res.set_content(handler_->health(), "application/json"); });
  });
}

Service::~Service() { stop(); }

int Service::start(const std::string& host, int port) {
  auto& s = impl_->server;
  const int bound = port == 0 ? s.bind_to_any_port(host) : (s.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  return bound;
}

void Service::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

void Service::stop() {
  impl_->server.stop();
  wait();
}

}  // namespace fse

#pragma once

#include <chrono>
#include <memory>
#include <semaphore>
#include <string>
#include <thread>

#include "httplib.h"
#include "mupm/io.hpp"
#include "mupm/model.hpp"

namespace mupm {

// Client for a remote model served over HTTP.
//
//   POST {base_url}/v1/evaluate
//   {"image": [floats], "image_shape": [ints], "text": [ints]}
//   -> {"output": [floats]}
//
// Failed attempts are retried after 100 ms, 200 ms, 400 ms, ... (no jitter).
class HttpModel final : public Model {
 public:
  static constexpr std::chrono::milliseconds kBackoffBase{100};

  explicit HttpModel(ModelSpec spec)
      : spec_(std::move(spec)),
        slots_(std::make_unique<std::counting_semaphore<1024>>(
            std::min<std::ptrdiff_t>(spec_.max_in_flight, 1024))) {
    require(spec_.kind == ModelKind::kHttp, ErrorCode::kUnsupportedKind,
            "HttpModel needs kind http");
    validate(spec_);
  }

  ModelKind kind() const override { return ModelKind::kHttp; }
  const ModelSpec& spec() const { return spec_; }

  static std::string request_body(const InputPair& pair) {
    json body;
    body["image"] = pair.image.data;
    body["image_shape"] = pair.image.shape;
    body["text"] = pair.text;
    return body.dump();
  }

  OutputVector evaluate(const InputPair& pair, const EvalKey& key) const override {
    const std::string body = request_body(pair);
    std::string last_error;
    auto backoff = kBackoffBase;
    for (int attempt = 0; attempt <= spec_.retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
      std::string response;
      if (post(body, response, last_error)) {
        return parse_response(response, key);
      }
    }
    fail(ErrorCode::kHttpFailure, "sample '" + key.sample_id + "' after " +
                                      std::to_string(spec_.retries + 1) +
                                      " attempts: " + last_error);
  }

 private:
  bool post(const std::string& body, std::string& response, std::string& error) const {
    slots_->acquire();
    struct Release {
      std::counting_semaphore<1024>* s;
      ~Release() { s->release(); }
    } release{slots_.get()};

    httplib::Client client(spec_.base_url);
    const auto timeout = std::chrono::microseconds(
        static_cast<std::int64_t>(spec_.timeout_ms * 1000.0));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Post("/v1/evaluate", body, "application/json");
    if (!res) {
      error = "transport error: " + httplib::to_string(res.error());
      return false;
    }
    if (res->status != 200) {
      error = "HTTP status " + std::to_string(res->status);
      return false;
    }
    response = res->body;
    return true;
  }

  static OutputVector parse_response(const std::string& text, const EvalKey& key) {
    OutputVector out;
    try {
      out.values = json::parse(text).at("output").get<std::vector<double>>();
    } catch (const json::exception& e) {
      fail(ErrorCode::kHttpFailure,
           "sample '" + key.sample_id + "': malformed response: " + e.what());
    }
    require(!out.values.empty(), ErrorCode::kHttpFailure,
            "sample '" + key.sample_id + "': empty output");
    for (double v : out.values) {
      require(std::isfinite(v), ErrorCode::kNonFiniteOutput,
              "sample '" + key.sample_id + "': non-finite output");
    }
    return out;
  }

  ModelSpec spec_;
  std::unique_ptr<std::counting_semaphore<1024>> slots_;
};

}  // namespace mupm

#pragma once

// Wire-protocol client over cpp-httplib.

#include <chrono>
#include <future>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "scene/backend.hpp"
#include "scene/error.hpp"
#include "scene/protocol.hpp"

namespace scene {

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendDescriptor d) : d_(std::move(d)) {
    validate(d_);
    const auto scheme = d_.base_url.find("://");
    const auto path_start = d_.base_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_start == std::string::npos) {
      origin_ = d_.base_url;
    } else {
      origin_ = d_.base_url.substr(0, path_start);
      prefix_ = d_.base_url.substr(path_start);
      while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }
  }

  const BackendDescriptor& descriptor() const noexcept { return d_; }

  BackendInfo info() override { return protocol::decode_info(post(protocol::kInfo, protocol::json::object())); }

  std::vector<PredictionResult> predict(const std::vector<std::string>& texts) override {
    if (texts.empty()) throw ValidationError("empty predict batch");
    return chunked<PredictionResult>(texts, [this](const std::vector<std::string>& chunk) {
      auto r = protocol::decode_prediction_list(post(protocol::kPredict, protocol::predict_request(chunk)));
      check_predictions(r, chunk.size());
      return r;
    });
  }

  Matrix embed(const std::string& text) override {
    if (text.empty()) throw ValidationError("cannot embed an empty string");
    return protocol::decode_embeddings(post(protocol::kEmbed, protocol::embed_request(text)));
  }

  PredictionResult predict_embeddings(const Matrix& e) override {
    return protocol::decode_prediction(post(protocol::kPredictEmbeddings, protocol::predict_embeddings_request(e)));
  }

  std::vector<std::vector<ScoredToken>> fill_mask(const std::string& text, std::size_t top_k) override {
    const auto masks = count_masks(text);
    if (masks == 0) throw ValidationError("text contains no [MASK]");
    auto lists = protocol::decode_masks(post(protocol::kFillMask, protocol::fill_mask_request(text, top_k)));
    check_fill_mask(lists, masks, top_k);
    return lists;
  }

  std::vector<std::vector<double>> sentence_embed(const std::vector<std::string>& texts) override {
    if (texts.empty()) throw ValidationError("empty sentence_embed batch");
    auto out = chunked<std::vector<double>>(texts, [this](const std::vector<std::string>& chunk) {
      auto r = protocol::decode_vectors(post(protocol::kSentenceEmbed, protocol::sentence_embed_request(chunk)));
      check_vectors(r, chunk.size());
      return r;
    });
    check_vectors(out, texts.size());
    return out;
  }

  std::string identity() override { return d_.base_url; }

  // One POST with retries on transport failures and 5xx replies.
  protocol::json post(const std::string& endpoint, const protocol::json& body) const {
    httplib::Client cli(origin_);
    const auto secs = std::chrono::duration<double>(d_.timeout_seconds);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(secs);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    const std::string payload = body.dump();
    const std::string path = prefix_ + endpoint;

    std::string last_error;
    int last_status = 0;
    for (std::size_t attempt = 0; attempt <= d_.retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));
      auto res = cli.Post(path, payload, "application/json");
      if (!res) {
        last_status = 0;
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500) {
        last_status = res->status;
        last_error = error_message(res->body);
        continue;
      }
      if (res->status != 200) throw RemoteError(res->status, error_message(res->body));
      try {
        return protocol::json::parse(res->body);
      } catch (const protocol::json::parse_error& e) {
        throw ProtocolError(endpoint + ": response is not JSON: " + e.what());
      }
    }
    if (last_status != 0) throw RemoteError(last_status, last_error);
    throw TransportError(d_.base_url + endpoint + ": " + last_error);
  }

 private:
  static std::string error_message(const std::string& body) {
    try {
      auto j = protocol::json::parse(body);
      if (j.is_object() && j.contains("error") && j["error"].is_string()) return j["error"].get<std::string>();
    } catch (const protocol::json::exception&) {
    }
    return body;
  }

  // Splits into max_batch chunks, keeps at most max_in_flight requests open,
  // and reassembles by chunk index.
  template <typename T, typename Call>
  std::vector<T> chunked(const std::vector<std::string>& items, Call call) const {
    std::vector<std::vector<std::string>> chunks;
    for (std::size_t i = 0; i < items.size(); i += d_.max_batch)
      chunks.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(i),
                          items.begin() + static_cast<std::ptrdiff_t>(std::min(items.size(), i + d_.max_batch)));
    std::vector<std::vector<T>> results(chunks.size());
    for (std::size_t wave = 0; wave < chunks.size(); wave += d_.max_in_flight) {
      const std::size_t end = std::min(chunks.size(), wave + d_.max_in_flight);
      if (end - wave == 1) {
        results[wave] = call(chunks[wave]);
        continue;
      }
      std::vector<std::future<std::vector<T>>> inflight;
      for (std::size_t c = wave; c < end; ++c)
        inflight.push_back(std::async(std::launch::async, [&call, &chunks, c] { return call(chunks[c]); }));
      for (std::size_t c = wave; c < end; ++c) results[c] = inflight[c - wave].get();
    }
    std::vector<T> out;
    out.reserve(items.size());
    for (auto& r : results)
      for (auto& v : r) out.push_back(std::move(v));
    return out;
  }

  BackendDescriptor d_;
  std::string origin_;
  std::string prefix_;
};

}  // namespace scene

#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "drivepoison/models.hpp"

namespace drivepoison::models {

struct EndpointConfig {
    std::string base_url;       // e.g. "https://api.openai.com/v1"
    std::string model_name;
    std::string api_key_env;    // name of the environment variable holding the key
    std::size_t max_concurrency = 4;
    int retries = 3;
    double backoff_base_seconds = 0.5;
    double backoff_factor = 2.0;
    double timeout_seconds = 60.0;

    bool operator==(const EndpointConfig&) const = default;
};

EndpointConfig endpoint_from_json(const nlohmann::json& j, const std::string& pointer = "");
nlohmann::json to_json(const EndpointConfig& e);

/// Called with the delay before each retry; the default sleeps.
using Sleeper = std::function<void(std::chrono::duration<double>)>;
Sleeper real_sleeper();

/// Chat-completions request body for a context:
/// {model, messages: [{role, content}], temperature: 0}. Demonstrations become
/// alternating user/assistant turns; the final user turn carries the
/// retrieved knowledge followed by the query.
nlohmann::json chat_request(const EndpointConfig& endpoint, const PromptContext& context);

/// POSTs JSON to base_url + path with bearer auth and retries transient
/// failures (network errors, 429, 5xx) with exponential backoff.
/// The API key is read before any network activity.
class JsonHttpClient {
public:
    JsonHttpClient(EndpointConfig endpoint, Sleeper sleeper = real_sleeper());

    nlohmann::json post(std::string_view path, const std::string& body) const;
    const EndpointConfig& endpoint() const noexcept { return endpoint_; }

private:
    std::string api_key() const;

    EndpointConfig endpoint_;
    Sleeper sleeper_;
    std::string scheme_host_port_;
    std::string path_prefix_;
    std::shared_ptr<std::counting_semaphore<>> in_flight_;
};

class RemoteChatModel final : public DecisionModel {
public:
    explicit RemoteChatModel(EndpointConfig endpoint, Sleeper sleeper = real_sleeper());

    /// Text of choices[0].message.content. TransportError / EmptyResponse.
    std::string respond(const PromptContext& context) const override;
    std::size_t max_concurrency() const override { return client_.endpoint().max_concurrency; }

private:
    JsonHttpClient client_;
};

}  // namespace drivepoison::models

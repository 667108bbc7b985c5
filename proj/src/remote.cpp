#include "drivepoison/remote.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <fmt/format.h>

#include "drivepoison/errors.hpp"
#include "drivepoison/json_io.hpp"

namespace drivepoison::models {

namespace {

// Releases a semaphore slot on scope exit.
class SlotGuard {
public:
    explicit SlotGuard(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
    ~SlotGuard() { s_.release(); }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

private:
    std::counting_semaphore<>& s_;
};

bool is_transient_status(int status) {
    return status == 408 || status == 429 || status >= 500;
}

TransportError::Kind kind_for(httplib::Error e) {
    switch (e) {
        case httplib::Error::ConnectionTimeout:
        case httplib::Error::Read:
            return TransportError::Kind::Timeout;
        default:
            return TransportError::Kind::Network;
    }
}

}  // namespace

EndpointConfig endpoint_from_json(const nlohmann::json& j, const std::string& pointer) {
    using namespace json_io;
    EndpointConfig e;
    e.base_url = string_field(j, "base_url", pointer);
    e.model_name = string_field(j, "model_name", pointer);
    e.api_key_env = string_field(j, "api_key_env", pointer);
    if (j.contains("max_concurrency")) {
        const auto n = integer_field(j, "max_concurrency", pointer);
        if (n < 1) throw SchemaError(child(pointer, "max_concurrency"), "must be at least 1");
        e.max_concurrency = static_cast<std::size_t>(n);
    }
    if (j.contains("retries")) {
        const auto r = integer_field(j, "retries", pointer);
        if (r < 0) throw SchemaError(child(pointer, "retries"), "must be non-negative");
        e.retries = static_cast<int>(r);
    }
    if (j.contains("backoff_base_seconds")) e.backoff_base_seconds = number_field(j, "backoff_base_seconds", pointer);
    if (j.contains("backoff_factor")) e.backoff_factor = number_field(j, "backoff_factor", pointer);
    if (j.contains("timeout_seconds")) e.timeout_seconds = number_field(j, "timeout_seconds", pointer);
    return e;
}

nlohmann::json to_json(const EndpointConfig& e) {
    return {{"base_url", e.base_url},
            {"model_name", e.model_name},
            {"api_key_env", e.api_key_env},
            {"max_concurrency", e.max_concurrency},
            {"retries", e.retries},
            {"backoff_base_seconds", e.backoff_base_seconds},
            {"backoff_factor", e.backoff_factor},
            {"timeout_seconds", e.timeout_seconds}};
}

Sleeper real_sleeper() {
    return [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
}

nlohmann::json chat_request(const EndpointConfig& endpoint, const PromptContext& context) {
    nlohmann::json messages = nlohmann::json::array();
    if (!context.system_prompt.empty()) {
        messages.push_back({{"role", "system"}, {"content", context.system_prompt}});
    }
    for (const auto& d : context.demonstrations) {
        messages.push_back({{"role", "user"}, {"content", d.query}});
        messages.push_back({{"role", "assistant"}, {"content", d.response}});
    }
    std::string final_turn;
    if (!context.retrieved_knowledge.empty()) {
        final_turn = "Relevant knowledge:\n";
        for (const auto& k : context.retrieved_knowledge) {
            final_turn += k + "\n\n";
        }
    }
    final_turn += context.query;
    messages.push_back({{"role", "user"}, {"content", final_turn}});
    return {{"model", endpoint.model_name}, {"messages", messages}, {"temperature", 0}};
}

JsonHttpClient::JsonHttpClient(EndpointConfig endpoint, Sleeper sleeper)
    : endpoint_(std::move(endpoint)),
      sleeper_(std::move(sleeper)),
      in_flight_(std::make_shared<std::counting_semaphore<>>(
          static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, endpoint_.max_concurrency)))) {
    const auto scheme = endpoint_.base_url.find("://");
    if (scheme == std::string::npos) {
        throw ConfigError("endpoint base_url must include a scheme: " + endpoint_.base_url);
    }
    const auto slash = endpoint_.base_url.find('/', scheme + 3);
    scheme_host_port_ = endpoint_.base_url.substr(0, slash);
    if (slash != std::string::npos) {
        path_prefix_ = endpoint_.base_url.substr(slash);
        while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    }
}

std::string JsonHttpClient::api_key() const {
    const char* key = endpoint_.api_key_env.empty() ? nullptr : std::getenv(endpoint_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
        throw TransportError(TransportError::Kind::Auth,
                             fmt::format("API key environment variable '{}' is not set", endpoint_.api_key_env));
    }
    return key;
}

nlohmann::json JsonHttpClient::post(std::string_view path, const std::string& body) const {
    const std::string key = api_key();
    const std::string full_path = path_prefix_ + std::string(path);
    SlotGuard slot(*in_flight_);

    httplib::Client client(scheme_host_port_);
    const auto timeout = std::chrono::duration<double>(endpoint_.timeout_seconds);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    const httplib::Headers headers = {{"Authorization", "Bearer " + key}};

    for (int attempt = 0;; ++attempt) {
        const bool can_retry = attempt < endpoint_.retries;
        auto res = client.Post(full_path, headers, body, "application/json");
        if (!res) {
            if (!can_retry) {
                throw TransportError(kind_for(res.error()),
                                     fmt::format("request to {}{} failed: {}", scheme_host_port_, full_path,
                                                 httplib::to_string(res.error())));
            }
        } else if (res->status == 200) {
            try {
                return nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::parse_error& e) {
                throw TransportError(TransportError::Kind::Http, std::string("malformed response body: ") + e.what());
            }
        } else if (res->status == 401 || res->status == 403) {
            throw TransportError(TransportError::Kind::Auth, fmt::format("HTTP {} from {}", res->status, full_path));
        } else if (!is_transient_status(res->status) || !can_retry) {
            throw TransportError(TransportError::Kind::Http, fmt::format("HTTP {} from {}", res->status, full_path));
        }
        sleeper_(std::chrono::duration<double>(endpoint_.backoff_base_seconds *
                                               std::pow(endpoint_.backoff_factor, attempt)));
    }
}

RemoteChatModel::RemoteChatModel(EndpointConfig endpoint, Sleeper sleeper)
    : client_(std::move(endpoint), std::move(sleeper)) {}

std::string RemoteChatModel::respond(const PromptContext& context) const {
    const auto reply = client_.post("/chat/completions", chat_request(client_.endpoint(), context).dump());
    const auto choices = reply.find("choices");
    if (choices == reply.end() || !choices->is_array() || choices->empty()) {
        throw EmptyResponse("response carries no choices");
    }
    const auto& first = choices->front();
    if (!first.contains("message") || !first["message"].contains("content") || !first["message"]["content"].is_string()) {
        throw EmptyResponse("first choice has no message content");
    }
    return first["message"]["content"].get<std::string>();
}

}  // namespace drivepoison::models

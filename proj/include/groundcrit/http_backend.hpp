#pragma once

// Remote chat and embedding backends over an OpenAI-compatible HTTP API.
// Kept out of the umbrella header so only targets that talk to a network
// pull in httplib and OpenSSL.

#include <groundcrit/backends.hpp>

#include "httplib.h"
#include "json.hpp"

#include <memory>
#include <string>

namespace groundcrit {

namespace detail {

struct SplitUrl {
    std::string origin; // scheme://host[:port]
    std::string path;   // no trailing slash
};

inline SplitUrl split_endpoint(const std::string& endpoint) {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigurationError("endpoint must start with http:// or https://: " + endpoint);
    }
    const std::string scheme = endpoint.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") {
        throw ConfigurationError("unsupported endpoint scheme: " + scheme);
    }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (scheme == "https") {
        throw ConfigurationError("https endpoints need a build with OpenSSL support");
    }
#endif
    const auto path_start = endpoint.find('/', scheme_end + 3);
    SplitUrl out;
    out.origin = endpoint.substr(0, path_start);
    out.path = path_start == std::string::npos ? "" : endpoint.substr(path_start);
    while (!out.path.empty() && out.path.back() == '/') {
        out.path.pop_back();
    }
    return out;
}

/// POSTs a JSON body and returns the parsed JSON reply. Connection problems
/// raise TransportError; any non-200 status or unparsable body ProtocolError.
inline nlohmann::json post_json(const BackendConfig& cfg, const std::string& suffix, const nlohmann::json& body) {
    const SplitUrl url = split_endpoint(cfg.endpoint);
    const std::string key = credential_from_env(cfg);
    httplib::Client client(url.origin);
    const auto secs = static_cast<time_t>(cfg.timeout_seconds);
    const auto usecs = static_cast<time_t>((cfg.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers{{"Authorization", "Bearer " + key}};
    auto res = client.Post(url.path + suffix, headers, body.dump(), "application/json");
    if (!res) {
        throw TransportError("request to " + url.origin + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        std::string snippet = res->body.substr(0, 200);
        throw ProtocolError("HTTP " + std::to_string(res->status) + " from " + url.origin + ": " + snippet);
    }
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("malformed JSON reply: ") + e.what());
    }
}

} // namespace detail

/// Chat backend speaking the chat-completions wire format. Images travel as
/// base64 PNG data URLs. Transport failures are retried with backoff.
class HttpChatBackend final : public ChatBackend {
public:
    explicit HttpChatBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        if (cfg_.endpoint.empty() || cfg_.model.empty()) {
            throw ConfigurationError("http backend needs an endpoint and a model");
        }
        (void)detail::split_endpoint(cfg_.endpoint);
        (void)credential_from_env(cfg_);
    }

    static nlohmann::json request_body(const ChatRequest& req, const std::string& model) {
        nlohmann::json content = nlohmann::json::array();
        for (const auto& p : req.parts) {
            if (const auto* t = std::get_if<TextPart>(&p)) {
                content.push_back({{"type", "text"}, {"text", t->text}});
            } else {
                const auto& png = std::get<ImagePart>(p).png;
                const std::string data(png.begin(), png.end());
                content.push_back(
                    {{"type", "image_url"},
                     {"image_url", {{"url", "data:image/png;base64," + httplib::detail::base64_encode(data)}}}});
            }
        }
        return {{"model", model},
                {"temperature", req.temperature},
                {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})}};
    }

    static ChatResponse parse_reply(const nlohmann::json& j) {
        try {
            ChatResponse out;
            const auto& msg = j.at("choices").at(0).at("message").at("content");
            if (msg.is_string()) {
                out.text = msg.get<std::string>();
            } else {
                for (const auto& part : msg) {
                    if (part.value("type", "") == "text") {
                        out.text += part.at("text").get<std::string>();
                    }
                }
            }
            if (j.contains("usage") && j["usage"].is_object()) {
                out.usage = Usage{j["usage"].value("prompt_tokens", std::int64_t{0}),
                                  j["usage"].value("completion_tokens", std::int64_t{0})};
            }
            return out;
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError(std::string("unexpected reply shape: ") + e.what());
        }
    }

    ChatResponse chat(const ChatRequest& req) override {
        req.validate();
        const auto body = request_body(req, cfg_.model);
        return call_with_retries(cfg_, [&] { return parse_reply(detail::post_json(cfg_, "/chat/completions", body)); });
    }

    std::string describe() const override { return "http:" + cfg_.model + "@" + cfg_.endpoint; }

private:
    BackendConfig cfg_;
};

/// Text embeddings from an /embeddings endpoint. Joint image+text vectors
/// come from a local fallback provider, since the wire format has no image
/// input; joint vectors are only ever compared with each other.
class HttpEmbedder final : public EmbeddingProvider {
public:
    HttpEmbedder(BackendConfig cfg, std::shared_ptr<const EmbeddingProvider> joint_fallback)
        : cfg_(std::move(cfg)), joint_(std::move(joint_fallback)) {
        cfg_.validate();
        if (cfg_.endpoint.empty() || cfg_.model.empty()) {
            throw ConfigurationError("http embedder needs an endpoint and a model");
        }
        if (!joint_) {
            throw ConfigurationError("http embedder needs a joint fallback provider");
        }
        (void)credential_from_env(cfg_);
    }

    Vector embed_text(std::string_view text) const override {
        const nlohmann::json body{{"model", cfg_.model}, {"input", std::string(text)}};
        return call_with_retries(cfg_, [&] {
            const auto j = detail::post_json(cfg_, "/embeddings", body);
            try {
                return j.at("data").at(0).at("embedding").get<Vector>();
            } catch (const nlohmann::json::exception& e) {
                throw ProtocolError(std::string("unexpected embedding reply: ") + e.what());
            }
        });
    }

    Vector embed_joint(const RasterImage& image, std::string_view text) const override {
        return joint_->embed_joint(image, text);
    }

private:
    BackendConfig cfg_;
    std::shared_ptr<const EmbeddingProvider> joint_;
};

} // namespace groundcrit

#pragma once

#include <groundcrit/error.hpp>
#include <groundcrit/raster.hpp>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

namespace groundcrit {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Any failure talking to a model or embedding provider.
class BackendError : public Error {
public:
    using Error::Error;
};

/// Missing credential, bad endpoint, ... Raised before any network activity.
class ConfigurationError : public BackendError {
public:
    using BackendError::BackendError;
};

/// Connection failure or timeout. The only retryable kind.
class TransportError : public BackendError {
public:
    using BackendError::BackendError;
};

/// The remote answered, but not with something usable (HTTP error, bad JSON).
class ProtocolError : public BackendError {
public:
    using BackendError::BackendError;
};

class ProviderUnavailable : public BackendError {
public:
    using BackendError::BackendError;
};

class TranscriptExhausted : public BackendError {
public:
    explicit TranscriptExhausted(std::size_t call_index)
        : BackendError("transcript exhausted at call " + std::to_string(call_index)),
          call_index_(call_index) {}
    std::size_t call_index() const noexcept { return call_index_; }

private:
    std::size_t call_index_;
};

class MatcherMismatch : public BackendError {
public:
    MatcherMismatch(std::size_t call_index, std::string expected, std::string actual)
        : BackendError("matcher mismatch at call " + std::to_string(call_index) +
                       ": expected substring \"" + expected + "\" in request text \"" +
                       abbreviate(actual) + "\""),
          call_index_(call_index),
          expected_(std::move(expected)),
          actual_(std::move(actual)) {}

    std::size_t call_index() const noexcept { return call_index_; }
    const std::string& expected() const noexcept { return expected_; }
    const std::string& actual() const noexcept { return actual_; }

private:
    static std::string abbreviate(const std::string& s) {
        return s.size() > 160 ? s.substr(0, 157) + "..." : s;
    }

    std::size_t call_index_;
    std::string expected_;
    std::string actual_;
};

// ---------------------------------------------------------------------------
// Chat
// ---------------------------------------------------------------------------

struct TextPart {
    std::string text;
};

struct ImagePart {
    std::vector<std::uint8_t> png;
};

using ChatPart = std::variant<TextPart, ImagePart>;

struct ChatRequest {
    std::vector<ChatPart> parts;
    double temperature = 0.0;

    ChatRequest& add_text(std::string text) {
        parts.emplace_back(TextPart{std::move(text)});
        return *this;
    }
    ChatRequest& add_image(const RasterImage& img) {
        parts.emplace_back(ImagePart{encode_png(img)});
        return *this;
    }

    /// Text parts joined with newlines; what matchers and logs look at.
    std::string text() const {
        std::string out;
        for (const auto& p : parts) {
            if (const auto* t = std::get_if<TextPart>(&p)) {
                if (!out.empty()) {
                    out += '\n';
                }
                out += t->text;
            }
        }
        return out;
    }

    std::size_t image_count() const {
        std::size_t n = 0;
        for (const auto& p : parts) {
            n += std::holds_alternative<ImagePart>(p) ? 1 : 0;
        }
        return n;
    }

    void validate() const {
        if (parts.empty()) {
            throw InvalidArgument("ChatRequest: at least one part is required");
        }
        if (!(temperature >= 0.0)) {
            throw InvalidArgument("ChatRequest: temperature must be >= 0");
        }
        static constexpr std::uint8_t kPngMagic[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
        for (const auto& p : parts) {
            if (const auto* img = std::get_if<ImagePart>(&p)) {
                if (img->png.size() < 8 || !std::equal(kPngMagic, kPngMagic + 8, img->png.begin())) {
                    throw InvalidArgument("ChatRequest: image part is not PNG data");
                }
            }
        }
    }
};

struct Usage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

struct ChatResponse {
    std::string text;
    std::optional<Usage> usage;
};

struct BackendConfig {
    std::string endpoint;
    std::string model;
    std::string credential_env = "LLM_API_KEY";
    double timeout_seconds = 60.0;
    int max_retries = 2;
    double backoff_base_seconds = 0.5;

    void validate() const {
        if (!(timeout_seconds > 0.0)) {
            throw ConfigurationError("BackendConfig: timeout must be > 0");
        }
        if (max_retries < 0) {
            throw ConfigurationError("BackendConfig: max_retries must be >= 0");
        }
    }
};

/// A chat-with-images model. Implementations must be safe to call from
/// several threads at once.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse chat(const ChatRequest& req) = 0;
    /// Short human-readable description for manifests and logs.
    virtual std::string describe() const = 0;
};

/// Runs attempt() and retries it on TransportError only, sleeping
/// backoff_base * 2^k between attempts. Everything else propagates at once.
template <class Attempt, class Sleep>
auto call_with_retries(const BackendConfig& cfg, Attempt&& attempt, Sleep&& sleep) -> decltype(attempt()) {
    for (int k = 0;; ++k) {
        try {
            return attempt();
        } catch (const TransportError& e) {
            if (k >= cfg.max_retries) {
                throw TransportError(std::string(e.what()) + " (after " + std::to_string(k + 1) +
                                     " attempts)");
            }
            sleep(cfg.backoff_base_seconds * std::pow(2.0, k));
        }
    }
}

template <class Attempt>
auto call_with_retries(const BackendConfig& cfg, Attempt&& attempt) -> decltype(attempt()) {
    return call_with_retries(cfg, std::forward<Attempt>(attempt), [](double seconds) {
        std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
    });
}

/// Reads the credential named by cfg.credential_env. Never from flags or files.
inline std::string credential_from_env(const BackendConfig& cfg) {
    if (cfg.credential_env.empty()) {
        throw ConfigurationError("no credential environment variable configured");
    }
    const char* v = std::getenv(cfg.credential_env.c_str());
    if (v == nullptr || *v == '\0') {
        throw ConfigurationError("credential environment variable " + cfg.credential_env +
                                 " is not set");
    }
    return v;
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

struct ScriptEntry {
    std::optional<std::string> match; // substring required in the request text
    ChatResponse response;
    std::string channel;              // empty = default channel
};

struct ScriptLogEntry {
    std::size_t call_index = 0;
    std::string channel;
    std::string request_text;
    std::size_t image_count = 0;
    std::string response_text;
};

/// Replays a fixed transcript. Entries can be grouped into channels: a request
/// is served by the first channel whose key occurs in the request text (or by
/// the default channel), which gives each pipeline item its own transcript
/// when items run concurrently.
class ScriptedBackend final : public ChatBackend {
public:
    explicit ScriptedBackend(std::vector<ScriptEntry> transcript) {
        if (transcript.empty()) {
            throw InvalidArgument("ScriptedBackend: transcript must be nonempty");
        }
        for (auto& e : transcript) {
            auto [it, inserted] = channels_.try_emplace(e.channel);
            if (inserted && !e.channel.empty()) {
                channel_order_.push_back(e.channel);
            }
            it->second.entries.push_back(std::move(e));
        }
    }

    static ScriptedBackend from_responses(const std::vector<std::string>& responses) {
        std::vector<ScriptEntry> entries;
        for (const auto& r : responses) {
            entries.push_back({std::nullopt, ChatResponse{r, std::nullopt}, {}});
        }
        return ScriptedBackend(std::move(entries));
    }

    ChatResponse chat(const ChatRequest& req) override {
        req.validate();
        const std::string text = req.text();
        std::lock_guard lock(mutex_);
        const std::size_t call_index = calls_++;
        std::string key;
        for (const auto& c : channel_order_) {
            if (text.find(c) != std::string::npos) {
                key = c;
                break;
            }
        }
        auto it = channels_.find(key);
        if (it == channels_.end() || it->second.cursor >= it->second.entries.size()) {
            throw TranscriptExhausted(call_index);
        }
        const ScriptEntry& e = it->second.entries[it->second.cursor++];
        if (e.match && text.find(*e.match) == std::string::npos) {
            throw MatcherMismatch(call_index, *e.match, text);
        }
        log_.push_back({call_index, key, text, req.image_count(), e.response.text});
        return e.response;
    }

    std::string describe() const override { return "scripted"; }

    std::vector<ScriptLogEntry> log() const {
        std::lock_guard lock(mutex_);
        return log_;
    }

    std::size_t remaining() const {
        std::lock_guard lock(mutex_);
        std::size_t n = 0;
        for (const auto& [_, c] : channels_) {
            n += c.entries.size() - c.cursor;
        }
        return n;
    }

private:
    struct Channel {
        std::vector<ScriptEntry> entries;
        std::size_t cursor = 0;
    };

    mutable std::mutex mutex_;
    std::map<std::string, Channel> channels_;
    std::vector<std::string> channel_order_;
    std::vector<ScriptLogEntry> log_;
    std::size_t calls_ = 0;
};

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

using Vector = std::vector<double>;

inline double cosine(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw InvalidArgument("cosine: length mismatch");
    }
    if (a.empty()) {
        throw InvalidArgument("cosine: empty vector");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        throw InvalidArgument("cosine: zero vector");
    }
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual Vector embed_text(std::string_view text) const = 0;
    virtual Vector embed_joint(const RasterImage& image, std::string_view text) const = 0;
};

/// Deterministic feature-hashing embedder: lowercase words and character
/// trigrams for text, an 8x8 colour thumbnail for images. Stands in for
/// sentence and joint image-text encoders in tests and offline runs.
class HashEmbedder final : public EmbeddingProvider {
public:
    explicit HashEmbedder(std::size_t dim = 256) : dim_(dim) {
        if (dim == 0) {
            throw InvalidArgument("HashEmbedder: dimension must be positive");
        }
    }

    Vector embed_text(std::string_view text) const override {
        require_text(text);
        Vector v(dim_, 0.0);
        add_text_features(v, text, 1.0);
        return v;
    }

    Vector embed_joint(const RasterImage& image, std::string_view text) const override {
        require_text(text);
        Vector v(dim_, 0.0);
        add_text_features(v, text, 1.0);
        const int cells = 8;
        for (int cy = 0; cy < cells; ++cy) {
            for (int cx = 0; cx < cells; ++cx) {
                const int x = (2 * cx + 1) * image.width() / (2 * cells);
                const int y = (2 * cy + 1) * image.height() / (2 * cells);
                const Rgba c = image.at(x, y);
                const std::string f = "img:" + std::to_string(cx) + ":" + std::to_string(cy) + ":" +
                                      std::to_string(c.r / 64) + std::to_string(c.g / 64) +
                                      std::to_string(c.b / 64);
                add_feature(v, f, 0.5);
            }
        }
        return v;
    }

private:
    static void require_text(std::string_view text) {
        if (text.empty()) {
            throw InvalidArgument("embedding: text must be nonempty");
        }
    }

    void add_feature(Vector& v, std::string_view feature, double weight) const {
        const auto* p = reinterpret_cast<const std::uint8_t*>(feature.data());
        const std::uint64_t h = fnv1a64({p, feature.size()});
        const double sign = (h >> 63) ? -1.0 : 1.0;
        v[h % dim_] += sign * weight;
    }

    void add_text_features(Vector& v, std::string_view text, double weight) const {
        add_feature(v, "raw:" + std::string(text), weight);
        std::string word;
        auto flush = [&] {
            if (word.empty()) {
                return;
            }
            add_feature(v, "w:" + word, weight);
            const std::string padded = "^" + word + "$";
            for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
                add_feature(v, "t:" + padded.substr(i, 3), 0.5 * weight);
            }
            word.clear();
        };
        for (char ch : text) {
            if (std::isalnum(static_cast<unsigned char>(ch))) {
                word += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            } else {
                flush();
            }
        }
        flush();
    }

    std::size_t dim_;
};

/// Precomputed vectors keyed by string. Text lookups use the text itself as
/// the key; joint lookups use the text (task description) as well.
class TableEmbedder final : public EmbeddingProvider {
public:
    explicit TableEmbedder(std::map<std::string, Vector> table) : table_(std::move(table)) {}

    Vector embed_text(std::string_view text) const override { return lookup(text); }
    Vector embed_joint(const RasterImage&, std::string_view text) const override {
        return lookup(text);
    }

    const std::map<std::string, Vector>& table() const noexcept { return table_; }

private:
    Vector lookup(std::string_view key) const {
        if (key.empty()) {
            throw InvalidArgument("embedding: text must be nonempty");
        }
        auto it = table_.find(std::string(key));
        if (it == table_.end()) {
            throw ProviderUnavailable("no precomputed embedding for key \"" + std::string(key) +
                                      "\"");
        }
        return it->second;
    }

    std::map<std::string, Vector> table_;
};

/// Embedding table file: one entry per line, `key<TAB>v1 v2 ... vn`. Blank
/// lines and lines starting with '#' are skipped. All vectors share a length.
inline std::map<std::string, Vector> load_embedding_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open embedding table " + path);
    }
    std::map<std::string, Vector> table;
    std::string line;
    std::size_t line_no = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) {
            throw SchemaError(path, line_no, "expected key<TAB>values");
        }
        std::istringstream values(line.substr(tab + 1));
        Vector v;
        double x = 0.0;
        while (values >> x) {
            if (!std::isfinite(x)) {
                throw SchemaError(path, line_no, "non-finite value");
            }
            v.push_back(x);
        }
        if (!values.eof() || v.empty()) {
            throw SchemaError(path, line_no, "malformed vector");
        }
        if (dim == 0) {
            dim = v.size();
        } else if (v.size() != dim) {
            throw SchemaError(path, line_no, "vector length differs from earlier entries");
        }
        if (!table.emplace(line.substr(0, tab), std::move(v)).second) {
            throw SchemaError(path, line_no, "duplicate key");
        }
    }
    return table;
}

} // namespace groundcrit

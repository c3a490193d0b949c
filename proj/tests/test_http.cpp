#include "support.hpp"

#include <groundcrit/cli.hpp>

#include <gtest/gtest.h>

#include <atomic>
#include <sstream>
#include <thread>

using namespace gc_test;

namespace {

constexpr const char* kKeyEnv = "GROUNDCRIT_HTTP_TEST_KEY";

// Chat-completions look-alike on a loopback port. Replies come from a
// scripted backend, so request text is checked against the same matchers.
class FakeServer {
public:
    explicit FakeServer(std::vector<ScriptEntry> script) : script_(std::move(script)) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            ++chat_calls;
            if (req.get_header_value("Authorization") != "Bearer sk-local") {
                res.status = 401;
                return;
            }
            if (fail_next.exchange(false)) {
                res.status = 500;
                res.set_content("boom", "text/plain");
                return;
            }
            const auto body = nlohmann::json::parse(req.body);
            ChatRequest cr;
            for (const auto& part : body["messages"][0]["content"]) {
                if (part["type"] == "text") {
                    cr.add_text(part["text"].get<std::string>());
                } else {
                    ++images_seen;
                    EXPECT_EQ(part["image_url"]["url"].get<std::string>().rfind("data:image/png;base64,", 0), 0u);
                }
            }
            std::string text;
            try {
                text = script_.chat(cr).text;
            } catch (const Error& e) {
                res.status = 400;
                res.set_content(e.what(), "text/plain");
                return;
            }
            const nlohmann::json reply{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}},
                                       {"usage", {{"prompt_tokens", 10}, {"completion_tokens", 2}}}};
            res.set_content(reply.dump(), "application/json");
        });
        server_.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
            const auto body = nlohmann::json::parse(req.body);
            const Vector v = HashEmbedder().embed_text(body["input"].get<std::string>());
            res.set_content(nlohmann::json{{"data", {{{"embedding", v}}}}}.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeServer() {
        server_.stop();
        thread_.join();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

    std::atomic<int> chat_calls{0};
    std::atomic<int> images_seen{0};
    std::atomic<bool> fail_next{false};

private:
    ScriptedBackend script_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

BackendConfig local_config(const std::string& endpoint) {
    ::setenv(kKeyEnv, "sk-local", 1);
    BackendConfig cfg;
    cfg.endpoint = endpoint;
    cfg.model = "fake";
    cfg.credential_env = kKeyEnv;
    cfg.timeout_seconds = 5;
    return cfg;
}

int invoke(std::vector<std::string> args, std::string* out = nullptr) {
    args.insert(args.begin(), "groundcrit");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream o, e;
    const int code = run_cli(int(argv.size()), argv.data(), o, e);
    if (out) *out = o.str() + e.str();
    return code;
}

} // namespace

TEST(Http, ChatRoundTripSendsKeyAndImages) {
    FakeServer server(plain_script({"(1, 2, 3, 4)"}));
    HttpChatBackend chat(local_config(server.endpoint()));
    ChatRequest req;
    req.add_text("hello").add_image(RasterImage(4, 4, kWhite));
    const ChatResponse r = chat.chat(req);
    EXPECT_EQ(r.text, "(1, 2, 3, 4)");
    ASSERT_TRUE(r.usage);
    EXPECT_EQ(r.usage->completion_tokens, 2);
    EXPECT_EQ(server.images_seen, 1);
}

TEST(Http, ServerErrorsAreNotRetried) {
    FakeServer server(plain_script({"x", "y"}));
    HttpChatBackend chat(local_config(server.endpoint()));
    server.fail_next = true;
    ChatRequest req;
    req.add_text("hello");
    EXPECT_THROW(chat.chat(req), ProtocolError);
    EXPECT_EQ(server.chat_calls, 1);
    EXPECT_EQ(chat.chat(req).text, "x");
}

TEST(Http, WrongKeyIsAProtocolError) {
    FakeServer server(plain_script({"x"}));
    BackendConfig cfg = local_config(server.endpoint());
    ::setenv("GROUNDCRIT_HTTP_OTHER_KEY", "sk-wrong", 1);
    cfg.credential_env = "GROUNDCRIT_HTTP_OTHER_KEY";
    HttpChatBackend chat(cfg);
    ChatRequest req;
    req.add_text("hello");
    EXPECT_THROW(chat.chat(req), ProtocolError);
}

TEST(Http, UnreachableHostIsATransportError) {
    BackendConfig cfg = local_config("http://127.0.0.1:1/v1");
    cfg.max_retries = 0;
    cfg.timeout_seconds = 1;
    HttpChatBackend chat(cfg);
    ChatRequest req;
    req.add_text("hello");
    EXPECT_THROW(chat.chat(req), TransportError);
}

TEST(Http, EndpointValidation) {
    BackendConfig cfg = local_config("ftp://example.com");
    EXPECT_THROW(HttpChatBackend{cfg}, ConfigurationError);
    cfg.endpoint = "http://127.0.0.1:1";
    cfg.model.clear();
    EXPECT_THROW(HttpChatBackend{cfg}, ConfigurationError);
}

TEST(Http, EmbedderUsesEndpointForTextAndFallbackForJoint) {
    FakeServer server(plain_script({"unused"}));
    const auto fallback = std::make_shared<HashEmbedder>();
    HttpEmbedder e(local_config(server.endpoint()), fallback);
    EXPECT_EQ(e.embed_text("spacing varies"), HashEmbedder().embed_text("spacing varies"));
    EXPECT_EQ(e.embed_joint(signin_image(), "ui"), fallback->embed_joint(signin_image(), "ui"));
}

TEST(Http, CliRunOverHttpMatchesScriptedRunAndReplays) {
    FakeServer server(load_script(data_path("canonical_transcript.jsonl")));
    local_config(server.endpoint());
    TempDir dir("http");
    const std::vector<std::string> common{"--image", data_path("ui_signin.png").string(),
                                          "--guidelines", data_path("guidelines.txt").string(),
                                          "--fewshot-db", data_path("exemplars/exemplars.jsonl").string(),
                                          "--task", "sign in screen", "--parallel-items", "1"};
    auto http_args = common;
    http_args.insert(http_args.begin(), "critique");
    http_args.insert(http_args.end(), {"--backend", "http", "--endpoint", server.endpoint(), "--model", "fake",
                                       "--credential-env", kKeyEnv, "--out-dir", (dir / "http").string()});
    std::string log;
    ASSERT_EQ(invoke(http_args, &log), 0) << log;
    EXPECT_NE(log.find("calls total: 8"), std::string::npos) << log;
    EXPECT_EQ(server.chat_calls, 8);

    auto scripted_args = common;
    scripted_args.insert(scripted_args.begin(), "critique");
    scripted_args.insert(scripted_args.end(), {"--backend", "scripted", "--transcript",
                                               data_path("canonical_transcript.jsonl").string(), "--out-dir",
                                               (dir / "scripted").string()});
    ASSERT_EQ(invoke(scripted_args, &log), 0) << log;
    EXPECT_EQ(read_text_file(dir / "http" / "report.json"), read_text_file(dir / "scripted" / "report.json"));

    // The manifest holds no key; replay goes through the recorded transcript.
    const std::string manifest = read_text_file(dir / "http" / "manifest.json");
    EXPECT_EQ(manifest.find("sk-local"), std::string::npos);
    ASSERT_EQ(invoke({"critique", "--replay", (dir / "http" / "manifest.json").string(), "--out-dir",
                      (dir / "replay").string()},
                     &log),
              0)
        << log;
    EXPECT_EQ(server.chat_calls, 8);
    EXPECT_EQ(read_text_file(dir / "http" / "report.json"), read_text_file(dir / "replay" / "report.json"));
}

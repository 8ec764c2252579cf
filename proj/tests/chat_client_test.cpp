#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "sail/chat_client.hpp"
#include "sail/errors.hpp"

using namespace sail;

namespace {

std::string completion(const std::string& text) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}}.dump();
}

// Local server whose handler is set per test.
class LocalServer {
 public:
  explicit LocalServer(httplib::Server::Handler handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

ClientConfig http_config(const std::string& url, std::size_t retries = 2) {
  ClientConfig c;
  c.name = "gen";
  c.base_url = url;
  c.model = "test-model";
  c.token_env = "SAIL_TEST_TOKEN";
  c.retries = retries;
  c.timeout = std::chrono::milliseconds(5000);
  return c;
}

const ChatRequest kRequest{"test-model", {{"user", "hello"}}, 0.0};

}  // namespace

TEST(ChatJson, RequestAndResponse) {
  const auto j = nlohmann::json::parse(chat_request_json(kRequest));
  EXPECT_EQ(j.at("model"), "test-model");
  EXPECT_EQ(j.at("messages").at(0).at("content"), "hello");
  EXPECT_EQ(j.at("temperature"), 0.0);
  EXPECT_EQ(parse_chat_response(completion("C,A,E,B,D")), "C,A,E,B,D");
  EXPECT_THROW(parse_chat_response("{}"), ServiceError);
  EXPECT_THROW(parse_chat_response("not json"), ServiceError);
}

TEST(MakeClient, KindsAndIdentity) {
  EXPECT_THROW(make_client({"x", "mock:nope"}), UsageError);
  EXPECT_THROW(make_client({"x", "ftp://host"}), UsageError);
  EXPECT_THROW(make_client({"x", "localhost"}), UsageError);
  const auto c = make_client({"judge", "mock:judge"});
  EXPECT_EQ(c->identity(), "judge@mock:judge");
  EXPECT_EQ(make_client(http_config("http://h:1/v1"))->identity(), "gen@http://h:1/v1");
}

TEST(HttpClient, SendsBearerTokenAndBody) {
  std::string auth, model;
  LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    model = nlohmann::json::parse(req.body).at("model");
    res.set_content(completion("ok"), "application/json");
  });
  ::setenv("SAIL_TEST_TOKEN", "secret", 1);
  const auto client = make_client(http_config(server.url()));
  EXPECT_EQ(client->complete(kRequest), "ok");
  EXPECT_EQ(auth, "Bearer secret");
  EXPECT_EQ(model, "test-model");
  ::unsetenv("SAIL_TEST_TOKEN");
  EXPECT_EQ(client->complete(kRequest), "ok");
  EXPECT_EQ(auth, "");
}

TEST(HttpClient, RetriesServerErrorsThenSucceeds) {
  std::atomic<int> calls{0};
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    if (++calls < 3) {
      res.status = calls == 1 ? 500 : 429;
      return;
    }
    res.set_content(completion("third time"), "application/json");
  });
  EXPECT_EQ(make_client(http_config(server.url()))->complete(kRequest), "third time");
  EXPECT_EQ(calls, 3);
}

TEST(HttpClient, GivesUpAfterRetries) {
  std::atomic<int> calls{0};
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 503;
  });
  EXPECT_THROW(make_client(http_config(server.url(), 1))->complete(kRequest), ServiceError);
  EXPECT_EQ(calls, 2);
}

TEST(HttpClient, ClientErrorsFailImmediately) {
  std::atomic<int> calls{0};
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 401;
  });
  EXPECT_THROW(make_client(http_config(server.url()))->complete(kRequest), ServiceError);
  EXPECT_EQ(calls, 1);
}

TEST(HttpClient, MalformedBodyIsServiceError) {
  LocalServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"choices\": []}", "application/json");
  });
  EXPECT_THROW(make_client(http_config(server.url()))->complete(kRequest), ServiceError);
}

TEST(HttpClient, UnreachableHostIsServiceError) {
  int port = 0;
  {
    httplib::Server s;
    port = s.bind_to_any_port("127.0.0.1");
  }
  auto config = http_config("http://127.0.0.1:" + std::to_string(port), 0);
  config.timeout = std::chrono::milliseconds(500);
  EXPECT_THROW(make_client(config)->complete(kRequest), ServiceError);
}

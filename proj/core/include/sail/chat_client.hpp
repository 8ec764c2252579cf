#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace sail {

struct ChatMessage {
  std::string role;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
};

/// A chat-completion endpoint. Implementations must be safe to call from
/// several threads at once.
class ChatClient {
 public:
  virtual ~ChatClient() = default;

  /// Returns the assistant text of the first choice. Throws ServiceError.
  virtual std::string complete(const ChatRequest& request) = 0;

  virtual const std::string& model() const = 0;
  /// Distinguishes endpoints, e.g. the concept generator from the judge.
  virtual std::string identity() const = 0;
};

struct ClientConfig {
  std::string name;      // logical role, part of the identity
  std::string base_url;  // http(s)://host[:port][/prefix] or mock:<kind>
  std::string model = "mock";
  std::string token_env = "SAIL_API_TOKEN";
  std::size_t retries = 2;  // extra attempts after a transport failure
  std::chrono::milliseconds timeout{60000};
};

/// "mock:concept", "mock:judge" and "mock:matcher" select the deterministic
/// keyword mocks; anything else must be an http or https URL.
std::unique_ptr<ChatClient> make_client(const ClientConfig& config);

std::string chat_request_json(const ChatRequest& request);
/// choices[0].message.content of a chat-completion response body.
std::string parse_chat_response(const std::string& body);

}  // namespace sail

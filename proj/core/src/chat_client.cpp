#include "sail/chat_client.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "prompt_format.hpp"
#include "sail/errors.hpp"

namespace sail {
namespace prompt {
namespace {

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    out.push_back(text.substr(0, nl));
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  return out;
}

std::string_view field(std::string_view line, std::string_view key) {
  const auto at = line.find(key);
  if (at == std::string_view::npos) return {};
  auto rest = line.substr(at + key.size());
  return rest.substr(0, rest.find(" | "));
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  if (text == kUnknown) return out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(", ", start);
    if (end == std::string_view::npos) end = text.size();
    if (end > start) out.emplace_back(text.substr(start, end - start));
    start = end + 2;
  }
  return out;
}

template <typename Pred>
std::vector<std::string> labelled_lines(std::string_view prompt, Pred is_label) {
  std::vector<std::string> out;
  for (auto line : lines_of(prompt)) {
    const auto dot = line.find(". ");
    if (dot == std::string_view::npos || dot == 0) continue;
    if (is_label(line.substr(0, dot))) out.emplace_back(line.substr(dot + 2));
  }
  return out;
}

}  // namespace

std::vector<ExemplarLine> parse_exemplars(std::string_view text) {
  std::vector<ExemplarLine> out;
  for (auto line : lines_of(text)) {
    if (!line.starts_with(kExemplar)) continue;
    ExemplarLine e;
    auto image = line.substr(kExemplar.size());
    e.image = std::string(image.substr(0, image.find(" | ")));
    e.modality = std::string(field(line, kModality));
    e.organs = split_list(field(line, kOrgans));
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::string> parse_lettered(std::string_view text) {
  return labelled_lines(text, [](std::string_view l) { return l.size() == 1 && l[0] >= 'A' && l[0] <= 'Z'; });
}

std::vector<std::string> parse_numbered(std::string_view text) {
  return labelled_lines(text, [](std::string_view l) {
    return std::all_of(l.begin(), l.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; });
  });
}

std::string parse_query(std::string_view text) {
  for (auto line : lines_of(text))
    if (line.starts_with(kQuery)) return std::string(line.substr(kQuery.size()));
  return {};
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '_') {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Dominant dominant(const std::vector<ExemplarLine>& exemplars) {
  std::map<std::string, std::size_t> organs, modalities;
  for (const auto& e : exemplars) {
    ++modalities[e.modality];
    for (const auto& o : e.organs) ++organs[o];
  }
  // std::map iterates in ascending key order, so strict > keeps the smaller label on ties.
  auto top = [](const std::map<std::string, std::size_t>& counts) {
    std::string best;
    std::size_t best_n = 0;
    for (const auto& [label, n] : counts)
      if (n > best_n) {
        best = label;
        best_n = n;
      }
    return best;
  };
  return {top(organs), top(modalities)};
}

}  // namespace prompt

namespace {

using nlohmann::json;

const std::string& first_user_message(const ChatRequest& request) {
  for (const auto& m : request.messages)
    if (m.role == "user") return m.content;
  throw ServiceError("chat request has no user message");
}

class MockClient : public ChatClient {
 public:
  explicit MockClient(ClientConfig config) : config_(std::move(config)) {}
  const std::string& model() const override { return config_.model; }
  std::string identity() const override { return config_.name + "@" + config_.base_url; }

 protected:
  ClientConfig config_;
};

// Names the dominant organ and modality of the exemplars.
class ConceptMock final : public MockClient {
 public:
  using MockClient::MockClient;
  std::string complete(const ChatRequest& request) override {
    const auto d = prompt::dominant(prompt::parse_exemplars(first_user_message(request)));
    const std::string modality = d.modality.empty() ? std::string(prompt::kUnknown) : d.modality;
    if (d.organ.empty()) return modality + " images without labeled organs.";
    return modality + " images showing " + d.organ + ".";
  }
};

// Scores each candidate by whether it names the dominant organ (2 points)
// and modality (1 point); ranks by score, ties by letter.
class JudgeMock final : public MockClient {
 public:
  using MockClient::MockClient;
  std::string complete(const ChatRequest& request) override {
    const auto& text = first_user_message(request);
    const auto d = prompt::dominant(prompt::parse_exemplars(text));
    const auto organ_tokens = prompt::tokenize(d.organ);
    const auto modality_tokens = prompt::tokenize(d.modality);
    const auto candidates = prompt::parse_lettered(text);
    std::vector<std::pair<int, char>> scored;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const auto tokens = prompt::tokenize(candidates[i]);
      const std::set<std::string> have(tokens.begin(), tokens.end());
      auto contains_all = [&](const std::vector<std::string>& need) {
        return !need.empty() && std::all_of(need.begin(), need.end(), [&](const auto& t) { return have.contains(t); });
      };
      const int score = (contains_all(organ_tokens) ? 2 : 0) + (contains_all(modality_tokens) ? 1 : 0);
      scored.emplace_back(-score, static_cast<char>('A' + i));
    }
    std::sort(scored.begin(), scored.end());
    std::string out;
    for (const auto& [score, letter] : scored) {
      if (!out.empty()) out += ',';
      out += letter;
    }
    return out;
  }
};

// Case-insensitive keyword overlap between the query and each concept.
class MatcherMock final : public MockClient {
 public:
  using MockClient::MockClient;
  std::string complete(const ChatRequest& request) override {
    static const std::set<std::string> stop = {"a", "an", "and", "image", "images", "in", "of", "on", "or", "showing", "the", "with"};
    const auto& text = first_user_message(request);
    std::set<std::string> query;
    for (auto& t : prompt::tokenize(prompt::parse_query(text)))
      if (!stop.contains(t)) query.insert(std::move(t));
    const auto catalog = prompt::parse_numbered(text);
    std::vector<std::pair<long, std::size_t>> hits;  // (-overlap, number)
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      const auto tokens = prompt::tokenize(catalog[i]);
      const std::set<std::string> have(tokens.begin(), tokens.end());
      std::size_t overlap = 0;
      for (const auto& t : have) overlap += query.contains(t) ? 1 : 0;
      if (overlap > 0) hits.emplace_back(-static_cast<long>(overlap), i + 1);
    }
    if (hits.empty()) return std::string(prompt::kNone);
    std::sort(hits.begin(), hits.end());
    std::string out;
    for (const auto& [rank, number] : hits) {
      if (!out.empty()) out += ',';
      out += std::to_string(number);
    }
    return out;
  }
};

struct ParsedUrl {
  std::string scheme_host_port;
  std::string prefix;
};

ParsedUrl parse_url(const std::string& url) {
  const auto sep = url.find("://");
  if (sep == std::string::npos) throw UsageError("client base_url must be http(s)://... or mock:<kind>: " + url);
  const auto scheme = url.substr(0, sep);
  if (scheme != "http" && scheme != "https") throw UsageError("unsupported client URL scheme: " + scheme);
  const auto path = url.find('/', sep + 3);
  ParsedUrl out;
  out.scheme_host_port = url.substr(0, path);
  if (path != std::string::npos) out.prefix = url.substr(path);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

class HttpChatClient final : public ChatClient {
 public:
  explicit HttpChatClient(ClientConfig config) : config_(std::move(config)), url_(parse_url(config_.base_url)) {}

  const std::string& model() const override { return config_.model; }
  std::string identity() const override { return config_.name + "@" + config_.base_url; }

  std::string complete(const ChatRequest& request) override {
    const auto body = chat_request_json(request);
    httplib::Headers headers;
    if (const char* token = std::getenv(config_.token_env.c_str()); token && *token)
      headers.emplace("Authorization", std::string("Bearer ") + token);
    std::string last_error;
    for (std::size_t attempt = 0; attempt <= config_.retries; ++attempt) {
      httplib::Client client(url_.scheme_host_port);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      const auto res = client.Post(url_.prefix + "/chat/completions", headers, body, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 200) return parse_chat_response(res->body);
      last_error = "HTTP " + std::to_string(res->status);
      if (res->status != 429 && res->status < 500) break;
    }
    throw ServiceError("chat completion failed for " + identity() + ": " + last_error);
  }

 private:
  ClientConfig config_;
  ParsedUrl url_;
};

}  // namespace

std::unique_ptr<ChatClient> make_client(const ClientConfig& config) {
  if (config.base_url.starts_with("mock:")) {
    const auto kind = config.base_url.substr(5);
    if (kind == "concept") return std::make_unique<ConceptMock>(config);
    if (kind == "judge") return std::make_unique<JudgeMock>(config);
    if (kind == "matcher") return std::make_unique<MatcherMock>(config);
    throw UsageError("unknown mock client kind: " + kind);
  }
  return std::make_unique<HttpChatClient>(config);
}

std::string chat_request_json(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return json{{"model", request.model}, {"messages", messages}, {"temperature", request.temperature}}.dump();
}

std::string parse_chat_response(const std::string& body) {
  try {
    const auto j = json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ServiceError(std::string("malformed chat completion response: ") + e.what());
  }
}

}  // namespace sail

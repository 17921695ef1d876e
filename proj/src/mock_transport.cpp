#include <cmath>

#include "corpusforge/common/utf8.hpp"
#include "corpusforge/llm_client.hpp"

namespace corpusforge::llm {

using nlohmann::json;

namespace {

std::string percent_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      out.push_back(static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16)));
      i += 2;
    } else if (s[i] == '+') {
      out.push_back(' ');
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

std::map<std::string, std::string> parse_query(const std::string& url) {
  std::map<std::string, std::string> q;
  const auto pos = url.find('?');
  if (pos == std::string::npos) return q;
  std::string_view rest(url);
  rest.remove_prefix(pos + 1);
  while (!rest.empty()) {
    const auto amp = rest.find('&');
    const std::string_view pair = rest.substr(0, amp);
    const auto eq = pair.find('=');
    if (eq != std::string_view::npos) {
      q[std::string(pair.substr(0, eq))] = percent_decode(pair.substr(eq + 1));
    } else {
      q[std::string(pair)] = "";
    }
    if (amp == std::string_view::npos) break;
    rest.remove_prefix(amp + 1);
  }
  return q;
}

std::uint64_t fnv1a(std::u32string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char32_t c : s) {
    for (int b = 0; b < 4; ++b) {
      h ^= (static_cast<std::uint64_t>(c) >> (8 * b)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

json chat_response(const std::string& model, const std::string& reply, std::size_t prompt_bytes) {
  return json{{"id", "mock-completion"},
              {"object", "chat.completion"},
              {"model", model},
              {"choices",
               json::array({json{{"index", 0},
                                 {"message", {{"role", "assistant"}, {"content", reply}}},
                                 {"finish_reason", "stop"}}})},
              {"usage",
               {{"prompt_tokens", static_cast<long>(prompt_bytes / 4)},
                {"completion_tokens", static_cast<long>(reply.size() / 4)}}}};
}

class MockTransport final : public Transport {
 public:
  MockTransport(std::string kind, std::map<std::string, std::string> query)
      : kind_(std::move(kind)), query_(std::move(query)) {
    if (kind_ != "echo" && kind_ != "constant") throw ValidationError("unknown mock endpoint kind: " + kind_);
    dim_ = query_.contains("dim") ? std::stoul(query_["dim"]) : 64;
    if (dim_ == 0) throw ValidationError("mock embedding dim must be > 0");
  }

  HttpResponse post(const std::string& path, const std::string& body,
                    const std::map<std::string, std::string>&) override {
    const json req = json::parse(body);
    const std::string model = req.value("model", "mock");
    if (path.ends_with("/chat/completions")) {
      std::string reply;
      if (kind_ == "constant") {
        reply = query_["reply"];
      } else {
        for (const auto& m : req.at("messages")) {
          if (m.at("role") == "user") reply = m.at("content").get<std::string>();
        }
      }
      return {200, chat_response(model, reply, body.size()).dump(), {}};
    }
    if (path.ends_with("/embeddings")) {
      json data = json::array();
      const auto& input = req.at("input");
      for (std::size_t i = 0; i < input.size(); ++i) {
        data.push_back(json{{"object", "embedding"},
                            {"index", i},
                            {"embedding", hash_embedding(input[i].get<std::string>(), dim_)}});
      }
      return {200, json{{"object", "list"}, {"model", model}, {"data", data}}.dump(), {}};
    }
    return {404, R"({"error":"unknown route"})", {}};
  }

 private:
  std::string kind_;
  std::map<std::string, std::string> query_;
  std::size_t dim_ = 64;
};

}  // namespace

std::vector<double> hash_embedding(std::string_view text, std::size_t dim) {
  std::u32string cps;
  for (char32_t c : utf8::decode(text)) {
    c = utf8::to_half_width(c);
    if (c >= U'A' && c <= U'Z') c = c - U'A' + U'a';
    if (c == U' ' || c == U'\t' || c == U'\n' || c == U'\r') continue;
    cps.push_back(c);
  }
  std::vector<double> v(dim, 0.0);
  auto add = [&](std::u32string_view gram, double weight) {
    const std::uint64_t h = fnv1a(gram);
    v[h % dim] += (h >> 63) ? -weight : weight;
  };
  if (cps.empty()) {
    add(U"∅", 1.0);
    return v;
  }
  for (std::size_t i = 0; i < cps.size(); ++i) {
    add(std::u32string_view(cps).substr(i, 1), 0.5);
    if (i + 2 <= cps.size()) add(std::u32string_view(cps).substr(i, 2), 1.0);
    if (i + 3 <= cps.size()) add(std::u32string_view(cps).substr(i, 3), 1.0);
  }
  return v;
}

std::shared_ptr<Transport> make_mock_transport(const std::string& url) {
  constexpr std::string_view scheme = "mock://";
  if (url.rfind(scheme, 0) != 0) throw ValidationError("not a mock URL: " + url);
  std::string rest = url.substr(scheme.size());
  const auto cut = rest.find_first_of("/?");
  const std::string kind = rest.substr(0, cut);
  return std::make_shared<MockTransport>(kind, parse_query(url));
}

}  // namespace corpusforge::llm

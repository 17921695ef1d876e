#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "corpusforge/common/errors.hpp"

namespace corpusforge::review {

inline constexpr int kPayloadVersion = 1;

inline constexpr std::array<std::string_view, 6> kDimensions = {
    "readability", "relevance", "correctness", "completeness", "safety", "empathy"};

class NotFound : public Error {
 public:
  using Error::Error;
};
class Forbidden : public Error {
 public:
  using Error::Error;
};
class Conflict : public Error {
 public:
  using Error::Error;
};

struct CaseInput {
  std::string id;
  std::string prompt;
  std::map<std::string, std::string> responses;  // source name -> text
};

struct SessionRequest {
  std::vector<CaseInput> cases;
  std::vector<std::string> raters;
  std::array<std::string, 2> sources;  // the two source names
  std::uint64_t seed = 0;
  std::string admin_key;
  std::string label;
};

// {"v", "cases": [{"id", "prompt", "responses": {src: text}}], "raters",
// "sources": [a, b], "seed", "admin_key", "label"?}
SessionRequest session_request_from_json(const nlohmann::json& j);

struct SessionCase {
  std::string id;
  std::string prompt;
  std::string response_1;
  std::string response_2;
};

struct ReviewSession {
  std::string id;
  std::string label;
  std::vector<SessionCase> cases;
  // Hidden arm map: index into `sources` of the source shown as Response 1.
  std::vector<int> response_1_source;
  std::vector<std::string> raters;
  std::array<std::string, 2> sources;
  std::uint64_t seed = 0;
  std::string created;
  std::string admin_key_hash;
};

// Per-case fair coins drawn from the seed, in case order.
std::vector<int> draw_arm_map(std::uint64_t seed, std::size_t cases);

enum class Superior { response_1, response_2 };

using DimensionScores = std::array<int, kDimensions.size()>;

struct RatingRecord {
  std::string session_id;
  std::string case_id;
  std::string rater;
  DimensionScores response_1{};
  DimensionScores response_2{};
  Superior superior = Superior::response_1;
  std::optional<double> elapsed_seconds;  // client-reported
  std::string submitted;                  // server-assigned

  void validate() const;
  // Equality of everything the client submitted.
  bool same_submission(const RatingRecord& other) const;
};

// {"v", "session_id", "case_id", "rater", "scores": {"response_1": {dim: n},
// "response_2": {...}}, "superior": "response_1"|"response_2",
// "elapsed_seconds"?}
RatingRecord rating_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RatingRecord& r);

enum class SubmitStatus { accepted, already };

struct AggregateOptions {
  bool partial = false;
};

// Sessions kept in memory and, with a data directory, persisted as one
// append-only JSONL event log per session. Constructing over an existing
// directory replays every log.
class ReviewStore {
 public:
  ReviewStore() = default;
  explicit ReviewStore(std::filesystem::path data_dir);

  // Client-facing payload: {"v", "session_id", "cases", "raters"}.
  nlohmann::json create_session(const SessionRequest& request);

  // {"v", "session_id", "done", "progress": {"rated", "total"}, "case"?:
  // {"case_id", "index", "prompt", "response_1", "response_2"}}
  nlohmann::json next_case(const std::string& session_id, const std::string& rater) const;

  SubmitStatus submit(RatingRecord record);

  // Unblinded aggregate; requires the admin key given at creation.
  nlohmann::json unblind(const std::string& session_id, const std::string& admin_key,
                         const AggregateOptions& options = {}) const;

  std::size_t log_length(const std::string& session_id) const;
  std::vector<std::string> session_ids() const;
  ReviewSession session(const std::string& session_id) const;  // server-side view
  std::vector<RatingRecord> ratings(const std::string& session_id) const;

 private:
  struct State {
    ReviewSession session;
    std::vector<RatingRecord> ratings;
    std::map<std::pair<std::string, std::string>, std::size_t> index;  // (rater, case) -> rating
    std::size_t log_events = 0;
  };

  void replay(const std::filesystem::path& file);
  void append_event(const std::string& session_id, const nlohmann::json& event);
  const State& state(const std::string& session_id) const;

  std::optional<std::filesystem::path> dir_;
  mutable std::shared_mutex mu_;
  std::map<std::string, State> sessions_;
};

// Pure aggregation over unblinded ratings. Difference scores are source a
// minus source b.
nlohmann::json aggregate(const ReviewSession& session, const std::vector<RatingRecord>& ratings, bool partial);

}  // namespace corpusforge::review

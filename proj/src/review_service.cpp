#include "corpusforge/review_service.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <random>
#include <set>

#include "corpusforge/common/hash.hpp"
#include "corpusforge/common/log.hpp"
#include "corpusforge/common/rng.hpp"
#include "corpusforge/statistics.hpp"

namespace corpusforge::review {

using nlohmann::json;

namespace {

std::string now_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

std::string new_session_id() {
  std::random_device rd;
  std::string seed;
  for (int i = 0; i < 4; ++i) seed += std::to_string(rd());
  return sha256_hex(seed + now_utc()).substr(0, 16);
}

std::string_view to_string(Superior s) { return s == Superior::response_1 ? "response_1" : "response_2"; }

json scores_json(const DimensionScores& s) {
  json out = json::object();
  for (std::size_t d = 0; d < kDimensions.size(); ++d) out[std::string(kDimensions[d])] = s[d];
  return out;
}

DimensionScores scores_from_json(const json& j, const std::string& which) {
  if (!j.is_object()) throw ValidationError("scores." + which + " must be an object");
  DimensionScores s{};
  for (std::size_t d = 0; d < kDimensions.size(); ++d) {
    const std::string dim(kDimensions[d]);
    if (!j.contains(dim)) throw ValidationError("scores." + which + " is missing " + dim);
    const json& v = j.at(dim);
    if (!v.is_number_integer()) throw ValidationError("scores." + which + "." + dim + " must be an integer");
    s[d] = v.get<int>();
  }
  if (j.size() != kDimensions.size()) throw ValidationError("scores." + which + " has unknown dimensions");
  return s;
}

json session_to_json(const ReviewSession& s) {
  json cases = json::array();
  for (const auto& c : s.cases) {
    cases.push_back({{"id", c.id}, {"prompt", c.prompt}, {"response_1", c.response_1}, {"response_2", c.response_2}});
  }
  return {{"id", s.id},           {"label", s.label},
          {"cases", cases},       {"response_1_source", s.response_1_source},
          {"raters", s.raters},   {"sources", s.sources},
          {"seed", s.seed},       {"created", s.created},
          {"admin_key_hash", s.admin_key_hash}};
}

ReviewSession session_from_json(const json& j) {
  ReviewSession s;
  s.id = j.at("id").get<std::string>();
  s.label = j.value("label", std::string{});
  for (const auto& c : j.at("cases")) {
    s.cases.push_back({c.at("id").get<std::string>(), c.at("prompt").get<std::string>(),
                       c.at("response_1").get<std::string>(), c.at("response_2").get<std::string>()});
  }
  s.response_1_source = j.at("response_1_source").get<std::vector<int>>();
  s.raters = j.at("raters").get<std::vector<std::string>>();
  s.sources = j.at("sources").get<std::array<std::string, 2>>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.created = j.at("created").get<std::string>();
  s.admin_key_hash = j.at("admin_key_hash").get<std::string>();
  return s;
}

std::size_t case_index(const ReviewSession& s, const std::string& case_id) {
  for (std::size_t i = 0; i < s.cases.size(); ++i) {
    if (s.cases[i].id == case_id) return i;
  }
  throw NotFound("unknown case " + case_id);
}

}  // namespace

SessionRequest session_request_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("session request must be an object");
  SessionRequest r;
  try {
    if (!j.contains("sources") || !j.at("sources").is_array() || j.at("sources").size() != 2) {
      throw ValidationError("sources must list exactly two source names");
    }
    r.sources = j.at("sources").get<std::array<std::string, 2>>();
    r.raters = j.at("raters").get<std::vector<std::string>>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.admin_key = j.at("admin_key").get<std::string>();
    r.label = j.value("label", std::string{});
    for (const auto& c : j.at("cases")) {
      CaseInput in;
      in.id = c.at("id").get<std::string>();
      in.prompt = c.at("prompt").get<std::string>();
      in.responses = c.at("responses").get<std::map<std::string, std::string>>();
      r.cases.push_back(std::move(in));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad session request: ") + e.what());
  }
  return r;
}

std::vector<int> draw_arm_map(std::uint64_t seed, std::size_t cases) {
  Rng rng(seed);
  std::vector<int> arms(cases);
  for (int& a : arms) a = rng.coin() ? 0 : 1;
  return arms;
}

void RatingRecord::validate() const {
  if (session_id.empty() || case_id.empty() || rater.empty()) {
    throw ValidationError("rating needs session_id, case_id and rater");
  }
  for (const auto* set : {&response_1, &response_2}) {
    for (std::size_t d = 0; d < kDimensions.size(); ++d) {
      if ((*set)[d] < 1 || (*set)[d] > 5) {
        throw ValidationError(std::string(kDimensions[d]) + " score must be in [1, 5]");
      }
    }
  }
  if (elapsed_seconds && !(*elapsed_seconds >= 0.0)) throw ValidationError("elapsed_seconds must be >= 0");
}

bool RatingRecord::same_submission(const RatingRecord& o) const {
  return session_id == o.session_id && case_id == o.case_id && rater == o.rater && response_1 == o.response_1 &&
         response_2 == o.response_2 && superior == o.superior && elapsed_seconds == o.elapsed_seconds;
}

RatingRecord rating_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("rating must be an object");
  RatingRecord r;
  try {
    r.session_id = j.at("session_id").get<std::string>();
    r.case_id = j.at("case_id").get<std::string>();
    r.rater = j.at("rater").get<std::string>();
    const json& scores = j.at("scores");
    r.response_1 = scores_from_json(scores.at("response_1"), "response_1");
    r.response_2 = scores_from_json(scores.at("response_2"), "response_2");
    const std::string sup = j.at("superior").get<std::string>();
    if (sup == "response_1") {
      r.superior = Superior::response_1;
    } else if (sup == "response_2") {
      r.superior = Superior::response_2;
    } else {
      throw ValidationError("superior must be response_1 or response_2");
    }
    if (j.contains("elapsed_seconds") && !j.at("elapsed_seconds").is_null()) {
      r.elapsed_seconds = j.at("elapsed_seconds").get<double>();
    }
    r.submitted = j.value("submitted", std::string{});
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad rating: ") + e.what());
  }
  r.validate();
  return r;
}

json to_json(const RatingRecord& r) {
  json j = {{"v", kPayloadVersion},
            {"session_id", r.session_id},
            {"case_id", r.case_id},
            {"rater", r.rater},
            {"scores", {{"response_1", scores_json(r.response_1)}, {"response_2", scores_json(r.response_2)}}},
            {"superior", to_string(r.superior)},
            {"submitted", r.submitted}};
  if (r.elapsed_seconds) j["elapsed_seconds"] = *r.elapsed_seconds;
  return j;
}

ReviewStore::ReviewStore(std::filesystem::path data_dir) : dir_(std::move(data_dir)) {
  std::filesystem::create_directories(*dir_);
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(*dir_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) replay(f);
}

void ReviewStore::replay(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::string line;
  State* st = nullptr;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    json event;
    try {
      event = json::parse(line);
    } catch (const json::exception&) {
      // A torn final write after a crash; earlier events stay valid.
      log::warn("review log " + file.string() + ":" + std::to_string(number) + ": unreadable event ignored");
      continue;
    }
    const std::string type = event.value("type", std::string{});
    if (type == "created") {
      ReviewSession s = session_from_json(event.at("session"));
      const std::string id = s.id;
      st = &sessions_[id];
      st->session = std::move(s);
    } else if (type == "rating" && st) {
      RatingRecord r = rating_from_json(event.at("rating"));
      st->index[{r.rater, r.case_id}] = st->ratings.size();
      st->ratings.push_back(std::move(r));
    } else {
      throw IoError("review log " + file.string() + ":" + std::to_string(number) + ": unexpected event");
    }
    if (st) ++st->log_events;
  }
}

void ReviewStore::append_event(const std::string& session_id, const json& event) {
  if (!dir_) return;
  std::ofstream out(*dir_ / (session_id + ".jsonl"), std::ios::binary | std::ios::app);
  out << event.dump() << '\n';
  out.flush();
  if (!out) throw IoError("cannot append to review log for session " + session_id);
}

const ReviewStore::State& ReviewStore::state(const std::string& session_id) const {
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFound("unknown session " + session_id);
  return it->second;
}

json ReviewStore::create_session(const SessionRequest& req) {
  if (req.cases.empty()) throw ValidationError("a session needs at least one case");
  if (req.raters.empty()) throw ValidationError("a session needs at least one rater");
  if (req.sources[0].empty() || req.sources[1].empty() || req.sources[0] == req.sources[1]) {
    throw ValidationError("two distinct non-empty source names are required");
  }
  if (req.admin_key.empty()) throw ValidationError("admin_key must be non-empty");
  std::set<std::string> rater_set(req.raters.begin(), req.raters.end());
  if (rater_set.size() != req.raters.size() || rater_set.count("")) throw ValidationError("rater ids must be unique and non-empty");
  std::set<std::string> case_ids;
  for (const auto& c : req.cases) {
    if (c.id.empty() || !case_ids.insert(c.id).second) throw ValidationError("case ids must be unique and non-empty");
    for (const auto& src : req.sources) {
      auto it = c.responses.find(src);
      if (it == c.responses.end() || it->second.empty()) {
        throw ValidationError("case " + c.id + " is missing the response from " + src);
      }
    }
  }

  ReviewSession s;
  s.label = req.label;
  s.sources = req.sources;
  s.raters = req.raters;
  s.seed = req.seed;
  s.created = now_utc();
  s.admin_key_hash = sha256_hex(req.admin_key);
  s.response_1_source = draw_arm_map(req.seed, req.cases.size());
  for (std::size_t i = 0; i < req.cases.size(); ++i) {
    const auto& c = req.cases[i];
    const int first = s.response_1_source[i];
    s.cases.push_back({c.id, c.prompt, c.responses.at(req.sources[first]), c.responses.at(req.sources[1 - first])});
  }

  std::unique_lock lock(mu_);
  do {
    s.id = new_session_id();
  } while (sessions_.count(s.id));
  append_event(s.id, {{"v", kPayloadVersion}, {"type", "created"}, {"session", session_to_json(s)}});
  State& st = sessions_[s.id];
  st.session = s;
  st.log_events = 1;
  return {{"v", kPayloadVersion}, {"session_id", s.id}, {"cases", s.cases.size()}, {"raters", s.raters}};
}

json ReviewStore::next_case(const std::string& session_id, const std::string& rater) const {
  std::shared_lock lock(mu_);
  const State& st = state(session_id);
  const auto& s = st.session;
  if (std::find(s.raters.begin(), s.raters.end(), rater) == s.raters.end()) throw NotFound("unknown rater " + rater);
  std::size_t rated = 0;
  std::optional<std::size_t> next;
  for (std::size_t i = 0; i < s.cases.size(); ++i) {
    if (st.index.count({rater, s.cases[i].id})) {
      ++rated;
    } else if (!next) {
      next = i;
    }
  }
  json out = {{"v", kPayloadVersion},
              {"session_id", s.id},
              {"done", !next.has_value()},
              {"progress", {{"rated", rated}, {"total", s.cases.size()}}}};
  if (next) {
    const auto& c = s.cases[*next];
    out["case"] = {{"case_id", c.id},
                   {"index", *next + 1},
                   {"prompt", c.prompt},
                   {"response_1", c.response_1},
                   {"response_2", c.response_2}};
  }
  return out;
}

SubmitStatus ReviewStore::submit(RatingRecord record) {
  record.validate();
  std::unique_lock lock(mu_);
  auto it = sessions_.find(record.session_id);
  if (it == sessions_.end()) throw NotFound("unknown session " + record.session_id);
  State& st = it->second;
  const auto& raters = st.session.raters;
  if (std::find(raters.begin(), raters.end(), record.rater) == raters.end()) {
    throw NotFound("unknown rater " + record.rater);
  }
  case_index(st.session, record.case_id);
  if (auto prior = st.index.find({record.rater, record.case_id}); prior != st.index.end()) {
    if (st.ratings[prior->second].same_submission(record)) return SubmitStatus::already;
    throw Conflict("case " + record.case_id + " already rated by " + record.rater + " with different scores");
  }
  record.submitted = now_utc();
  append_event(record.session_id, {{"v", kPayloadVersion}, {"type", "rating"}, {"rating", to_json(record)}});
  st.index[{record.rater, record.case_id}] = st.ratings.size();
  st.ratings.push_back(std::move(record));
  ++st.log_events;
  return SubmitStatus::accepted;
}

json ReviewStore::unblind(const std::string& session_id, const std::string& admin_key,
                          const AggregateOptions& options) const {
  std::shared_lock lock(mu_);
  const State& st = state(session_id);
  if (sha256_hex(admin_key) != st.session.admin_key_hash) throw Forbidden("wrong admin key");
  const std::size_t expected = st.session.cases.size() * st.session.raters.size();
  if (!options.partial && st.ratings.size() < expected) {
    throw Conflict("session incomplete: " + std::to_string(st.ratings.size()) + " of " + std::to_string(expected) +
                   " ratings; pass partial to aggregate anyway");
  }
  return aggregate(st.session, st.ratings, options.partial);
}

std::size_t ReviewStore::log_length(const std::string& session_id) const {
  std::shared_lock lock(mu_);
  return state(session_id).log_events;
}

std::vector<std::string> ReviewStore::session_ids() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> ids;
  for (const auto& [id, st] : sessions_) ids.push_back(id);
  return ids;
}

ReviewSession ReviewStore::session(const std::string& session_id) const {
  std::shared_lock lock(mu_);
  return state(session_id).session;
}

std::vector<RatingRecord> ReviewStore::ratings(const std::string& session_id) const {
  std::shared_lock lock(mu_);
  return state(session_id).ratings;
}

json aggregate(const ReviewSession& s, const std::vector<RatingRecord>& ratings, bool partial) {
  const std::size_t n_cases = s.cases.size();
  const std::size_t n_raters = s.raters.size();
  std::map<std::string, std::size_t> rater_pos;
  for (std::size_t r = 0; r < n_raters; ++r) rater_pos[s.raters[r]] = r;

  // by_source[src][d][rater][case]
  std::array<std::vector<std::vector<std::vector<std::optional<double>>>>, 2> by_source;
  for (auto& src : by_source) {
    src.assign(kDimensions.size(), std::vector<std::vector<std::optional<double>>>(
                                       n_raters, std::vector<std::optional<double>>(n_cases)));
  }
  std::array<std::size_t, 2> superior_votes{0, 0};
  for (const auto& r : ratings) {
    const std::size_t c = case_index(s, r.case_id);
    const std::size_t rp = rater_pos.at(r.rater);
    const int first = s.response_1_source[c];
    for (std::size_t d = 0; d < kDimensions.size(); ++d) {
      by_source[first][d][rp][c] = r.response_1[d];
      by_source[1 - first][d][rp][c] = r.response_2[d];
    }
    ++superior_votes[r.superior == Superior::response_1 ? first : 1 - first];
  }

  std::vector<std::size_t> complete_cases;
  for (std::size_t c = 0; c < n_cases; ++c) {
    bool all = true;
    for (std::size_t r = 0; r < n_raters; ++r) all = all && by_source[0][0][r][c].has_value();
    if (all) complete_cases.push_back(c);
  }

  json dims = json::object();
  for (std::size_t d = 0; d < kDimensions.size(); ++d) {
    std::array<std::vector<double>, 2> flat;
    std::vector<double> diffs, case_a, case_b;
    for (std::size_t c = 0; c < n_cases; ++c) {
      double sa = 0, sb = 0;
      std::size_t k = 0;
      for (std::size_t r = 0; r < n_raters; ++r) {
        const auto& a = by_source[0][d][r][c];
        const auto& b = by_source[1][d][r][c];
        if (!a || !b) continue;
        flat[0].push_back(*a);
        flat[1].push_back(*b);
        diffs.push_back(*a - *b);
        sa += *a;
        sb += *b;
        ++k;
      }
      if (k) {
        case_a.push_back(sa / static_cast<double>(k));
        case_b.push_back(sb / static_cast<double>(k));
      }
    }
    json entry;
    json means = json::object();
    for (int src = 0; src < 2; ++src) {
      means[s.sources[src]] = flat[src].empty() ? json(nullptr) : stats::to_json(stats::mean_sem(flat[src]));
    }
    entry["by_source"] = means;
    entry["mean_diff"] = diffs.empty() ? json(nullptr) : json(stats::mean_sem(diffs).mean);
    entry["wilcoxon"] = case_a.empty() ? json(nullptr) : stats::to_json(stats::wilcoxon_signed_rank(case_a, case_b));

    auto icc_of = [&](auto value) -> json {
      std::vector<std::vector<double>> grid(n_raters);
      for (std::size_t r = 0; r < n_raters; ++r) {
        for (std::size_t c : complete_cases) grid[r].push_back(value(r, c));
      }
      try {
        return stats::to_json(stats::icc_two_way(grid));
      } catch (const ValidationError& e) {
        return {{"icc", nullptr}, {"form", "ICC(2,1)"}, {"reason", e.what()}};
      }
    };
    entry["icc_diff"] = icc_of([&](std::size_t r, std::size_t c) {
      return *by_source[0][d][r][c] - *by_source[1][d][r][c];
    });
    json icc_src = json::object();
    for (int src = 0; src < 2; ++src) {
      icc_src[s.sources[src]] = icc_of([&](std::size_t r, std::size_t c) { return *by_source[src][d][r][c]; });
    }
    entry["icc_by_source"] = icc_src;
    dims[std::string(kDimensions[d])] = entry;
  }

  const std::size_t votes = superior_votes[0] + superior_votes[1];
  json superiority = {{"n", votes}};
  for (int src = 0; src < 2; ++src) {
    superiority[s.sources[src]] =
        votes == 0 ? json(nullptr) : json(100.0 * static_cast<double>(superior_votes[src]) / static_cast<double>(votes));
  }
  json arm_map = json::object();
  for (std::size_t c = 0; c < n_cases; ++c) arm_map[s.cases[c].id] = s.sources[s.response_1_source[c]];

  return {{"v", kPayloadVersion},
          {"session_id", s.id},
          {"partial", partial},
          {"sources", s.sources},
          {"difference", s.sources[0] + " - " + s.sources[1]},
          {"ratings", ratings.size()},
          {"complete_cases", complete_cases.size()},
          {"seed", s.seed},
          {"arm_map", arm_map},
          {"dimensions", dims},
          {"superiority_percent", superiority}};
}

}  // namespace corpusforge::review

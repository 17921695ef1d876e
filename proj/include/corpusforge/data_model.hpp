#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace corpusforge::data {

enum class Kind { mcq, dialogue, fill_blank, passage };

std::string_view to_string(Kind kind);
std::optional<Kind> parse_kind(std::string_view text);

// Hex SHA-256 over kind + 0x1F + instruction + 0x1F + response.
std::string record_id(Kind kind, std::string_view instruction, std::string_view response);

struct Record {
  std::string id;
  std::string source;
  Kind kind = Kind::dialogue;
  std::string instruction;
  std::string response;
  std::string language = "und";
  std::size_t char_len = 0;
  std::map<std::string, std::string> meta;

  // Builds a record with id and char_len derived from the content.
  static Record make(Kind kind, std::string instruction, std::string response,
                     std::string source = {}, std::string language = "und",
                     std::map<std::string, std::string> meta = {});

  // Re-derives id and char_len after the text fields were edited.
  void refresh();

  bool operator==(const Record&) const = default;
};

enum class McqType { A1, A2 };

std::string_view to_string(McqType type);
std::optional<McqType> parse_mcq_type(std::string_view text);

struct McqItem {
  std::string id;
  std::string stem;
  // Ordered by label; labels are a subset of A..E.
  std::map<std::string, std::string> options;
  std::string gold;
  McqType qtype = McqType::A1;

  // Throws ValidationError unless gold is an option label and there are >= 2
  // options labelled A..E.
  void validate() const;
};

McqItem mcq_from_json(const nlohmann::json& j);
nlohmann::json mcq_to_json(const McqItem& item);

// Records in order with unique ids, plus the list of pipeline steps applied.
class Corpus {
 public:
  Corpus() = default;
  // Throws ValidationError on duplicate ids.
  explicit Corpus(std::vector<Record> records, std::vector<std::string> provenance = {});

  const std::vector<Record>& records() const { return records_; }
  const std::vector<std::string>& provenance() const { return provenance_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const Record& operator[](std::size_t i) const { return records_[i]; }

  const Record* find(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id) != nullptr; }

  // Copy with one more provenance step recorded.
  Corpus with_step(std::string step) const;

  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

 private:
  std::vector<Record> records_;
  std::vector<std::string> provenance_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct IngestIssue {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

struct IngestResult {
  Corpus corpus;
  std::vector<IngestIssue> errors;
};

// One JSON object per line. Blank lines are skipped; every other line either
// becomes a record or an entry in `errors`.
IngestResult ingest_jsonl(std::istream& source, std::optional<Kind> kind_hint = std::nullopt);
IngestResult ingest_jsonl_file(const std::string& path, std::optional<Kind> kind_hint = std::nullopt);

Record record_from_json(const nlohmann::json& j, std::optional<Kind> kind_hint = std::nullopt);
nlohmann::ordered_json record_to_json(const Record& record);
// Canonical single-line serialization (no trailing newline).
std::string canonical_line(const Record& record);

// Writes canonical lines; returns the line count. Throws IoError on failure.
std::size_t write_jsonl(const Corpus& corpus, std::ostream& sink);
std::size_t write_jsonl_file(const Corpus& corpus, const std::string& path);

struct LengthStats {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // population
  std::size_t min = 0;
  std::size_t max = 0;
};

LengthStats length_stats(const std::vector<std::size_t>& lengths);
LengthStats corpus_length_stats(const Corpus& corpus);

nlohmann::json to_json(const LengthStats& stats);

}  // namespace corpusforge::data

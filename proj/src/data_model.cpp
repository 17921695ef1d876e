#include "corpusforge/data_model.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "corpusforge/common/errors.hpp"
#include "corpusforge/common/hash.hpp"
#include "corpusforge/common/utf8.hpp"

namespace corpusforge::data {

using nlohmann::json;

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::mcq: return "mcq";
    case Kind::dialogue: return "dialogue";
    case Kind::fill_blank: return "fill_blank";
    case Kind::passage: return "passage";
  }
  return "dialogue";
}

std::optional<Kind> parse_kind(std::string_view text) {
  for (Kind k : {Kind::mcq, Kind::dialogue, Kind::fill_blank, Kind::passage}) {
    if (text == to_string(k)) return k;
  }
  return std::nullopt;
}

std::string record_id(Kind kind, std::string_view instruction, std::string_view response) {
  std::string buf;
  buf.reserve(instruction.size() + response.size() + 16);
  buf.append(to_string(kind));
  buf.push_back('\x1f');
  buf.append(instruction);
  buf.push_back('\x1f');
  buf.append(response);
  return sha256_hex(buf);
}

Record Record::make(Kind kind, std::string instruction, std::string response, std::string source,
                    std::string language, std::map<std::string, std::string> meta) {
  Record r;
  r.kind = kind;
  r.instruction = std::move(instruction);
  r.response = std::move(response);
  r.source = std::move(source);
  r.language = std::move(language);
  r.meta = std::move(meta);
  r.refresh();
  return r;
}

void Record::refresh() {
  id = record_id(kind, instruction, response);
  char_len = utf8::count_scalars(instruction) + utf8::count_scalars(response);
}

std::string_view to_string(McqType type) { return type == McqType::A1 ? "A1" : "A2"; }

std::optional<McqType> parse_mcq_type(std::string_view text) {
  if (text == "A1") return McqType::A1;
  if (text == "A2") return McqType::A2;
  return std::nullopt;
}

void McqItem::validate() const {
  if (options.size() < 2) throw ValidationError("MCQ item needs at least two options");
  for (const auto& [label, text] : options) {
    if (label.size() != 1 || label[0] < 'A' || label[0] > 'E') {
      throw ValidationError("MCQ option label must be one of A-E, got '" + label + "'");
    }
  }
  if (!options.contains(gold)) throw ValidationError("MCQ gold label '" + gold + "' is not an option");
}

McqItem mcq_from_json(const json& j) {
  McqItem item;
  if (!j.is_object()) throw ValidationError("MCQ item must be a JSON object");
  if (!j.contains("stem") || !j["stem"].is_string()) throw ValidationError("MCQ item missing stem");
  item.stem = j["stem"].get<std::string>();
  if (!j.contains("options") || !j["options"].is_object()) {
    throw ValidationError("MCQ item options must be an object of label -> text");
  }
  for (const auto& [label, text] : j["options"].items()) {
    if (!text.is_string()) throw ValidationError("MCQ option text must be a string");
    item.options[label] = text.get<std::string>();
  }
  item.gold = j.value("gold", std::string{});
  const auto qtype = parse_mcq_type(j.value("qtype", std::string{"A1"}));
  if (!qtype) throw ValidationError("MCQ qtype must be A1 or A2");
  item.qtype = *qtype;
  item.id = j.value("id", std::string{});
  if (item.id.empty()) {
    std::string folded = item.stem;
    for (const auto& [label, text] : item.options) folded += "\x1f" + label + "\x1f" + text;
    item.id = record_id(Kind::mcq, folded, item.gold);
  }
  item.validate();
  return item;
}

json mcq_to_json(const McqItem& item) {
  json options = json::object();
  for (const auto& [label, text] : item.options) options[label] = text;
  return json{{"id", item.id},
              {"stem", item.stem},
              {"options", options},
              {"gold", item.gold},
              {"qtype", std::string(to_string(item.qtype))}};
}

Corpus::Corpus(std::vector<Record> records, std::vector<std::string> provenance)
    : records_(std::move(records)), provenance_(std::move(provenance)) {
  index_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (!index_.emplace(records_[i].id, i).second) {
      throw ValidationError("duplicate record id in corpus: " + records_[i].id);
    }
  }
}

const Record* Corpus::find(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &records_[it->second];
}

Corpus Corpus::with_step(std::string step) const {
  Corpus c = *this;
  c.provenance_.push_back(std::move(step));
  return c;
}

namespace {

std::string required_string(const json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("missing ") + key + " field");
  if (!j[key].is_string()) throw ValidationError(std::string(key) + " must be a string");
  return j[key].get<std::string>();
}

std::string optional_string(const json& j, const char* key, std::string fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  if (!j[key].is_string()) throw ValidationError(std::string(key) + " must be a string");
  return j[key].get<std::string>();
}

}  // namespace

Record record_from_json(const json& j, std::optional<Kind> kind_hint) {
  if (!j.is_object()) throw ValidationError("record must be a JSON object");
  std::optional<Kind> kind = kind_hint;
  if (j.contains("kind")) {
    kind = parse_kind(required_string(j, "kind"));
    if (!kind) throw ValidationError("unknown kind '" + j["kind"].get<std::string>() + "'");
  }
  if (!kind) throw ValidationError("missing kind field");

  Record r;
  r.kind = *kind;
  r.instruction = required_string(j, "instruction");
  if (r.kind == Kind::passage) {
    r.response = optional_string(j, "response", "");
  } else {
    r.response = required_string(j, "response");
  }
  if (!utf8::is_valid(r.instruction) || !utf8::is_valid(r.response)) {
    throw ValidationError("text fields are not valid UTF-8");
  }
  r.source = optional_string(j, "source", "");
  r.language = optional_string(j, "language", "und");
  if (j.contains("meta") && !j["meta"].is_null()) {
    if (!j["meta"].is_object()) throw ValidationError("meta must be an object");
    for (const auto& [k, v] : j["meta"].items()) {
      r.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  r.refresh();
  if (j.contains("id") && !j["id"].is_null()) {
    const std::string supplied = required_string(j, "id");
    if (supplied != r.id) {
      throw ValidationError("supplied id " + supplied + " does not match content hash " + r.id);
    }
  }
  return r;
}

IngestResult ingest_jsonl(std::istream& source, std::optional<Kind> kind_hint) {
  std::vector<Record> records;
  std::unordered_map<std::string, std::size_t> first_line;
  IngestResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      result.errors.push_back({line_no, std::string("malformed JSON: ") + e.what()});
      continue;
    }
    try {
      Record r = record_from_json(j, kind_hint);
      const auto [it, inserted] = first_line.emplace(r.id, line_no);
      if (!inserted) {
        result.errors.push_back(
            {line_no, "exact duplicate of line " + std::to_string(it->second)});
        continue;
      }
      records.push_back(std::move(r));
    } catch (const Error& e) {
      result.errors.push_back({line_no, e.what()});
    }
  }
  if (source.bad()) throw IoError("failed reading JSONL stream");
  result.corpus = Corpus(std::move(records));
  return result;
}

IngestResult ingest_jsonl_file(const std::string& path, std::optional<Kind> kind_hint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  IngestResult r = ingest_jsonl(in, kind_hint);
  r.corpus = r.corpus.with_step("ingest:" + path);
  return r;
}

nlohmann::ordered_json record_to_json(const Record& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["kind"] = std::string(to_string(r.kind));
  j["source"] = r.source;
  j["language"] = r.language;
  j["instruction"] = r.instruction;
  j["response"] = r.response;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.meta) meta[k] = v;
  j["meta"] = std::move(meta);
  return j;
}

std::string canonical_line(const Record& record) {
  // dump() escapes control characters, so embedded newlines stay on one line.
  return record_to_json(record).dump(-1, ' ', false, json::error_handler_t::strict);
}

std::size_t write_jsonl(const Corpus& corpus, std::ostream& sink) {
  std::size_t lines = 0;
  for (const Record& r : corpus) {
    sink << canonical_line(r) << '\n';
    ++lines;
  }
  sink.flush();
  if (!sink) throw IoError("failed writing JSONL sink");
  return lines;
}

std::size_t write_jsonl_file(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return write_jsonl(corpus, out);
}

LengthStats length_stats(const std::vector<std::size_t>& lengths) {
  if (lengths.empty()) throw ValidationError("length statistics need a non-empty corpus");
  LengthStats s;
  s.n = lengths.size();
  s.min = lengths.front();
  s.max = lengths.front();
  double sum = 0.0;
  for (std::size_t len : lengths) {
    sum += static_cast<double>(len);
    s.min = std::min(s.min, len);
    s.max = std::max(s.max, len);
  }
  s.mean = sum / static_cast<double>(s.n);
  double ss = 0.0;
  for (std::size_t len : lengths) {
    const double d = static_cast<double>(len) - s.mean;
    ss += d * d;
  }
  s.sd = std::sqrt(ss / static_cast<double>(s.n));
  return s;
}

LengthStats corpus_length_stats(const Corpus& corpus) {
  std::vector<std::size_t> lengths;
  lengths.reserve(corpus.size());
  for (const Record& r : corpus) lengths.push_back(r.char_len);
  return length_stats(lengths);
}

json to_json(const LengthStats& s) {
  return json{{"n", s.n}, {"mean", s.mean}, {"sd", s.sd}, {"min", s.min}, {"max", s.max}};
}

}  // namespace corpusforge::data

#include <cstdlib>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "corpusforge/augmentation.hpp"
#include "corpusforge/bench_harness.hpp"
#include "corpusforge/common/log.hpp"
#include "corpusforge/common/utf8.hpp"
#include "corpusforge/data_model.hpp"
#include "corpusforge/dedup.hpp"
#include "corpusforge/distillation.hpp"
#include "corpusforge/endpoint_config.hpp"
#include "corpusforge/filtering.hpp"
#include "corpusforge/judging.hpp"
#include "corpusforge/review_server.hpp"
#include "corpusforge/statistics.hpp"

namespace cf = corpusforge;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string templates;
  std::string log_level = "warn";
  bool strict = false;
};

cf::llm::ClientFactory make_factory(const Common& c) {
  if (c.config.empty()) return cf::llm::ClientFactory(cf::llm::ToolkitConfig{});
  return cf::llm::ClientFactory(cf::llm::load_config(c.config));
}

cf::augment::TemplateLibrary templates_for(const Common& c) {
  if (c.templates.empty()) return cf::augment::TemplateLibrary::builtin();
  return cf::augment::TemplateLibrary::with_overrides(c.templates);
}

cf::data::Corpus read_corpus(const std::string& path, const Common& c,
                             std::optional<cf::data::Kind> hint = std::nullopt) {
  auto result = cf::data::ingest_jsonl_file(path, hint);
  for (const auto& e : result.errors) {
    cf::log::warn(path + ":" + std::to_string(e.line) + ": " + e.reason);
  }
  if (c.strict && !result.errors.empty()) {
    throw cf::ValidationError(std::to_string(result.errors.size()) + " invalid line(s) in " + path);
  }
  return std::move(result.corpus);
}

void write_json(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw cf::IoError("cannot write " + path);
}

void write_text(const std::string& text, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw cf::IoError("cannot write " + path);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::optional<double> to_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

// Rows of a comma-separated file. A first row that is not fully numeric is
// returned separately as the header.
std::pair<std::vector<std::string>, std::vector<std::vector<std::string>>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cf::IoError("cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    rows.push_back(split_csv_line(line));
  }
  std::vector<std::string> header;
  if (!rows.empty()) {
    for (const auto& cell : rows.front()) {
      if (!to_number(cell)) {
        header = rows.front();
        rows.erase(rows.begin());
        break;
      }
    }
  }
  return {header, rows};
}

// "file.csv" (first column), "file.csv:name" or "file.csv:2" (0-based).
std::vector<double> read_csv_column(const std::string& spec) {
  std::string path = spec, column;
  if (auto colon = spec.rfind(':'); colon != std::string::npos && colon > 1) {
    path = spec.substr(0, colon);
    column = spec.substr(colon + 1);
  }
  auto [header, rows] = read_csv(path);
  std::size_t idx = 0;
  if (!column.empty()) {
    auto it = std::find(header.begin(), header.end(), column);
    if (it != header.end()) {
      idx = static_cast<std::size_t>(it - header.begin());
    } else if (auto n = to_number(column)) {
      idx = static_cast<std::size_t>(*n);
    } else {
      throw cf::ValidationError("no column " + column + " in " + path);
    }
  }
  std::vector<double> values;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (idx >= rows[r].size()) throw cf::ValidationError(path + ": row " + std::to_string(r + 1) + " is short");
    auto v = to_number(rows[r][idx]);
    if (!v) throw cf::ValidationError(path + ": non-numeric value '" + rows[r][idx] + "'");
    values.push_back(*v);
  }
  return values;
}

std::vector<json> read_json_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw cf::IoError("cannot open " + path);
  std::vector<json> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw cf::ValidationError(path + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

void emit_report(const cf::bench::MetricReport& report, const std::string& out, const std::string& table) {
  if (!table.empty()) write_text(cf::bench::render_table(report), table);
  if (out.empty() || out == "-") {
    std::cout << cf::bench::render_table(report);
  } else {
    write_text(cf::bench::render_json(report), out);
  }
}

std::optional<cf::log::Level> parse_level(const std::string& s) {
  static const std::map<std::string, cf::log::Level> levels{{"debug", cf::log::Level::debug},
                                                            {"info", cf::log::Level::info},
                                                            {"warn", cf::log::Level::warn},
                                                            {"error", cf::log::Level::error},
                                                            {"off", cf::log::Level::off}};
  auto it = levels.find(s);
  if (it == levels.end()) return std::nullopt;
  return it->second;
}

cf::review::ReviewServer* active_server = nullptr;

void on_signal(int) {
  if (active_server) active_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Corpus curation and LLM evaluation toolkit"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config, "Endpoint configuration (JSON)");
  app.add_option("--templates", common.templates, "Directory of prompt template overrides");
  app.add_option("--log-level", common.log_level, "debug, info, warn, error or off");
  app.add_flag("--strict", common.strict, "Fail on any invalid input line");

  std::function<void()> run;

  // filter
  auto* filter_cmd = app.add_subcommand("filter", "Keyword filtering with positive and negative lists");
  std::string f_rules, f_in, f_kept, f_dropped, f_report;
  filter_cmd->add_option("--rules", f_rules)->required();
  filter_cmd->add_option("--in", f_in)->required();
  filter_cmd->add_option("--out-kept", f_kept)->required();
  filter_cmd->add_option("--out-dropped", f_dropped);
  filter_cmd->add_option("--report", f_report);
  filter_cmd->callback([&] {
    run = [&] {
      const auto corpus = read_corpus(f_in, common);
      const auto result = cf::filter::apply_filter(corpus, cf::filter::load_rules(f_rules));
      cf::data::write_jsonl_file(result.kept, f_kept);
      if (!f_dropped.empty()) cf::data::write_jsonl_file(result.dropped, f_dropped);
      if (!f_report.empty()) write_json(cf::filter::to_json(result.report), f_report);
    };
  });

  // dedup
  auto* dedup_cmd = app.add_subcommand("dedup", "Embedding-based semantic deduplication");
  std::string d_in, d_out, d_removed, d_groups, d_endpoint, d_k = "auto";
  cf::dedup::SemDedupOptions d_opts;
  dedup_cmd->add_option("--in", d_in)->required();
  dedup_cmd->add_option("--out", d_out)->required();
  dedup_cmd->add_option("--removed", d_removed);
  dedup_cmd->add_option("--groups", d_groups, "Write duplicate groups as JSON");
  dedup_cmd->add_option("--threshold", d_opts.threshold)->capture_default_str();
  dedup_cmd->add_option("--k", d_k, "Cluster count or auto")->capture_default_str();
  dedup_cmd->add_option("--seed", d_opts.seed)->capture_default_str();
  dedup_cmd->add_option("--max-iter", d_opts.max_iter)->capture_default_str();
  dedup_cmd->add_option("--embed-endpoint", d_endpoint)->required();
  dedup_cmd->callback([&] {
    run = [&] {
      if (d_k != "auto") {
        auto k = to_number(d_k);
        if (!k || *k < 1) throw cf::ValidationError("--k must be a positive integer or auto");
        d_opts.k = static_cast<std::size_t>(*k);
      }
      const auto corpus = read_corpus(d_in, common);
      auto factory = make_factory(common);
      auto client = factory.client(d_endpoint);
      cf::dedup::SemDedupResult result;
      if (corpus.empty()) {
        result.outcome.kept = corpus;
      } else {
        result = cf::dedup::semantic_dedup(corpus, cf::dedup::embed_corpus(corpus, *client), d_opts);
      }
      cf::data::write_jsonl_file(result.outcome.kept.with_step("dedup"), d_out);
      if (!d_removed.empty()) cf::data::write_jsonl_file(result.outcome.removed, d_removed);
      if (!d_groups.empty()) {
        json groups = json::array();
        for (const auto& g : result.outcome.groups) groups.push_back(cf::dedup::to_json(g));
        write_json({{"k", result.clusters.k},
                    {"iterations", result.clusters.iterations_run},
                    {"converged", result.clusters.converged},
                    {"groups", groups}},
                   d_groups);
      }
    };
  });

  // augment
  auto* aug_cmd = app.add_subcommand("augment", "Prompt-driven data augmentation");
  std::string a_mode, a_in, a_out, a_endpoint, a_teacher, a_report;
  std::size_t a_target = 0;
  bool a_keep_others = false;
  cf::augment::SynthesisOptions a_synth;
  aug_cmd->add_option("--mode", a_mode)->required()->check(
      CLI::IsMember({"passage-qa", "fb", "mcq-explain", "synthesize"}));
  aug_cmd->add_option("--in", a_in)->required();
  aug_cmd->add_option("--out", a_out)->required();
  aug_cmd->add_option("--endpoint", a_endpoint)->required();
  aug_cmd->add_option("--teacher", a_teacher, "Answering endpoint (mcq-explain, synthesize)");
  aug_cmd->add_option("--target", a_target, "Synthesized question count");
  aug_cmd->add_option("--seed", a_synth.seed)->capture_default_str();
  aug_cmd->add_option("--report", a_report);
  aug_cmd->add_flag("--keep-others", a_keep_others, "Copy non-passage input records to the output");
  aug_cmd->callback([&] {
    run = [&] {
      auto factory = make_factory(common);
      const auto templates = templates_for(common);
      auto client = factory.client(a_endpoint);
      auto teacher = a_teacher.empty() ? client : factory.client(a_teacher);
      cf::augment::AugmentRun result;
      cf::data::Corpus input;
      if (a_mode == "mcq-explain") {
        std::vector<cf::data::McqItem> items;
        for (const auto& j : read_json_lines(a_in)) items.push_back(cf::data::mcq_from_json(j));
        result = cf::augment::augment_mcq(items, *client, *teacher, templates);
      } else {
        input = read_corpus(a_in, common);
        if (a_mode == "passage-qa") {
          result = cf::augment::augment_passage_qa(input, *client, templates);
        } else if (a_mode == "fb") {
          result = cf::augment::augment_fill_blanks(input, *client, templates);
        } else {
          result = cf::augment::synthesize_dialogues(input, *client, *teacher, a_target, templates, a_synth);
        }
      }
      for (const auto& s : result.skipped) cf::log::info("augment: " + s);
      cf::data::Corpus out = result.output;
      if (a_keep_others && a_mode != "mcq-explain") {
        std::vector<cf::data::Record> merged;
        const bool passages_only = a_mode != "synthesize";
        for (const auto& r : input) {
          if (!passages_only || r.kind != cf::data::Kind::passage) merged.push_back(r);
        }
        for (const auto& r : result.output) {
          if (!std::any_of(merged.begin(), merged.end(), [&](const auto& m) { return m.id == r.id; })) {
            merged.push_back(r);
          }
        }
        out = cf::data::Corpus(std::move(merged), result.output.provenance());
      }
      cf::data::write_jsonl_file(out, a_out);
      if (!a_report.empty()) {
        write_json({{"mode", a_mode}, {"produced", result.produced}, {"written", out.size()},
                    {"skipped", result.skipped}},
                   a_report);
      }
    };
  });

  // distill
  auto* distill_cmd = app.add_subcommand("distill", "Self-distillation response refinement");
  std::string s_in, s_out, s_endpoint, s_report, s_system;
  distill_cmd->add_option("--in", s_in)->required();
  distill_cmd->add_option("--out", s_out)->required();
  distill_cmd->add_option("--endpoint", s_endpoint)->required();
  distill_cmd->add_option("--report", s_report);
  distill_cmd->add_option("--system", s_system, "System message for the first pass");
  distill_cmd->callback([&] {
    run = [&] {
      const auto corpus = read_corpus(s_in, common);
      auto factory = make_factory(common);
      auto client = factory.client(s_endpoint);
      auto result = cf::distill::distill_corpus(corpus, *client, templates_for(common), {s_system});
      cf::data::write_jsonl_file(result.distilled, s_out);
      if (!s_report.empty()) {
        json report = cf::distill::to_json(result.report);
        const auto st = client->stats();
        report["network_calls"] = st.network_calls;
        report["cache_hits"] = st.cache_hits;
        write_json(report, s_report);
      }
    };
  });

  // judge
  auto* judge_cmd = app.add_subcommand("judge", "Score dialogue answers with an LLM judge");
  std::string j_bench, j_answers, j_endpoint, j_out;
  std::size_t j_trials = 1;
  judge_cmd->add_option("--bench", j_bench)->required();
  judge_cmd->add_option("--answers", j_answers, "JSONL of {\"id\"?, \"answer\"}")->required();
  judge_cmd->add_option("--endpoint", j_endpoint)->required();
  judge_cmd->add_option("--trials", j_trials)->capture_default_str();
  judge_cmd->add_option("--out", j_out);
  judge_cmd->callback([&] {
    run = [&] {
      const auto items = cf::bench::load_dialogue_dataset(j_bench);
      const auto lines = read_json_lines(j_answers);
      std::map<std::string, std::string> by_id;
      std::vector<std::string> answers;
      for (const auto& l : lines) {
        if (l.contains("id")) by_id[l.at("id").get<std::string>()] = l.at("answer").get<std::string>();
        answers.push_back(l.at("answer").get<std::string>());
      }
      if (by_id.size() == lines.size() && !lines.empty()) {
        answers.clear();
        for (const auto& item : items) {
          auto it = by_id.find(item.id);
          if (it == by_id.end()) throw cf::ValidationError("no answer for item " + item.id);
          answers.push_back(it->second);
        }
      }
      auto factory = make_factory(common);
      auto client = factory.client(j_endpoint);
      const auto judgement = cf::judge::judge_dialogue(items, answers, *client, templates_for(common), j_trials);
      write_json(cf::judge::to_json(judgement), j_out);
    };
  });

  // compare
  auto* cmp_cmd = app.add_subcommand("compare", "Pairwise preference with order swap");
  std::string c_pairs, c_endpoint, c_out;
  std::size_t c_trials = 3;
  bool c_swap = false;
  cmp_cmd->add_option("--pairs", c_pairs, "JSONL of {\"question\", \"a\", \"b\"}")->required();
  cmp_cmd->add_option("--endpoint", c_endpoint)->required();
  cmp_cmd->add_option("--trials", c_trials)->capture_default_str();
  cmp_cmd->add_flag("--swap-orders", c_swap);
  cmp_cmd->add_option("--out", c_out);
  cmp_cmd->callback([&] {
    run = [&] {
      auto factory = make_factory(common);
      auto client = factory.client(c_endpoint);
      const auto templates = templates_for(common);
      cf::judge::PairwiseTally total;
      json pairs = json::array();
      for (const auto& p : read_json_lines(c_pairs)) {
        auto tally = cf::judge::pairwise_compare(p.at("question").get<std::string>(), p.at("a").get<std::string>(),
                                                 p.at("b").get<std::string>(), *client, templates, c_trials, c_swap);
        pairs.push_back(cf::judge::to_json(tally));
        total += tally;
      }
      json out = cf::judge::to_json(total);
      out.erase("verdicts");
      write_json({{"judge_model", client->endpoint().model}, {"total", out}, {"pairs", pairs}}, c_out);
    };
  });

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "Statistical analyses");
  stats_cmd->require_subcommand(1);
  auto* wil_cmd = stats_cmd->add_subcommand("wilcoxon", "Paired Wilcoxon signed-rank test");
  std::string w_a, w_b, w_method = "auto", w_out;
  bool w_pratt = false;
  wil_cmd->add_option("--a", w_a, "CSV column: file[:name|index]")->required();
  wil_cmd->add_option("--b", w_b, "CSV column: file[:name|index]")->required();
  wil_cmd->add_option("--method", w_method)->check(CLI::IsMember({"auto", "exact", "normal"}));
  wil_cmd->add_flag("--pratt", w_pratt, "Rank zero differences (Pratt) instead of dropping them");
  wil_cmd->add_option("--out", w_out);
  wil_cmd->callback([&] {
    run = [&] {
      cf::stats::WilcoxonOptions o;
      o.zero_method = w_pratt ? cf::stats::ZeroMethod::pratt : cf::stats::ZeroMethod::wilcox;
      o.method = w_method == "exact"    ? cf::stats::WilcoxonMethod::exact
                 : w_method == "normal" ? cf::stats::WilcoxonMethod::normal
                                        : cf::stats::WilcoxonMethod::automatic;
      const auto a = read_csv_column(w_a);
      const auto b = read_csv_column(w_b);
      write_json(cf::stats::to_json(cf::stats::wilcoxon_signed_rank(a, b, o)), w_out);
    };
  });
  auto* icc_cmd = stats_cmd->add_subcommand("icc", "ICC(2,1) across readers");
  std::string i_grid, i_out;
  icc_cmd->add_option("--grid", i_grid, "CSV with one row per reader, one column per case")->required();
  icc_cmd->add_option("--out", i_out);
  icc_cmd->callback([&] {
    run = [&] {
      auto [header, rows] = read_csv(i_grid);
      std::vector<std::vector<double>> grid;
      for (const auto& row : rows) {
        std::vector<double> values;
        for (const auto& cell : row) {
          auto v = to_number(cell);
          if (!v) throw cf::ValidationError(i_grid + ": non-numeric value '" + cell + "'");
          values.push_back(*v);
        }
        grid.push_back(std::move(values));
      }
      write_json(cf::stats::to_json(cf::stats::icc_two_way(grid)), i_out);
    };
  });
  auto* len_cmd = stats_cmd->add_subcommand("lengths", "Character length statistics of a corpus");
  std::string l_in, l_field = "record", l_out;
  len_cmd->add_option("--in", l_in)->required();
  len_cmd->add_option("--field", l_field)->check(CLI::IsMember({"record", "instruction", "response"}));
  len_cmd->add_option("--out", l_out);
  len_cmd->callback([&] {
    run = [&] {
      const auto corpus = read_corpus(l_in, common);
      std::vector<std::size_t> lens;
      for (const auto& r : corpus) {
        lens.push_back(l_field == "record"        ? r.char_len
                       : l_field == "instruction" ? cf::utf8::count_scalars(r.instruction)
                                                  : cf::utf8::count_scalars(r.response));
      }
      write_json(cf::data::to_json(cf::data::length_stats(lens)), l_out);
    };
  });

  // eval-*
  std::string e_dataset, e_endpoint, e_judge, e_out, e_table, e_embed;
  std::size_t e_trials = 1;
  auto add_eval = [&](const std::string& name, const std::string& desc) {
    auto* cmd = app.add_subcommand(name, desc);
    cmd->add_option("--dataset", e_dataset)->required();
    cmd->add_option("--endpoint", e_endpoint)->required();
    cmd->add_option("--out", e_out, "JSON report (table on stdout when omitted)");
    cmd->add_option("--table", e_table, "Also write the text table here");
    return cmd;
  };
  auto* mcq_cmd = add_eval("eval-mcq", "Zero-shot multiple-choice accuracy");
  mcq_cmd->callback([&] {
    run = [&] {
      auto factory = make_factory(common);
      auto client = factory.client(e_endpoint);
      auto result = cf::bench::run_mcq(cf::bench::load_mcq_dataset(e_dataset), *client, templates_for(common));
      emit_report(result.report, e_out, e_table);
    };
  });
  auto* fb_cmd = add_eval("eval-fb", "Fill-in-the-blank text metrics");
  fb_cmd->add_option("--embed-endpoint", e_embed, "Token embeddings for BERTScore");
  fb_cmd->callback([&] {
    run = [&] {
      auto factory = make_factory(common);
      auto client = factory.client(e_endpoint);
      cf::bench::TokenEmbedder embedder;
      std::shared_ptr<cf::llm::LlmClient> embed_client;
      if (!e_embed.empty()) {
        embed_client = factory.client(e_embed);
        embedder = cf::bench::endpoint_token_embedder(*embed_client);
      }
      auto report = cf::bench::run_fb(cf::bench::load_fb_dataset(e_dataset), *client, templates_for(common), embedder);
      emit_report(report, e_out, e_table);
    };
  });
  auto* dlg_cmd = add_eval("eval-dialogue", "Open-ended answers scored by an LLM judge");
  dlg_cmd->add_option("--judge", e_judge)->required();
  dlg_cmd->add_option("--trials", e_trials)->capture_default_str();
  dlg_cmd->callback([&] {
    run = [&] {
      auto factory = make_factory(common);
      auto candidate = factory.client(e_endpoint);
      auto judge_client = factory.client(e_judge);
      auto result = cf::bench::run_dialogue(cf::bench::load_dialogue_dataset(e_dataset), *candidate, *judge_client,
                                            templates_for(common), e_trials);
      emit_report(result.report, e_out, e_table);
    };
  });

  // serve-review
  auto* serve_cmd = app.add_subcommand("serve-review", "Blinded human-review HTTP service");
  std::string r_dir, r_host = "127.0.0.1", r_static, r_client_config;
  int r_port = 8080;
  serve_cmd->add_option("--data-dir", r_dir)->required();
  serve_cmd->add_option("--port", r_port)->capture_default_str();
  serve_cmd->add_option("--host", r_host)->capture_default_str();
  serve_cmd->add_option("--static", r_static, "Directory served at /");
  serve_cmd->add_option("--client-config", r_client_config, "JSON file served at /config.json");
  serve_cmd->callback([&] {
    run = [&] {
      cf::review::ReviewStore store(r_dir);
      cf::review::ServerOptions opts;
      if (!r_static.empty()) opts.static_dir = r_static;
      if (!r_client_config.empty()) {
        std::ifstream in(r_client_config);
        if (!in) throw cf::IoError("cannot open " + r_client_config);
        opts.client_config = json::parse(in);
      }
      cf::review::ReviewServer server(store, opts);
      const int port = server.bind(r_host, r_port);
      if (port < 0) throw cf::IoError("cannot bind " + r_host + ":" + std::to_string(r_port));
      active_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "review service listening on http://" << r_host << ":" << port << "\n";
      server.serve();
      active_server = nullptr;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  const auto level = parse_level(common.log_level);
  if (!level) {
    std::cerr << "unknown log level " << common.log_level << "\n";
    return 2;
  }
  cf::log::set_level(*level);
  try {
    run();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

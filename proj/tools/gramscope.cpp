// gramscope command-line entry point.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gramscope/gramscope.hpp"
#include "gramscope/http_server.hpp"

namespace fs = std::filesystem;
using namespace gramscope;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

struct Globals {
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;

  std::uint64_t resolved_seed() const {
    if (seed) return *seed;
    if (const char* env = std::getenv("GRAMSCOPE_SEED"); env && *env) {
      char* end = nullptr;
      const auto v = std::strtoull(env, &end, 10);
      if (*end != '\0') fail(ErrorKind::Usage, "GRAMSCOPE_SEED is not an unsigned integer");
      return v;
    }
    return 0;
  }

  fs::path out(const std::string& name) const { return fs::path(out_dir) / name; }
};

// Writes `content` under the output directory and records it in the manifest.
void emit(const Globals& g, RunManifest& m, const std::string& name, const std::string& content) {
  const auto path = g.out(name);
  write_file(path, content);
  m.add_output(path);
}

std::vector<fs::path> collect_cha_files(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      for (const auto& e : fs::recursive_directory_iterator(in))
        if (e.is_regular_file() && e.path().extension() == ".cha") files.push_back(e.path());
    } else if (fs::exists(in)) {
      files.push_back(in);
    } else {
      fail(ErrorKind::UnreadableFile, "no such input " + in);
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) fail(ErrorKind::EmptyInput, "no .cha files found");
  return files;
}

LabeledData load_labeled(const std::string& items, const std::string& gold) {
  const auto it = load_items_jsonl(items);
  const auto gd = load_gold_jsonl(gold);
  auto data = align_gold(it, gd);
  if (data.items.empty()) fail(ErrorKind::EmptyInput, "no items have a gold label");
  return data;
}

std::vector<Bigram> load_bigrams(const std::string& path) {
  if (path.empty()) return default_dialect_bigrams();
  std::vector<Bigram> out;
  for (const auto& line : split_lines(read_file(path))) {
    const auto words = split_whitespace(line);
    if (words.empty() || words[0].starts_with("#")) continue;
    if (words.size() != 2) fail(ErrorKind::MalformedRecord, "bigram lines need exactly two words: " + line);
    out.emplace_back(words[0], words[1]);
  }
  return out;
}

// Options shared by every command that trains models.
struct TrainOptions {
  std::string model = "svm";
  std::size_t ngram = 5;
  std::size_t context = 0;
  std::size_t bpe_vocab = kDefaultBpeVocabSize;
  double C = 1.0;
  bool early_stopping = false;
  std::size_t patience = 5;
  std::string tokenizer;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--model", model, "majority or svm")->check(CLI::IsMember({"majority", "svm"}));
    cmd->add_option("--ngram", ngram, "maximum n-gram order")->check(CLI::Range(1, 10));
    cmd->add_option("--context", context, "preceding turns included in the features");
    cmd->add_option("--bpe-vocab", bpe_vocab, "tokenizer vocabulary size");
    cmd->add_option("--C", C, "SVM regularisation constant")->check(CLI::PositiveNumber);
    cmd->add_flag("--early-stopping", early_stopping, "stop on validation PCC");
    cmd->add_option("--patience", patience, "early stopping patience");
    cmd->add_option("--tokenizer", tokenizer, "pretrained tokenizer JSON (otherwise fitted on training data)");
  }

  TrainSpec spec(std::uint64_t seed) const {
    TrainSpec s;
    s.kind = parse_model_kind(model);
    s.features.max_n = ngram;
    s.features.context_turns = context;
    s.features.bpe_vocab_size = bpe_vocab;
    s.svm.C = C;
    s.svm.early_stopping.enabled = early_stopping;
    s.svm.early_stopping.patience = patience;
    s.svm.seed = seed;
    return s;
  }

  std::optional<BpeModel> pretrained() const {
    if (tokenizer.empty()) return std::nullopt;
    try {
      return BpeModel::from_json(Json::parse(read_file(tokenizer)));
    } catch (const Json::exception& e) {
      fail(ErrorKind::MalformedRecord, tokenizer + ": " + e.what());
    }
  }

  CvConfig cv(std::uint64_t seed, std::size_t folds) const {
    CvConfig c;
    c.train = spec(seed);
    c.n_folds = folds;
    c.seed = seed;
    c.bootstrap.seed = seed;
    c.tokenizer = pretrained();
    return c;
  }
};

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  for (auto part : detail::split_fields(s, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stoul(part, &pos));
      if (pos != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      fail(ErrorKind::Usage, "invalid integer list '" + s + "'");
    }
  }
  if (out.empty()) fail(ErrorKind::Usage, "empty list");
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  for (auto part : detail::split_fields(s, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(part, &pos));
      if (pos != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      fail(ErrorKind::Usage, "invalid number list '" + s + "'");
    }
  }
  if (out.empty()) fail(ErrorKind::Usage, "empty list");
  return out;
}

// Items x annotators from gold-schema files; records without an annotator
// field are attributed to their file's stem.
AnnotationMatrix annotation_matrix(const std::vector<std::string>& files, RunManifest& m) {
  std::map<std::string, std::map<std::string, Label>> votes;
  std::set<std::string> annotators;
  for (const auto& f : files) {
    m.add_input(f);
    for (const auto& gd : load_gold_jsonl(f)) {
      const std::string who = gd.annotator.value_or(fs::path(f).stem().string());
      votes[gd.item_id][who] = gd.label;
      annotators.insert(who);
    }
  }
  AnnotationMatrix matrix;
  for (const auto& [item, by] : votes) {
    auto& row = matrix.emplace_back();
    for (const auto& a : annotators) {
      auto it = by.find(a);
      row.push_back(it == by.end() ? std::nullopt : std::optional<Label>(it->second));
    }
  }
  return matrix;
}

std::string sweep_json_rows(std::span<const SweepRow> rows) {
  OrderedJson arr = OrderedJson::array();
  for (const auto& r : rows) arr.push_back({{"value", r.value}, {"pcc_mean", r.pcc.mean}, {"pcc_sd", r.pcc.sd},
                                            {"fold_pcc", r.fold_pcc}});
  return arr.dump(2) + "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"gramscope: grammaticality annotation and classification toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML configuration file; flags override it");
  Globals g;
  app.add_option("--out-dir", g.out_dir, "directory for every output file");
  app.add_option("--seed", g.seed, "seed for all randomness (fallback: GRAMSCOPE_SEED, then 0)");

  // ingest -------------------------------------------------------------------
  auto* ingest = app.add_subcommand("ingest", "parse CHAT transcripts into corpus JSONL");
  std::vector<std::string> ingest_in;
  std::string ingest_out = "corpus.jsonl", ingest_corpus;
  bool drop_retraced = false, no_replacements = false;
  ingest->add_option("--in", ingest_in, ".cha files or directories")->required();
  ingest->add_option("--out", ingest_out, "output file name");
  ingest->add_option("--corpus", ingest_corpus, "corpus name (default: @ID field or parent directory)");
  ingest->add_flag("--drop-retraced", drop_retraced, "remove retraced material");
  ingest->add_flag("--no-replacements", no_replacements, "keep the original form of [: x] replacements");

  // screen-dialect ------------------------------------------------------------
  auto* screen = app.add_subcommand("screen-dialect", "flag corpora with dialect-indicative caregiver bigrams");
  std::string screen_corpus, screen_bigrams, screen_filtered;
  double screen_threshold = kDefaultDialectThreshold;
  screen->add_option("--corpus", screen_corpus, "corpus JSONL")->required();
  screen->add_option("--bigrams", screen_bigrams, "file of indicative bigrams, one pair per line");
  screen->add_option("--threshold", screen_threshold, "hits per 10k caregiver utterances");
  screen->add_option("--filtered-out", screen_filtered, "write the retained transcripts to this file");

  // prepare ---------------------------------------------------------------------
  auto* prepare = app.add_subcommand("prepare", "filter child utterances, build context windows and chunks");
  std::string prep_corpus, prep_out = "items.jsonl", prep_screen;
  std::size_t prep_chunk = kDefaultChunkSize, prep_context = 10;
  prepare->add_option("--corpus", prep_corpus, "corpus JSONL")->required();
  prepare->add_option("--out", prep_out, "output items file name");
  prepare->add_option("--chunk-size", prep_chunk, "items per chunk")->check(CLI::PositiveNumber);
  prepare->add_option("--context", prep_context, "stored preceding turns per item");
  prepare->add_option("--screen-report", prep_screen, "dialect report; excluded corpora are dropped");

  // export-sheets ---------------------------------------------------------------
  auto* sheets = app.add_subcommand("export-sheets", "write one annotation TSV per chunk");
  std::string sheets_items;
  sheets->add_option("--items", sheets_items, "items JSONL")->required();

  // serve ------------------------------------------------------------------------
  auto* serve_cmd = app.add_subcommand("serve", "run the annotation service");
  std::string serve_dir, serve_ui, serve_host = "127.0.0.1", serve_policy = "majority";
  int serve_port = 7171;
  std::size_t serve_quorum = kDefaultQuorum, serve_context = kDefaultVisibleContext;
  serve_cmd->add_option("--data-dir", serve_dir, "directory with items.jsonl; holds the event log")->required();
  serve_cmd->add_option("--port", serve_port, "TCP port")->check(CLI::Range(1, 65535));
  serve_cmd->add_option("--host", serve_host, "bind address");
  serve_cmd->add_option("--policy", serve_policy, "adjudication queue policy")
      ->check(CLI::IsMember({"majority", "unanimity"}));
  serve_cmd->add_option("--quorum", serve_quorum, "annotators needed before resolution")->check(CLI::PositiveNumber);
  serve_cmd->add_option("--visible-context", serve_context, "context turns shown by default");
  serve_cmd->add_option("--ui-dir", serve_ui, "static UI bundle served at /");

  // train-bpe -------------------------------------------------------------------
  auto* bpe_cmd = app.add_subcommand("train-bpe", "train the BPE tokenizer");
  std::string bpe_items, bpe_corpus, bpe_exclude, bpe_out = "tokenizer.json";
  std::size_t bpe_vocab = kDefaultBpeVocabSize;
  bpe_cmd->add_option("--items", bpe_items, "items JSONL (targets and context)");
  bpe_cmd->add_option("--corpus", bpe_corpus, "corpus JSONL (every utterance)");
  bpe_cmd->add_option("--exclude-gold", bpe_exclude, "gold JSONL whose items are withheld from --corpus");
  bpe_cmd->add_option("--vocab-size", bpe_vocab, "vocabulary size including specials");
  bpe_cmd->add_option("--out", bpe_out, "output file name");

  // train -------------------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train one model on all labelled items");
  std::string train_items, train_gold, train_out = "model.json";
  TrainOptions train_opts;
  train_cmd->add_option("--items", train_items, "items JSONL")->required();
  train_cmd->add_option("--gold", train_gold, "gold JSONL")->required();
  train_cmd->add_option("--out", train_out, "model file name");
  train_opts.add_to(train_cmd);

  // evaluate ---------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("evaluate", "transcript-grouped cross-validation");
  std::string eval_items, eval_gold, eval_out = "eval_report.json", eval_preds;
  std::size_t eval_folds = 5;
  bool eval_save = false;
  std::vector<std::string> eval_annotations;
  TrainOptions eval_opts;
  eval_cmd->add_option("--items", eval_items, "items JSONL")->required();
  eval_cmd->add_option("--gold", eval_gold, "gold JSONL")->required();
  eval_cmd->add_option("--folds", eval_folds, "number of folds")->check(CLI::Range(2, 100));
  eval_cmd->add_option("--out", eval_out, "report file name");
  eval_cmd->add_option("--predictions-out", eval_preds, "write pooled out-of-fold predictions");
  eval_cmd->add_option("--annotations", eval_annotations, "per-annotator label files for the agreement block");
  eval_cmd->add_flag("--save-models", eval_save, "write fold<k>.model.json");
  eval_opts.add_to(eval_cmd);

  // sweep-context -----------------------------------------------------------------
  auto* sctx = app.add_subcommand("sweep-context", "PCC against number of context turns");
  std::string sctx_items, sctx_gold, sctx_lengths = "0,1,2,3,4,5,6,7,8,9,10", sctx_metric = "validation";
  std::size_t sctx_folds = 5;
  TrainOptions sctx_opts;
  sctx->add_option("--items", sctx_items, "items JSONL")->required();
  sctx->add_option("--gold", sctx_gold, "gold JSONL")->required();
  sctx->add_option("--lengths", sctx_lengths, "comma-separated context lengths");
  sctx->add_option("--metric", sctx_metric, "validation or test PCC")->check(CLI::IsMember({"validation", "test"}));
  sctx->add_option("--folds", sctx_folds, "number of folds")->check(CLI::Range(2, 100));
  sctx_opts.add_to(sctx);

  // sweep-train-size ----------------------------------------------------------------
  auto* ssize = app.add_subcommand("sweep-train-size", "test PCC against training-set fraction");
  std::string ssize_items, ssize_gold, ssize_fractions = "0.2,0.4,0.6,0.8,1.0";
  std::size_t ssize_folds = 5;
  TrainOptions ssize_opts;
  ssize->add_option("--items", ssize_items, "items JSONL")->required();
  ssize->add_option("--gold", ssize_gold, "gold JSONL")->required();
  ssize->add_option("--fractions", ssize_fractions, "comma-separated fractions in (0,1]");
  ssize->add_option("--folds", ssize_folds, "number of folds")->check(CLI::Range(2, 100));
  ssize_opts.add_to(ssize);

  // predict ------------------------------------------------------------------------
  auto* pred_cmd = app.add_subcommand("predict", "annotate items with one model or a majority-vote ensemble");
  std::vector<std::string> pred_models;
  std::string pred_items, pred_out = "predictions.jsonl";
  pred_cmd->add_option("--models", pred_models, "model files")->required();
  pred_cmd->add_option("--items", pred_items, "items JSONL")->required();
  pred_cmd->add_option("--out", pred_out, "output file name");

  // import-predictions ------------------------------------------------------------
  auto* imp = app.add_subcommand("import-predictions", "evaluate predictions produced by external models");
  std::string imp_preds, imp_items, imp_gold, imp_out = "imported_report.json";
  imp->add_option("--predictions", imp_preds, "predictions JSONL")->required();
  imp->add_option("--items", imp_items, "items JSONL")->required();
  imp->add_option("--gold", imp_gold, "gold JSONL")->required();
  imp->add_option("--out", imp_out, "report file name");

  // trends ---------------------------------------------------------------------------
  auto* trends_cmd = app.add_subcommand("trends", "label proportions and logistic age trends");
  std::string tr_preds, tr_items, tr_unit = "months";
  std::size_t tr_boot = 500;
  trends_cmd->add_option("--predictions", tr_preds, "predictions JSONL")->required();
  trends_cmd->add_option("--items", tr_items, "items JSONL with transcript and age metadata")->required();
  trends_cmd->add_option("--age-unit", tr_unit, "months or years")->check(CLI::IsMember({"months", "years"}));
  trends_cmd->add_option("--bootstrap", tr_boot, "cluster bootstrap resamples")->check(CLI::Range(2, 100000));

  // gen-synthetic ---------------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-synthetic", "generate a corpus with known labels");
  SyntheticConfig gen_cfg;
  std::string gen_mode = "planted";
  double gen_det = 0.10, gen_subj = 0.10, gen_agree = 0.10;
  gen->add_option("--mode", gen_mode, "planted or context")->check(CLI::IsMember({"planted", "context"}));
  gen->add_option("--n-items", gen_cfg.n_items, "number of child items")->check(CLI::PositiveNumber);
  gen->add_option("--items-per-transcript", gen_cfg.items_per_transcript, "child items per transcript")
      ->check(CLI::PositiveNumber);
  gen->add_option("--rate-determiner", gen_det, "determiner-drop planting rate");
  gen->add_option("--rate-subject", gen_subj, "subject-drop planting rate");
  gen->add_option("--rate-agreement", gen_agree, "agreement-error planting rate");
  gen->add_option("--ambiguous-rate", gen_cfg.ambiguous_rate, "share of noun-phrase fragments (planted mode)");
  gen->add_option("--ellipsis-rate", gen_cfg.ellipsis_rate, "share of elliptical answers (context mode)");
  gen->add_option("--label-noise", gen_cfg.label_noise, "probability of flipping a gold label");
  gen->add_option("--corpus-name", gen_cfg.corpus, "corpus name");

  // agreement -------------------------------------------------------------------------------
  auto* agree_cmd = app.add_subcommand("agreement", "agreement over per-annotator label files");
  std::vector<std::string> agree_files;
  std::string agree_out = "agreement.json";
  agree_cmd->add_option("--annotations", agree_files, "gold-schema JSONL files with an annotator field")
      ->required();
  agree_cmd->add_option("--out", agree_out, "report file name");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: Usage: " << e.what() << "\n";
    return kExitUsage;
  }

  const std::uint64_t seed = g.resolved_seed();
  RunManifest m;
  m.seeds["seed"] = seed;

  if (*ingest) {
    m.command = "ingest";
    CleaningPolicy policy{!drop_retraced, !no_replacements};
    std::vector<Transcript> transcripts;
    std::size_t warnings = 0;
    for (const auto& f : collect_cha_files(ingest_in)) {
      transcripts.push_back(parse_chat_file(f, ingest_corpus, policy));
      for (const auto& w : transcripts.back().parse_warnings) {
        std::cerr << "warning: " << f.string() << ": " << w << "\n";
        ++warnings;
      }
      m.add_input(f);
    }
    m.config = {{"corpus", ingest_corpus}, {"keep_retraced", policy.keep_retraced},
                {"apply_replacements", policy.apply_replacements}, {"n_transcripts", transcripts.size()},
                {"n_warnings", warnings}};
    emit(g, m, ingest_out, corpus_to_jsonl(transcripts));
  } else if (*screen) {
    m.command = "screen-dialect";
    const auto transcripts = load_corpus_jsonl(screen_corpus);
    m.add_input(screen_corpus);
    const auto bigrams = load_bigrams(screen_bigrams);
    if (!screen_bigrams.empty()) m.add_input(screen_bigrams);
    const auto reports = screen_corpora(transcripts, bigrams, screen_threshold);
    OrderedJson j = OrderedJson::array();
    std::set<std::string> excluded;
    for (const auto& r : reports) {
      j.push_back(to_json(r));
      if (r.excluded) excluded.insert(r.corpus);
    }
    m.config = {{"threshold", screen_threshold}, {"n_bigrams", bigrams.size()}};
    emit(g, m, "dialect_report.json", j.dump(2) + "\n");
    if (!screen_filtered.empty()) {
      std::vector<Transcript> kept;
      for (const auto& t : transcripts)
        if (!excluded.count(t.corpus)) kept.push_back(t);
      emit(g, m, screen_filtered, corpus_to_jsonl(kept));
    }
  } else if (*prepare) {
    m.command = "prepare";
    auto transcripts = load_corpus_jsonl(prep_corpus);
    m.add_input(prep_corpus);
    if (!prep_screen.empty()) {
      m.add_input(prep_screen);
      std::set<std::string> excluded;
      for (const auto& r : Json::parse(read_file(prep_screen)))
        if (r.at("excluded").get<bool>()) excluded.insert(r.at("corpus").get<std::string>());
      std::erase_if(transcripts, [&](const Transcript& t) { return excluded.count(t.corpus) > 0; });
    }
    const auto chunks = build_chunks(transcripts, prep_chunk, prep_context);
    const auto items = flatten(chunks);
    OrderedJson summary = OrderedJson::array();
    for (const auto& c : chunks)
      summary.push_back({{"chunk_id", c.chunk_id}, {"n_items", c.items.size()}, {"partial", c.partial}});
    m.config = {{"chunk_size", prep_chunk}, {"context", prep_context}, {"n_items", items.size()},
                {"n_chunks", chunks.size()}};
    emit(g, m, prep_out, items_to_jsonl(items));
    emit(g, m, "chunks.json", summary.dump(2) + "\n");
  } else if (*sheets) {
    m.command = "export-sheets";
    const auto items = load_items_jsonl(sheets_items);
    m.add_input(sheets_items);
    std::map<std::string, Chunk> chunks;
    for (const auto& item : items) {
      auto& c = chunks[item.chunk_id.empty() ? std::string(kDefaultChunkId) : item.chunk_id];
      c.chunk_id = item.chunk_id.empty() ? std::string(kDefaultChunkId) : item.chunk_id;
      c.items.push_back(item);
    }
    for (const auto& [id, c] : chunks) emit(g, m, "sheets/" + id + ".tsv", annotation_sheet(c));
  } else if (*serve_cmd) {
    ServiceConfig cfg{parse_queue_policy(serve_policy), serve_quorum, serve_context};
    auto project = AnnotationProject::open(serve_dir, cfg);
    std::cerr << "serving " << project.n_items() << " items on http://" << serve_host << ":" << serve_port << "\n";
    serve(project, serve_host, serve_port,
          serve_ui.empty() ? std::nullopt : std::optional<fs::path>(serve_ui));
    return 0;
  } else if (*bpe_cmd) {
    m.command = "train-bpe";
    std::vector<std::vector<std::string>> corpus;
    if (!bpe_items.empty()) {
      const auto items = load_items_jsonl(bpe_items);
      m.add_input(bpe_items);
      corpus = tokenizer_corpus(items);
    }
    if (!bpe_corpus.empty()) {
      std::set<std::string> exclude;
      if (!bpe_exclude.empty()) {
        for (const auto& gd : load_gold_jsonl(bpe_exclude)) exclude.insert(gd.item_id);
        m.add_input(bpe_exclude);
      }
      const auto transcripts = load_corpus_jsonl(bpe_corpus);
      m.add_input(bpe_corpus);
      auto more = tokenizer_corpus(transcripts, exclude);
      corpus.insert(corpus.end(), more.begin(), more.end());
    }
    if (bpe_items.empty() && bpe_corpus.empty()) fail(ErrorKind::Usage, "train-bpe needs --items or --corpus");
    const auto model = train_bpe(corpus, bpe_vocab);
    m.config = {{"vocab_size", bpe_vocab}, {"trained_vocab", model.vocab_size()}};
    emit(g, m, bpe_out, model.to_json().dump() + "\n");
  } else if (*train_cmd) {
    m.command = "train";
    const auto data = load_labeled(train_items, train_gold);
    m.add_input(train_items);
    m.add_input(train_gold);
    const auto spec = train_opts.spec(seed);
    const auto pre = train_opts.pretrained();
    if (pre) m.add_input(train_opts.tokenizer);
    const auto model = train_model(data.items, data.labels(), spec, pre ? &*pre : nullptr);
    m.config = spec.to_json();
    emit(g, m, train_out, model.to_json().dump() + "\n");
  } else if (*eval_cmd) {
    m.command = "evaluate";
    const auto data = load_labeled(eval_items, eval_gold);
    m.add_input(eval_items);
    m.add_input(eval_gold);
    const auto cfg = eval_opts.cv(seed, eval_folds);
    if (cfg.tokenizer) m.add_input(eval_opts.tokenizer);
    auto report = run_cross_validation(data, cfg, eval_save);
    if (!eval_annotations.empty()) report.agreement = compute_agreement(annotation_matrix(eval_annotations, m));
    m.config = cfg.to_json();
    emit(g, m, eval_out, report.to_json().dump(2) + "\n");
    if (!eval_preds.empty()) emit(g, m, eval_preds, predictions_to_jsonl(report.predictions));
    if (eval_save)
      for (const auto& f : report.folds)
        emit(g, m, "fold" + std::to_string(f.fold) + ".model.json", f.model->to_json().dump() + "\n");
    std::cout << "pcc " << format_double(report.pcc.mean) << " +- " << format_double(report.pcc.sd) << "  accuracy "
              << format_double(report.accuracy.mean) << " +- " << format_double(report.accuracy.sd) << "\n";
  } else if (*sctx) {
    m.command = "sweep-context";
    const auto data = load_labeled(sctx_items, sctx_gold);
    m.add_input(sctx_items);
    m.add_input(sctx_gold);
    const auto cfg = sctx_opts.cv(seed, sctx_folds);
    const auto lengths = parse_size_list(sctx_lengths);
    const auto rows = sweep_context_length(data, lengths, cfg,
                                           sctx_metric == "test" ? SweepMetric::Test : SweepMetric::Validation);
    m.config = cfg.to_json();
    m.config["lengths"] = lengths;
    m.config["metric"] = sctx_metric;
    emit(g, m, "sweep_context.csv", sweep_csv(rows, "context_length"));
    emit(g, m, "sweep_context.json", sweep_json_rows(rows));
  } else if (*ssize) {
    m.command = "sweep-train-size";
    const auto data = load_labeled(ssize_items, ssize_gold);
    m.add_input(ssize_items);
    m.add_input(ssize_gold);
    const auto cfg = ssize_opts.cv(seed, ssize_folds);
    const auto fractions = parse_double_list(ssize_fractions);
    const auto rows = sweep_training_size(data, fractions, cfg);
    m.config = cfg.to_json();
    m.config["fractions"] = fractions;
    emit(g, m, "sweep_train_size.csv", sweep_csv(rows, "fraction"));
    emit(g, m, "sweep_train_size.json", sweep_json_rows(rows));
  } else if (*pred_cmd) {
    m.command = "predict";
    const auto items = load_items_jsonl(pred_items);
    m.add_input(pred_items);
    std::vector<std::vector<Prediction>> per_model;
    for (const auto& path : pred_models) {
      per_model.push_back(load_model(path).predict(items));
      m.add_input(path);
    }
    const auto preds = ensemble_vote(per_model);
    m.config = {{"n_models", pred_models.size()}, {"n_items", items.size()}};
    emit(g, m, pred_out, predictions_to_jsonl(preds));
  } else if (*imp) {
    m.command = "import-predictions";
    const auto data = load_labeled(imp_items, imp_gold);
    const auto preds = import_external_predictions(imp_preds);
    for (const auto& p : {imp_preds, imp_items, imp_gold}) m.add_input(p);
    BootstrapConfig bc;
    bc.seed = seed;
    const auto report = evaluate_predictions(data, preds, bc);
    emit(g, m, imp_out, report.to_json().dump(2) + "\n");
    emit(g, m, "imported_predictions.jsonl", predictions_to_jsonl(preds));
  } else if (*trends_cmd) {
    m.command = "trends";
    const auto items = load_items_jsonl(tr_items);
    const auto preds = import_external_predictions(tr_preds);
    m.add_input(tr_preds);
    m.add_input(tr_items);
    const auto records = join_predictions(preds, items);
    const auto table = transcript_proportions(records);
    for (const auto& w : table.warnings) std::cerr << "warning: " << w << "\n";
    TrendConfig tc;
    tc.n_bootstrap = tr_boot;
    tc.seed = seed;
    const auto fits = fit_all_labels(records, parse_age_unit(tr_unit), tc);
    const auto files = export_trend_csv(fits, table, g.out_dir);
    m.add_output(files.proportions);
    m.add_output(files.curves);
    m.config = {{"age_unit", tr_unit}, {"n_bootstrap", tr_boot}, {"method", kTrendMethod}};
    emit(g, m, "trend_report.json", trend_report(fits, tc, table.warnings).dump(2) + "\n");
  } else if (*gen) {
    m.command = "gen-synthetic";
    gen_cfg.mode = parse_synthetic_mode(gen_mode);
    gen_cfg.seed = seed;
    gen_cfg.planting = {{ErrorCategory::Determiner, gen_det},
                        {ErrorCategory::Subject, gen_subj},
                        {ErrorCategory::SvAgreement, gen_agree}};
    const auto corpus = generate_synthetic(gen_cfg);
    m.config = gen_cfg.to_json();
    emit(g, m, "corpus.jsonl", corpus_to_jsonl(corpus.transcripts));
    emit(g, m, "items.jsonl", items_to_jsonl(corpus.items));
    emit(g, m, "gold.jsonl", gold_to_jsonl(corpus.gold));
  } else if (*agree_cmd) {
    m.command = "agreement";
    const auto matrix = annotation_matrix(agree_files, m);
    const auto summary = compute_agreement(matrix);
    m.config = {{"n_items", matrix.size()}, {"n_annotators", matrix.empty() ? 0 : matrix.front().size()}};
    emit(g, m, agree_out, summary.to_json().dump(2) + "\n");
  }
  m.save(g.out_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::Usage: return kExitUsage;
      case ErrorKind::Invariant: return kExitInternal;
      default: return kExitData;
    }
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: MalformedRecord: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: Invariant: " << e.what() << "\n";
    return kExitInternal;
  }
}

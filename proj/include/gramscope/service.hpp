#pragma once

// Multi-annotator label collection: event-sourced project state, queue
// policies, live agreement, and an HTTP binding.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "gramscope/corpus.hpp"
#include "gramscope/crossval.hpp"
#include "gramscope/error.hpp"
#include "gramscope/io.hpp"
#include "gramscope/metrics.hpp"
#include "gramscope/schema.hpp"

namespace gramscope {

enum class QueuePolicy { Majority, Unanimity };

constexpr std::string_view to_string(QueuePolicy p) { return p == QueuePolicy::Majority ? "majority" : "unanimity"; }

inline QueuePolicy parse_queue_policy(std::string_view s) {
  if (s == "majority") return QueuePolicy::Majority;
  if (s == "unanimity") return QueuePolicy::Unanimity;
  fail(ErrorKind::Usage, "unknown queue policy '" + std::string(s) + "'");
}

inline constexpr std::string_view kDefaultChunkId = "default";
inline constexpr std::size_t kDefaultVisibleContext = 8;
inline constexpr std::size_t kDefaultQuorum = 3;
inline constexpr std::string_view kEventLogName = "events.jsonl";

struct ServiceConfig {
  QueuePolicy policy = QueuePolicy::Majority;
  std::size_t quorum = kDefaultQuorum;
  std::size_t visible_context = kDefaultVisibleContext;
};

struct AnnotationEvent {
  std::uint64_t event_id = 0;
  std::string type;  // "annotation" or "adjudication"
  std::string timestamp;
  std::string annotator;
  std::string item_id;
  Label label = Label::Grammatical;
  CategorySet categories;
};

inline OrderedJson to_json(const AnnotationEvent& e) {
  OrderedJson j;
  j["event_id"] = e.event_id;
  j["type"] = e.type;
  j["timestamp"] = e.timestamp;
  j["annotator"] = e.annotator;
  j["item_id"] = e.item_id;
  j["label"] = to_string(e.label);
  j["categories"] = OrderedJson::array();
  for (auto c : e.categories) j["categories"].push_back(to_string(c));
  return j;
}

inline AnnotationEvent event_from_json(const Json& j) {
  AnnotationEvent e;
  e.event_id = j.at("event_id").get<std::uint64_t>();
  e.type = j.at("type").get<std::string>();
  e.timestamp = j.value("timestamp", std::string{});
  e.annotator = j.value("annotator", std::string{});
  e.item_id = j.at("item_id").get<std::string>();
  e.label = parse_label(j.at("label").get<std::string>());
  for (const auto& c : j.value("categories", Json::array())) e.categories.insert(parse_category(c.get<std::string>()));
  if (e.type != "annotation" && e.type != "adjudication") fail(ErrorKind::MalformedRecord, "unknown event type " + e.type);
  return e;
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
  std::map<std::string, std::string> headers;
};

using QueryParams = std::map<std::string, std::string>;

/// Project state rebuilt from an append-only event log. All mutation goes
/// through `record`, which validates, appends and applies under one lock.
class AnnotationProject {
 public:
  using Clock = std::function<std::string()>;

  AnnotationProject(std::vector<AnnotationItem> items, ServiceConfig cfg,
                    std::optional<std::filesystem::path> log_path = std::nullopt, Clock clock = utc_now)
      : items_(std::move(items)), cfg_(cfg), log_path_(std::move(log_path)), clock_(std::move(clock)) {
    if (cfg_.quorum == 0) fail(ErrorKind::Usage, "quorum must be positive");
    for (std::size_t i = 0; i < items_.size(); ++i) {
      auto& item = items_[i];
      if (item.chunk_id.empty()) item.chunk_id = std::string(kDefaultChunkId);
      if (!index_.emplace(item.item_id, i).second) fail(ErrorKind::MalformedRecord, "duplicate item " + item.item_id);
      if (!chunks_.count(item.chunk_id)) chunk_order_.push_back(item.chunk_id);
      chunks_[item.chunk_id].push_back(i);
    }
    if (log_path_ && std::filesystem::exists(*log_path_)) replay(*log_path_);
  }

  /// Loads `items.jsonl` from the data directory and replays its event log.
  static AnnotationProject open(const std::filesystem::path& data_dir, ServiceConfig cfg, Clock clock = utc_now) {
    return AnnotationProject(load_items_jsonl(data_dir / "items.jsonl"), cfg, data_dir / kEventLogName,
                             std::move(clock));
  }

  const ServiceConfig& config() const { return cfg_; }
  std::size_t n_items() const { return items_.size(); }

  // -------------------------------------------------------------------------
  // Domain operations

  /// Validates and appends an event; returns its id.
  std::uint64_t record(AnnotationEvent e) {
    std::unique_lock lock(mutex_);
    check_event(e);
    if (e.type == "adjudication" && annotators_of(e.item_id) < cfg_.quorum)
      fail(ErrorKind::QuorumNotReached, "item " + e.item_id + " has not reached quorum");
    e.event_id = next_event_id_;
    e.timestamp = clock_();
    if (log_path_) {
      std::filesystem::create_directories(log_path_->parent_path().empty() ? "." : log_path_->parent_path());
      std::ofstream out(*log_path_, std::ios::app | std::ios::binary);
      out << to_json(e).dump() << '\n';
      out.flush();
      if (!out) fail(ErrorKind::IoError, "cannot append to " + log_path_->string());
    }
    apply(e);
    return e.event_id;
  }

  /// The resolved gold annotation of an item under the configured policy.
  std::optional<GoldAnnotation> resolution(const std::string& item_id) const {
    std::shared_lock lock(mutex_);
    return resolve_locked(item_id);
  }

  std::vector<std::string> adjudication_queue() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& item : items_)
      if (queued_locked(item.item_id)) out.push_back(item.item_id);
    return out;
  }

  std::vector<GoldAnnotation> resolved() const {
    std::shared_lock lock(mutex_);
    std::vector<GoldAnnotation> out;
    for (const auto& item : items_)
      if (auto g = resolve_locked(item.item_id)) out.push_back(std::move(*g));
    return out;
  }

  /// Items x annotators over items that reached quorum, taken as a copy.
  AnnotationMatrix quorum_matrix() const {
    std::shared_lock lock(mutex_);
    std::set<std::string> annotators;
    for (const auto& [id, votes] : votes_)
      if (votes.size() >= cfg_.quorum)
        for (const auto& [a, v] : votes) annotators.insert(a);
    AnnotationMatrix m;
    for (const auto& item : items_) {
      auto it = votes_.find(item.item_id);
      if (it == votes_.end() || it->second.size() < cfg_.quorum) continue;
      auto& row = m.emplace_back();
      for (const auto& a : annotators) {
        auto v = it->second.find(a);
        row.push_back(v == it->second.end() ? std::nullopt : std::optional<Label>(v->second.label));
      }
    }
    return m;
  }

  AgreementSummary agreement() const {
    const AnnotationMatrix m = quorum_matrix();  // lock released here
    if (m.size() < 2) fail(ErrorKind::InsufficientData, "fewer than two items at quorum");
    AgreementSummary s;
    s.n_items = m.size();
    s.alpha = krippendorff_alpha_ordinal(m);
    if (!m.empty() && m.front().size() >= 2) {
      const auto k = mean_pairwise_kappa(m);
      s.kappa_mean = k.mean;
      s.kappa_sd = k.sd;
    }
    return s;
  }

  // -------------------------------------------------------------------------
  // HTTP surface

  Response handle(const std::string& method, const std::string& path, const QueryParams& query,
                  const std::string& body) {
    try {
      if (method == "GET" && path == "/api/chunks") return get_chunks();
      if (method == "GET" && path == "/api/items") return get_items(query);
      if (method == "GET" && path == "/api/progress") return get_progress();
      if (method == "POST" && path == "/api/annotations") return post_annotation(body, "annotation");
      if (method == "GET" && path == "/api/agreement") return get_agreement();
      if (method == "GET" && path == "/api/adjudication") return get_adjudication();
      if (method == "POST" && path == "/api/adjudication") return post_annotation(body, "adjudication");
      if (method == "GET" && path == "/api/export") return get_export();
      return error_response(404, "NotFound", "no route " + method + " " + path);
    } catch (const Error& e) {
      return error_response(status_for(e.kind()), std::string(to_string(e.kind())), e.what());
    } catch (const Json::exception& e) {
      return error_response(400, "MalformedRecord", e.what());
    }
  }

  static Response error_response(int status, const std::string& kind, const std::string& message) {
    OrderedJson j;
    j["error"] = kind;
    j["message"] = message;
    return {status, j.dump(), "application/json", {}};
  }

 private:
  struct Vote {
    Label label;
    CategorySet categories;
  };

  static int status_for(ErrorKind k) {
    switch (k) {
      case ErrorKind::UnknownChunk:
      case ErrorKind::UnknownItem: return 404;
      case ErrorKind::InsufficientData:
      case ErrorKind::QuorumNotReached: return 409;
      case ErrorKind::InvalidAnnotation:
      case ErrorKind::MalformedRecord:
      case ErrorKind::Precondition:
      case ErrorKind::Usage: return 400;
      default: return 500;
    }
  }

  void check_event(const AnnotationEvent& e) const {
    if (!index_.count(e.item_id)) fail(ErrorKind::UnknownItem, "unknown item " + e.item_id);
    if (e.type == "annotation" && e.annotator.empty()) fail(ErrorKind::InvalidAnnotation, "annotator is required");
    if (!e.categories.empty() && e.label != Label::Ungrammatical)
      fail(ErrorKind::InvalidAnnotation, "error categories are only allowed with label ungrammatical");
  }

  void apply(const AnnotationEvent& e) {
    if (e.type == "annotation")
      votes_[e.item_id][e.annotator] = Vote{e.label, e.categories};
    else
      adjudicated_[e.item_id] = GoldAnnotation{e.item_id, e.label, e.categories, std::nullopt};
    next_event_id_ = std::max(next_event_id_, e.event_id + 1);
  }

  void replay(const std::filesystem::path& path) {
    for_each_jsonl(path, [&](const Json& j, std::size_t line) {
      AnnotationEvent e;
      try {
        e = event_from_json(j);
        check_event(e);
      } catch (const std::exception& ex) {
        fail(ErrorKind::MalformedRecord, path.string() + ":" + std::to_string(line) + ": " + ex.what());
      }
      apply(e);
    });
  }

  std::size_t annotators_of(const std::string& item_id) const {
    auto it = votes_.find(item_id);
    return it == votes_.end() ? 0 : it->second.size();
  }

  std::vector<Label> labels_of(const std::string& item_id) const {
    std::vector<Label> out;
    auto it = votes_.find(item_id);
    if (it != votes_.end())
      for (const auto& [a, v] : it->second) out.push_back(v.label);
    return out;
  }

  bool queued_locked(const std::string& item_id) const {
    if (adjudicated_.count(item_id) || annotators_of(item_id) < cfg_.quorum) return false;
    const auto labels = labels_of(item_id);
    if (cfg_.policy == QueuePolicy::Majority) return !majority_label(labels).has_value();
    return std::any_of(labels.begin(), labels.end(), [&](Label l) { return l != labels.front(); });
  }

  std::optional<GoldAnnotation> resolve_locked(const std::string& item_id) const {
    if (auto it = adjudicated_.find(item_id); it != adjudicated_.end()) return it->second;
    if (annotators_of(item_id) < cfg_.quorum || queued_locked(item_id)) return std::nullopt;
    const auto label = majority_label(labels_of(item_id));
    if (!label) return std::nullopt;
    GoldAnnotation g{item_id, *label, {}, std::nullopt};
    if (*label == Label::Ungrammatical)
      for (const auto& [a, v] : votes_.at(item_id))
        if (v.label == Label::Ungrammatical) g.categories.insert(v.categories.begin(), v.categories.end());
    return g;
  }

  static OrderedJson turn_json(const ContextTurn& t) {
    OrderedJson j;
    j["speaker"] = render_speaker(t.speaker);
    j["role"] = to_string(t.speaker.code);
    j["text"] = join(t.tokens);
    return j;
  }

  Response get_chunks() const {
    std::shared_lock lock(mutex_);
    OrderedJson arr = OrderedJson::array();
    for (const auto& id : chunk_order_) {
      const auto& members = chunks_.at(id);
      OrderedJson c;
      c["chunk_id"] = id;
      c["n_items"] = members.size();
      c["partial"] = items_[members.front()].chunk_partial;
      arr.push_back(std::move(c));
    }
    return {200, arr.dump(), "application/json", {}};
  }

  Response get_items(const QueryParams& q) const {
    auto a = q.find("annotator");
    if (a == q.end() || a->second.empty()) fail(ErrorKind::Usage, "annotator query parameter is required");
    auto c = q.find("chunk");
    const std::string chunk = c == q.end() ? std::string(kDefaultChunkId) : c->second;
    const bool all = q.count("all") && q.at("all") != "0";
    std::size_t visible = cfg_.visible_context;
    if (auto v = q.find("context"); v != q.end()) {
      try {
        visible = std::stoul(v->second);
      } catch (const std::exception&) {
        fail(ErrorKind::Usage, "context must be a non-negative integer");
      }
    }

    std::shared_lock lock(mutex_);
    auto members = chunks_.find(chunk);
    if (members == chunks_.end()) fail(ErrorKind::UnknownChunk, "unknown chunk " + chunk);
    OrderedJson out;
    out["chunk"] = chunk;
    out["annotator"] = a->second;
    out["visible_context"] = visible;
    out["items"] = OrderedJson::array();
    std::size_t position = 0;
    for (auto i : members->second) {
      const auto& item = items_[i];
      const Vote* mine = nullptr;
      if (auto v = votes_.find(item.item_id); v != votes_.end())
        if (auto m = v->second.find(a->second); m != v->second.end()) mine = &m->second;
      if (mine && !all) {
        ++position;
        continue;
      }
      OrderedJson r;
      r["item_id"] = item.item_id;
      r["position"] = position++;
      const std::size_t n = item.context.size();
      const std::size_t first = n - std::min(n, visible);
      r["scrollback"] = OrderedJson::array();
      r["context"] = OrderedJson::array();
      for (std::size_t k = 0; k < n; ++k) (k < first ? r["scrollback"] : r["context"]).push_back(turn_json(item.context[k]));
      r["target"] = join(item.target.tokens);
      if (mine) {
        r["label"] = to_string(mine->label);
        r["categories"] = OrderedJson::array();
        for (auto cat : mine->categories) r["categories"].push_back(to_string(cat));
      }
      out["items"].push_back(std::move(r));
    }
    return {200, out.dump(), "application/json", {}};
  }

  Response get_progress() const {
    std::shared_lock lock(mutex_);
    std::map<std::string, std::size_t> per;
    std::size_t at_quorum = 0, queued = 0, resolved_n = 0;
    for (const auto& item : items_) {
      if (auto v = votes_.find(item.item_id); v != votes_.end())
        for (const auto& [a, vote] : v->second) ++per[a];
      if (annotators_of(item.item_id) >= cfg_.quorum) ++at_quorum;
      if (queued_locked(item.item_id)) ++queued;
      if (resolve_locked(item.item_id)) ++resolved_n;
    }
    OrderedJson j;
    j["n_items"] = items_.size();
    j["n_at_quorum"] = at_quorum;
    j["n_queued"] = queued;
    j["n_resolved"] = resolved_n;
    j["per_annotator"] = per;
    j["policy"] = to_string(cfg_.policy);
    j["quorum"] = cfg_.quorum;
    return {200, j.dump(), "application/json", {}};
  }

  Response post_annotation(const std::string& body, const std::string& type) {
    const Json j = Json::parse(body);
    AnnotationEvent e;
    e.type = type;
    e.annotator = j.value("annotator", std::string{});
    e.item_id = j.at("item_id").get<std::string>();
    const auto label = try_parse_label(j.at("label").get<std::string>());
    if (!label) fail(ErrorKind::InvalidAnnotation, "invalid label");
    e.label = *label;
    for (const auto& c : j.value("categories", Json::array())) {
      const auto cat = try_parse_category(c.get<std::string>());
      if (!cat) fail(ErrorKind::InvalidAnnotation, "invalid error category " + c.get<std::string>());
      e.categories.insert(*cat);
    }
    const auto id = record(e);
    OrderedJson out;
    out["event_id"] = id;
    if (type == "adjudication") {
      if (auto g = resolution(e.item_id)) out["gold"] = to_json(*g);
    }
    return {201, out.dump(), "application/json", {}};
  }

  Response get_agreement() const {
    const auto s = agreement();
    OrderedJson j;
    j["n_complete_items"] = s.n_items;
    j["alpha"] = s.alpha ? OrderedJson(*s.alpha) : OrderedJson(nullptr);
    j["kappa_mean"] = s.kappa_mean;
    j["kappa_sd"] = s.kappa_sd;
    return {200, j.dump(), "application/json", {}};
  }

  Response get_adjudication() const {
    const auto queue = adjudication_queue();
    std::shared_lock lock(mutex_);
    OrderedJson j;
    j["policy"] = to_string(cfg_.policy);
    j["items"] = OrderedJson::array();
    for (const auto& id : queue) {
      OrderedJson r;
      r["item_id"] = id;
      OrderedJson votes = OrderedJson::object();
      for (const auto& [a, v] : votes_.at(id)) votes[a] = to_string(v.label);
      r["votes"] = std::move(votes);
      r["target"] = join(items_[index_.at(id)].target.tokens);
      j["items"].push_back(std::move(r));
    }
    return {200, j.dump(), "application/json", {}};
  }

  Response get_export() const {
    const auto gold = resolved();
    Response r{200, gold_to_jsonl(gold), "application/x-ndjson", {}};
    r.headers["X-Visible-Context"] = std::to_string(cfg_.visible_context);
    r.headers["X-Queue-Policy"] = std::string(to_string(cfg_.policy));
    return r;
  }

  std::vector<AnnotationItem> items_;
  ServiceConfig cfg_;
  std::optional<std::filesystem::path> log_path_;
  Clock clock_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::vector<std::size_t>> chunks_;
  std::vector<std::string> chunk_order_;

  mutable std::shared_mutex mutex_;
  std::map<std::string, std::map<std::string, Vote>> votes_;  // item -> annotator -> latest vote
  std::map<std::string, GoldAnnotation> adjudicated_;
  std::uint64_t next_event_id_ = 1;
};

}  // namespace gramscope

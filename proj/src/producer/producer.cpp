#include "producer/producer.hpp"

#include <algorithm>
#include <random>

#include "common/error.hpp"
#include "sql/evaluate.hpp"
#include "sql/parser.hpp"

namespace rgma {

namespace {

std::string fileSafe(std::string_view name) {
  std::string out;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    out.push_back(ok ? c : '_');
  }
  return out;
}

std::string freshEpoch() {
  std::random_device rd;
  std::mt19937_64 rng((static_cast<std::uint64_t>(rd()) << 32) ^ rd());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

}  // namespace

Producer::Producer(ProducerConfig config, const Clock& clock, CanonicalHandler handler)
    : config_(std::move(config)), clock_(clock), handler_(std::move(handler)) {
  if (config_.componentId.empty()) fail(ErrorCode::InvalidArgument, "producer needs a component id");
  if (config_.tables.empty()) fail(ErrorCode::InvalidArgument, "producer publishes no tables");
  if (config_.ringCapacity == 0) fail(ErrorCode::InvalidArgument, "ring capacity must be positive");
  if (config_.terminationMs <= 0) fail(ErrorCode::InvalidArgument, "termination interval must be positive");
  std::map<std::string, bool> seen;
  for (auto& t : config_.tables) {
    if (seen[t.def.name()]) fail(ErrorCode::InvalidArgument, "table " + t.def.name() + " published twice");
    seen[t.def.name()] = true;
    t.view = t.view.validated(t.def);
  }
  if (config_.type == ProducerType::Canonical) {
    if (config_.classes.empty()) config_.classes = {QueryClass::Latest, QueryClass::History};
    for (auto c : config_.classes) {
      if (c == QueryClass::Continuous) {
        fail(ErrorCode::UnsupportedQueryClass, "a canonical producer cannot answer continuous queries");
      }
    }
  } else {
    config_.classes.clear();
  }
  epoch_ = config_.type == ProducerType::ResilientStream ? "durable" : freshEpoch();
  openStores();
}

Producer::~Producer() = default;

void Producer::openStores() {
  const auto dir = config_.dataDir;
  switch (config_.type) {
    case ProducerType::ResilientStream: {
      if (dir.empty()) fail(ErrorCode::InvalidArgument, "a resilient stream producer needs a data directory");
      std::uint64_t hash = 1469598103934665603ull;
      for (const auto& t : config_.tables) hash = (hash ^ t.def.schemaHash()) * 1099511628211ull;
      std::vector<std::string> recovered;
      std::filesystem::create_directories(dir);
      wal_ = RecordLog::open(dir / (fileSafe(config_.componentId) + ".wal"), hash, &recovered, true);
      for (const auto& rec : recovered) {
        if (rec.size() < 12) fail(ErrorCode::Storage, "short write-ahead log record");
        const auto* p = reinterpret_cast<const unsigned char*>(rec.data());
        const std::uint64_t seq = readU64(p);
        const std::uint32_t nameLen = readU32(p + 8);
        if (rec.size() < 12 + std::size_t{nameLen}) fail(ErrorCode::Storage, "corrupt write-ahead log record");
        const std::string name = rec.substr(12, nameLen);
        const auto& def = requireTable(name).def;
        ring_.push_back({decodeTuple(def, std::string_view(rec).substr(12 + nameLen)), seq, false});
        if (ring_.size() > config_.ringCapacity) ring_.pop_front();
        nextSeq_ = std::max(nextSeq_, seq + 1);
      }
      break;
    }
    case ProducerType::Latest:
      for (const auto& t : config_.tables) {
        auto store = std::make_unique<LatestStore>(t.def);
        if (!dir.empty()) store->attach(dir / fileSafe(config_.componentId) / (t.def.name() + ".tbl"), false);
        latest_[t.def.name()] = std::move(store);
      }
      break;
    case ProducerType::DataBase:
      for (const auto& t : config_.tables) {
        auto store = std::make_unique<HistoryStore>(t.def);
        if (!dir.empty()) store->attach(dir / fileSafe(config_.componentId) / (t.def.name() + ".tbl"), false);
        history_[t.def.name()] = std::move(store);
      }
      break;
    default:
      break;
  }
}

const PublishedTable* Producer::table(std::string_view name) const {
  for (const auto& t : config_.tables) {
    if (t.def.name() == name) return &t;
  }
  return nullptr;
}

const PublishedTable& Producer::requireTable(std::string_view name) const {
  const auto* t = table(toLower(name));
  if (!t) fail(ErrorCode::Schema, "producer " + config_.componentId + " does not publish " + std::string(name));
  return *t;
}

std::vector<QueryClass> Producer::answeredClasses() const {
  if (config_.type == ProducerType::Canonical) return config_.classes;
  std::vector<QueryClass> out;
  for (auto c : {QueryClass::Continuous, QueryClass::Latest, QueryClass::History}) {
    if (answers(config_.type, c)) out.push_back(c);
  }
  return out;
}

void Producer::validate(const Tuple& tuple) const {
  const auto& t = requireTable(tuple.table);
  const Tuple checked = makeTuple(t.def, tuple.values);
  if (!(checked == tuple)) fail(ErrorCode::Type, "tuple does not match the schema of " + t.def.name());
  if (!t.view.admits(t.def, tuple)) {
    fail(ErrorCode::ViewViolation, "tuple contradicts the view " + renderView(t.view) + " of " + config_.componentId);
  }
}

std::string Producer::encodeLogRecord(const Tuple& tuple, std::uint64_t seq) const {
  std::string out;
  appendU64(out, seq);
  appendU32(out, static_cast<std::uint32_t>(tuple.table.size()));
  out += tuple.table;
  out += encodeTuple(requireTable(tuple.table).def, tuple);
  return out;
}

void Producer::insert(std::span<const Tuple> batch) {
  if (!isInsertable(config_.type)) fail(ErrorCode::NotInsertable, "canonical producers do not accept inserts");
  std::lock_guard lock(mutex_);
  for (const auto& t : batch) validate(t);
  switch (config_.type) {
    case ProducerType::ResilientStream: {
      std::vector<std::string> records;
      records.reserve(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) records.push_back(encodeLogRecord(batch[i], nextSeq_ + i));
      wal_.append(records);
      for (const auto& t : batch) publishLocked(t, nextSeq_++);
      if (wal_.records() > 2 * config_.ringCapacity + 64) {
        std::vector<std::string> keep;
        for (const auto& item : ring_) keep.push_back(encodeLogRecord(item.tuple, item.seq));
        wal_.rewrite(keep);
      }
      break;
    }
    case ProducerType::Stream:
      for (const auto& t : batch) publishLocked(t, nextSeq_++);
      break;
    case ProducerType::DataBase:
      for (const auto& t : batch) {
        history_.at(t.table)->append(t);
        ++nextSeq_;
      }
      break;
    case ProducerType::Latest:
      for (const auto& t : batch) {
        latest_.at(t.table)->insert(t);
        ++nextSeq_;
      }
      break;
    case ProducerType::Canonical:
      break;
  }
}

void Producer::publishLocked(const Tuple& tuple, std::uint64_t seq) {
  ring_.push_back({tuple, seq, false});
  if (ring_.size() > config_.ringCapacity) ring_.pop_front();
  const StreamItem& item = ring_.back();
  for (auto it = subs_.begin(); it != subs_.end();) {
    const auto& q = it->second.query;
    if (q.tables[0].def.name() == tuple.table && evaluate(q.condition, tuple) && !it->second.sink(item)) {
      it = subs_.erase(it);
    } else {
      ++it;
    }
  }
}

std::uint64_t Producer::subscribe(const Query& query, std::optional<std::uint64_t> fromSeq, StreamSink sink) {
  if (!isStreamType(config_.type)) {
    fail(ErrorCode::UnsupportedQueryClass,
         std::string(producerTypeName(config_.type)) + " producers do not answer continuous queries");
  }
  if (query.isJoin()) fail(ErrorCode::UnsupportedQueryClass, "continuous queries cannot join tables");
  const auto& t = requireTable(query.tables[0].def.name());
  if (t.def.schemaHash() != query.tables[0].def.schemaHash()) {
    fail(ErrorCode::Schema, "query schema for " + t.def.name() + " differs from the published one");
  }
  std::lock_guard lock(mutex_);
  for (const auto& item : ring_) {
    if (fromSeq && item.seq < *fromSeq) continue;
    if (item.tuple.table != t.def.name() || !evaluate(query.condition, item.tuple)) continue;
    StreamItem copy = item;
    copy.backlog = true;
    if (!sink(copy)) return 0;
  }
  const auto id = nextSub_++;
  subs_.emplace(id, Subscription{query, std::move(sink)});
  return id;
}

void Producer::unsubscribe(std::uint64_t subscription) {
  std::lock_guard lock(mutex_);
  subs_.erase(subscription);
}

std::size_t Producer::subscriptions() const {
  std::lock_guard lock(mutex_);
  return subs_.size();
}

std::vector<std::vector<Value>> Producer::answer(const Query& query, QueryClass cls) const {
  const auto classes = answeredClasses();
  if (std::find(classes.begin(), classes.end(), cls) == classes.end()) {
    fail(ErrorCode::UnsupportedQueryClass, std::string(producerTypeName(config_.type)) + " producer " +
                                               config_.componentId + " does not answer " +
                                               std::string(queryClassName(cls)) + " queries");
  }
  std::size_t width = 0;
  for (const auto& ref : query.tables) {
    const auto& t = requireTable(ref.def.name());
    if (t.def.schemaHash() != ref.def.schemaHash()) {
      fail(ErrorCode::Schema, "query schema for " + t.def.name() + " differs from the published one");
    }
    width += ref.def.columns().size();
  }
  if (config_.type == ProducerType::Canonical) {
    if (!handler_) return {};
    auto rows = handler_(query, cls);
    for (auto& row : rows) {
      if (row.size() != width) fail(ErrorCode::Type, "canonical handler returned a row of the wrong width");
      std::size_t col = 0;
      for (const auto& ref : query.tables) {
        for (const auto& c : ref.def.columns()) {
          row[col] = coerceTo(row[col], c.type);
          ++col;
        }
      }
    }
    return rows;
  }
  std::lock_guard lock(mutex_);
  std::vector<std::vector<Tuple>> data;
  data.reserve(query.tables.size());
  for (const auto& ref : query.tables) {
    if (config_.type == ProducerType::Latest) {
      data.push_back(latest_.at(ref.def.name())->rows());
    } else {
      data.push_back(history_.at(ref.def.name())->rows());
    }
  }
  std::vector<const std::vector<Tuple>*> sources;
  for (const auto& d : data) sources.push_back(&d);
  return selectRows(query, sources);
}

void Producer::scheduleCleanup(CleanupRule rule) {
  if (config_.type != ProducerType::Latest && config_.type != ProducerType::DataBase) {
    fail(ErrorCode::UnsupportedProducerType,
         std::string(producerTypeName(config_.type)) + " producers hold no store to clean up");
  }
  requireTable(rule.table);
  if (rule.intervalMs <= 0) fail(ErrorCode::InvalidArgument, "cleanup interval must be positive");
  std::lock_guard lock(mutex_);
  const auto due = clock_.nowMs() + rule.intervalMs;
  rules_.push_back({std::move(rule), due});
}

std::size_t Producer::runDueCleanups(std::int64_t now) {
  std::lock_guard lock(mutex_);
  std::size_t removed = 0;
  for (auto& r : rules_) {
    if (r.due > now) continue;
    if (config_.type == ProducerType::Latest) {
      removed += latest_.at(r.rule.table)->cleanup(r.rule, now);
    } else {
      removed += history_.at(r.rule.table)->cleanup(r.rule, now);
    }
    while (r.due <= now) r.due += r.rule.intervalMs;
  }
  return removed;
}

std::vector<Tuple> Producer::contents(std::string_view name) const {
  const auto& t = requireTable(name);
  std::lock_guard lock(mutex_);
  std::vector<Tuple> out;
  switch (config_.type) {
    case ProducerType::Stream:
    case ProducerType::ResilientStream:
      for (const auto& item : ring_) {
        if (item.tuple.table == t.def.name()) out.push_back(item.tuple);
      }
      break;
    case ProducerType::Latest:
      out = latest_.at(t.def.name())->rows();
      break;
    case ProducerType::DataBase:
      out = history_.at(t.def.name())->rows();
      break;
    case ProducerType::Canonical:
      break;
  }
  return out;
}

std::uint64_t Producer::lastSeq() const {
  std::lock_guard lock(mutex_);
  return nextSeq_ - 1;
}

void Producer::setView(std::string_view name, ViewPredicate view) {
  std::lock_guard lock(mutex_);
  for (auto& t : config_.tables) {
    if (t.def.name() == toLower(name)) {
      t.view = view.validated(t.def);
      return;
    }
  }
  fail(ErrorCode::Schema, "producer " + config_.componentId + " does not publish " + std::string(name));
}

}  // namespace rgma

#include "mediator/mediator.hpp"

#include <algorithm>
#include <future>

#include "common/error.hpp"
#include "sql/evaluate.hpp"
#include "sql/parser.hpp"
#include "sql/relevance.hpp"

namespace rgma {

std::string Target::residualSql() const { return renderSelect(residual); }

QueryClass classify(const Query& query, QueryClass requested) {
  if (requested == QueryClass::Continuous && query.isJoin()) {
    fail(ErrorCode::UnsupportedQueryClass, "continuous queries filter a single stream and cannot join tables");
  }
  return requested;
}

QueryPlan plan(const Query& query, QueryClass cls, const std::vector<RegistryEntry>& lookup) {
  QueryPlan out;
  out.query = query;
  out.queryClass = classify(query, cls);
  out.merge = cls == QueryClass::Latest ? MergePolicy::LatestPerKey : MergePolicy::Union;

  std::map<std::string, Target> byComponent;
  for (const auto& e : lookup) {
    if (!e.isProducer() || e.tombstone || !e.answers(cls)) continue;
    auto& t = byComponent[e.componentId];
    t.componentId = e.componentId;
    t.endpoint = e.endpoint;
    t.producerType = e.producerType;
    t.views[e.table] = e.view;
  }
  for (auto& [id, target] : byComponent) {
    std::vector<Binding> bindings;
    bool complete = true;
    for (const auto& ref : query.tables) {
      auto v = target.views.find(ref.def.name());
      if (v == target.views.end()) {
        complete = false;
        break;
      }
    }
    if (!complete) continue;
    std::set<std::string> seen;
    for (const auto& ref : query.tables) {
      if (!seen.insert(ref.def.name()).second) continue;
      auto b = viewBindings(query, ref.def.name(), target.views.at(ref.def.name()));
      bindings.insert(bindings.end(), b.begin(), b.end());
    }
    target.residual = query;
    target.residual.selectAll = true;
    target.residual.projection.clear();
    target.residual.condition = simplify(substitute(query.condition, bindings));
    if (target.residual.condition.isFalse()) continue;
    out.targets.push_back(std::move(target));
  }
  return out;
}

std::vector<std::string> outputColumnNames(const Query& query) {
  std::vector<std::string> out;
  for (const auto& ref : query.outputColumns()) {
    const auto& name = query.columnOf(ref).name;
    out.push_back(query.isJoin() ? query.tables[ref.table].alias + "." + name : name);
  }
  return out;
}

namespace {

std::vector<std::size_t> tableOffsets(const Query& query) {
  std::vector<std::size_t> offsets;
  std::size_t at = 0;
  for (const auto& ref : query.tables) {
    offsets.push_back(at);
    at += ref.def.columns().size();
  }
  offsets.push_back(at);
  return offsets;
}

struct Fetched {
  std::string componentId;
  std::vector<std::vector<Value>> rows;
};

std::vector<Fetched> fetchAll(const QueryPlan& plan, const FetchFn& fetch, std::vector<TargetFailure>& failures) {
  std::vector<std::future<std::vector<std::vector<Value>>>> pending;
  for (const auto& t : plan.targets) {
    if (plan.targets.size() == 1) {
      std::promise<std::vector<std::vector<Value>>> p;
      try {
        p.set_value(fetch(t, plan.queryClass));
      } catch (...) {
        p.set_exception(std::current_exception());
      }
      pending.push_back(p.get_future());
    } else {
      pending.push_back(std::async(std::launch::async, [&fetch, &t, cls = plan.queryClass] { return fetch(t, cls); }));
    }
  }
  std::vector<Fetched> out;
  const auto width = tableOffsets(plan.query).back();
  for (std::size_t i = 0; i < pending.size(); ++i) {
    const auto& id = plan.targets[i].componentId;
    try {
      auto rows = pending[i].get();
      for (const auto& r : rows) {
        if (r.size() != width) fail(ErrorCode::Protocol, "producer returned a row of the wrong width");
      }
      out.push_back({id, std::move(rows)});
    } catch (const std::exception& e) {
      failures.push_back({id, e.what()});
    }
  }
  return out;
}

}  // namespace

std::vector<Value> project(const Query& query, const std::vector<Value>& fullRow) {
  if (query.selectAll) return fullRow;
  const auto offsets = tableOffsets(query);
  std::vector<Value> out;
  out.reserve(query.projection.size());
  for (const auto& ref : query.projection) out.push_back(fullRow.at(offsets[ref.table] + ref.column));
  return out;
}

RowSet executeLatest(const QueryPlan& plan, const FetchFn& fetch) {
  if (plan.queryClass != QueryClass::Latest) fail(ErrorCode::Internal, "executeLatest on a non-latest plan");
  RowSet out;
  out.columns = outputColumnNames(plan.query);
  out.noProducers = plan.noProducers();
  const auto offsets = tableOffsets(plan.query);

  struct Best {
    std::int64_t recency;
    std::string producer;
    const std::vector<Value>* row;
  };
  std::map<std::vector<Value>, Best, ValueLess> best;
  const auto fetched = fetchAll(plan, fetch, out.failures);
  for (const auto& f : fetched) {
    for (const auto& row : f.rows) {
      std::vector<Value> key;
      std::int64_t recency = INT64_MIN;
      for (std::size_t t = 0; t < plan.query.tables.size(); ++t) {
        const auto& def = plan.query.tables[t].def;
        for (auto k : def.definingKey()) key.push_back(row[offsets[t] + k]);
        recency = std::max(recency, std::get<std::int64_t>(row[offsets[t] + def.timestampIndex()]));
      }
      auto it = best.find(key);
      if (it == best.end()) {
        best.emplace(std::move(key), Best{recency, f.componentId, &row});
      } else if (recency > it->second.recency ||
                 (recency == it->second.recency && f.componentId < it->second.producer)) {
        it->second = Best{recency, f.componentId, &row};
      }
    }
  }
  for (const auto& [key, b] : best) out.rows.push_back(project(plan.query, *b.row));
  return out;
}

RowSet executeHistory(const QueryPlan& plan, const FetchFn& fetch) {
  if (plan.queryClass != QueryClass::History) fail(ErrorCode::Internal, "executeHistory on a non-history plan");
  RowSet out;
  out.columns = outputColumnNames(plan.query);
  out.noProducers = plan.noProducers();
  for (const auto& f : fetchAll(plan, fetch, out.failures)) {
    for (const auto& row : f.rows) out.rows.push_back(project(plan.query, row));
  }
  return out;
}

RowSet execute(const QueryPlan& plan, const FetchFn& fetch) {
  switch (plan.queryClass) {
    case QueryClass::Latest: return executeLatest(plan, fetch);
    case QueryClass::History: return executeHistory(plan, fetch);
    case QueryClass::Continuous: break;
  }
  fail(ErrorCode::UnsupportedQueryClass, "continuous queries run as sessions");
}

ContinuousSession::ContinuousSession(Query query, LookupFn lookup, SubscribeFn subscribe, DeliverySink sink)
    : query_(std::move(query)), lookup_(std::move(lookup)), subscribe_(std::move(subscribe)), sink_(std::move(sink)) {
  classify(query_, QueryClass::Continuous);
}

ContinuousSession::~ContinuousSession() { close(); }

bool ContinuousSession::start() {
  const auto entries = lookup_(query_, QueryClass::Continuous);
  attachAll(entries);
  return !plan(query_, QueryClass::Continuous, entries).noProducers();
}

void ContinuousSession::onNotification(const RegistryEntry& producer) { attachAll({producer}); }

void ContinuousSession::refresh() {
  {
    std::lock_guard lock(mutex_);
    if (closed_) return;
  }
  attachAll(lookup_(query_, QueryClass::Continuous));
}

void ContinuousSession::attachAll(const std::vector<RegistryEntry>& entries) {
  for (const auto& t : plan(query_, QueryClass::Continuous, entries).targets) attach(t);
}

void ContinuousSession::attach(const Target& target) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) return;
    auto& s = sources_[target.componentId];
    if (s.connecting || (s.link && s.link->alive())) return;
    s.connecting = true;
  }
  std::optional<Resume> resume;
  {
    std::lock_guard lock(deliverMutex_);
    auto it = progress_.find(target.componentId);
    if (it != progress_.end()) resume = Resume{it->second.epoch, it->second.lastSeq + 1};
  }
  std::unique_ptr<StreamLink> link;
  try {
    if (attachHook_) attachHook_(target);
    const std::string id = target.componentId;
    link = subscribe_(target, resume,
                      [this, id](const StreamItem& item, const std::string& epoch) { deliver(id, item, epoch); });
  } catch (const std::exception& e) {
    std::lock_guard lock(mutex_);
    sources_[target.componentId].connecting = false;
    failures_.push_back({target.componentId, e.what()});
    if (failures_.size() > 100) failures_.erase(failures_.begin());
    return;
  }
  std::unique_ptr<StreamLink> discard;
  {
    std::lock_guard lock(mutex_);
    auto& s = sources_[target.componentId];
    s.connecting = false;
    if (closed_) {
      discard = std::move(link);
    } else {
      s.link = std::move(link);
    }
  }
  if (discard) discard->close();
}

void ContinuousSession::deliver(const std::string& producerId, const StreamItem& item, const std::string& epoch) {
  std::lock_guard lock(deliverMutex_);
  if (stopped_) return;
  auto& p = progress_[producerId];
  if (p.epoch == epoch && item.seq <= p.lastSeq) return;
  p.epoch = epoch;
  p.lastSeq = item.seq;
  if (query_.tables[0].def.name() != item.tuple.table || !evaluate(query_.condition, item.tuple)) return;
  Delivery d{producerId, item.seq, item.backlog, item.tuple, project(query_, item.tuple.values)};
  ++delivered_;
  sink_(d);
}

void ContinuousSession::close() {
  std::map<std::string, Source> sources;
  {
    std::lock_guard lock(mutex_);
    if (closed_) return;
    closed_ = true;
    stopped_ = true;
    sources.swap(sources_);
  }
  for (auto& [id, s] : sources) {
    if (s.link) s.link->close();
  }
  std::lock_guard lock(deliverMutex_);
}

std::vector<std::string> ContinuousSession::attached() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sources_) {
    if (s.link && s.link->alive()) out.push_back(id);
  }
  return out;
}

std::vector<TargetFailure> ContinuousSession::failures() const {
  std::lock_guard lock(mutex_);
  return failures_;
}

}  // namespace rgma

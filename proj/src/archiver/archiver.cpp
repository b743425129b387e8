#include "archiver/archiver.hpp"

#include <set>

#include "common/error.hpp"
#include "sql/parser.hpp"
#include "spdlog/spdlog.h"

namespace rgma {

namespace {

std::mutex claimMutex;
std::set<const Producer*> claimedSinks;

}  // namespace

Archiver::Archiver(ArchiverSpec spec, std::shared_ptr<Producer> sink, const Catalog& catalog, LookupFn lookup,
                   SubscribeFn subscribe, const Clock& clock, bool threaded)
    : spec_(std::move(spec)), sink_(std::move(sink)), clock_(clock), threaded_(threaded) {
  if (spec_.sourceClass != QueryClass::Continuous) {
    fail(ErrorCode::SourceUnsupported, "archivers consume streams; " + std::string(queryClassName(spec_.sourceClass)) +
                                           " sources cannot be archived");
  }
  if (!sink_) fail(ErrorCode::InvalidArgument, "archiver has no sink");
  if (!isInsertable(sink_->type())) fail(ErrorCode::SinkMismatch, "archiver sink must accept inserts");
  if (spec_.tables.empty()) fail(ErrorCode::InvalidArgument, "archiver has no tables");
  std::vector<Query> queries;
  for (const auto& t : spec_.tables) {
    const auto& def = catalog.get(t.table);
    const auto* published = sink_->table(def.name());
    if (!published || !(published->def == def)) {
      fail(ErrorCode::SinkMismatch, "sink " + sink_->id() + " does not publish table " + def.name());
    }
    queries.push_back(parseSelect("SELECT * FROM " + def.name() + (t.condition.empty() ? "" : " WHERE " + t.condition),
                                  catalog));
  }
  {
    std::lock_guard lock(claimMutex);
    if (!claimedSinks.insert(sink_.get()).second) {
      fail(ErrorCode::LimitExceeded, "sink " + sink_->id() + " already has an archiver");
    }
  }
  for (auto& q : queries) {
    const std::string table = q.tables[0].def.name();
    auto session = std::make_unique<ContinuousSession>(std::move(q), lookup, subscribe,
                                                       [this](const Delivery& d) { onDelivery(d); });
    session->setAttachHook([this, table](const Target& t) { onAttach(table, t); });
    sessions_.push_back(std::move(session));
  }
}

Archiver::~Archiver() {
  stop();
  std::lock_guard lock(claimMutex);
  claimedSinks.erase(sink_.get());
}

void Archiver::start() {
  if (threaded_ && !worker_.joinable()) worker_ = std::thread([this] { work(); });
  for (auto& s : sessions_) s->start();
}

void Archiver::stop() {
  for (auto& s : sessions_) s->close();
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  wake_.notify_all();
  if (worker_.joinable()) worker_.join();
}

void Archiver::refresh() {
  for (auto& s : sessions_) s->refresh();
}

void Archiver::onNotification(const RegistryEntry& producer) {
  for (auto& s : sessions_) {
    if (s->query().tables[0].def.name() == producer.table) s->onNotification(producer);
  }
}

void Archiver::onAttach(const std::string& table, const Target& target) {
  if (target.componentId == sink_->id()) {
    fail(ErrorCode::SourceUnsupported, "an archiver cannot consume its own sink");
  }
  std::lock_guard lock(viewMutex_);
  auto& sv = views_[table];
  const auto v = target.views.count(table) ? target.views.at(table) : ViewPredicate{};
  sv.bySource[target.componentId] = v;
  ViewPredicate desired = sv.bySource.begin()->second;
  for (const auto& [id, view] : sv.bySource) {
    if (!(view == desired)) desired = ViewPredicate{};
  }
  const auto* published = sink_->table(table);
  if (published->view == desired) return;
  if (!desired.universal()) {
    for (const auto& t : sink_->contents(table)) {
      if (!desired.admits(published->def, t)) {
        desired = ViewPredicate{};
        break;
      }
    }
    if (published->view == desired) return;
  }
  sink_->setView(table, desired);
  if (viewListener_) viewListener_(table, desired);
}

void Archiver::onDelivery(const Delivery& d) {
  {
    std::lock_guard lock(mutex_);
    pending_.push_back({d.tuple, clock_.nowMs()});
    ++received_;
  }
  if (threaded_) wake_.notify_one();
}

void Archiver::setPaused(bool paused) {
  {
    std::lock_guard lock(mutex_);
    paused_ = paused;
  }
  wake_.notify_all();
}

std::size_t Archiver::insertBatch(std::vector<Pending>& batch) {
  std::vector<Tuple> tuples;
  tuples.reserve(batch.size());
  for (auto& p : batch) tuples.push_back(std::move(p.tuple));
  std::size_t inserted = 0;
  std::size_t rejected = 0;
  try {
    sink_->insert(tuples);
    inserted = tuples.size();
  } catch (const Error&) {
    for (const auto& t : tuples) {
      try {
        sink_->insert(t);
        ++inserted;
      } catch (const Error& e) {
        ++rejected;
        spdlog::warn("archiver {} dropped a tuple for {}: {}", spec_.componentId, sink_->id(), e.what());
      }
    }
  }
  std::lock_guard lock(mutex_);
  archived_ += inserted;
  rejected_ += rejected;
  return inserted;
}

std::size_t Archiver::drain() {
  std::size_t total = 0;
  while (true) {
    std::vector<Pending> batch;
    {
      std::lock_guard lock(mutex_);
      if (paused_ || pending_.empty()) return total;
      batch.assign(pending_.begin(), pending_.end());
    }
    const auto n = batch.size();
    total += insertBatch(batch);
    std::lock_guard lock(mutex_);
    pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(n));
  }
}

void Archiver::work() {
  std::unique_lock lock(mutex_);
  while (true) {
    wake_.wait(lock, [this] { return stopping_ || (!paused_ && !pending_.empty()); });
    if (stopping_) return;
    // Tuples stay pending, and count as lag, until the sink has them.
    const std::size_t n = std::min<std::size_t>(pending_.size(), 1024);
    std::vector<Pending> batch(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(n));
    lock.unlock();
    insertBatch(batch);
    lock.lock();
    pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(n));
  }
}

std::map<std::string, ArchiverLag> Archiver::lag() const {
  std::lock_guard lock(mutex_);
  std::map<std::string, ArchiverLag> out;
  for (const auto& t : spec_.tables) out[toLower(t.table)];
  const auto now = clock_.nowMs();
  for (const auto& p : pending_) {
    auto& l = out[p.tuple.table];
    if (l.pending++ == 0) l.oldestAgeMs = now - p.arrivedMs;
  }
  return out;
}

ArchiverLag Archiver::totalLag() const {
  std::lock_guard lock(mutex_);
  ArchiverLag out;
  out.pending = pending_.size();
  if (!pending_.empty()) out.oldestAgeMs = clock_.nowMs() - pending_.front().arrivedMs;
  return out;
}

std::uint64_t Archiver::received() const {
  std::lock_guard lock(mutex_);
  return received_;
}

std::uint64_t Archiver::archived() const {
  std::lock_guard lock(mutex_);
  return archived_;
}

std::uint64_t Archiver::rejected() const {
  std::lock_guard lock(mutex_);
  return rejected_;
}

std::vector<std::string> Archiver::sources() const {
  std::vector<std::string> out;
  for (const auto& s : sessions_) {
    for (auto& id : s->attached()) out.push_back(id);
  }
  return out;
}

}  // namespace rgma

#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "common/clock.hpp"
#include "mediator/mediator.hpp"
#include "producer/producer.hpp"

namespace rgma {

struct ArchivedTable {
  std::string table;
  std::string condition;  // optional WHERE text
};

struct ArchiverSpec {
  std::string componentId;
  std::vector<ArchivedTable> tables;
  QueryClass sourceClass = QueryClass::Continuous;
};

struct ArchiverLag {
  std::size_t pending = 0;
  std::int64_t oldestAgeMs = 0;
};

/// Consumes the streams of its tables and republishes every tuple, unchanged,
/// into one insertable sink producer, which it owns exclusively.
class Archiver {
 public:
  /// With `threaded`, a worker drains deliveries into the sink as they arrive;
  /// otherwise the owner calls drain().
  Archiver(ArchiverSpec spec, std::shared_ptr<Producer> sink, const Catalog& catalog, LookupFn lookup,
           SubscribeFn subscribe, const Clock& clock, bool threaded);
  ~Archiver();
  Archiver(const Archiver&) = delete;
  Archiver& operator=(const Archiver&) = delete;

  const ArchiverSpec& spec() const { return spec_; }
  const std::shared_ptr<Producer>& sink() const { return sink_; }

  /// Told when the sink's declared view for a table changes.
  void setViewListener(std::function<void(const std::string& table, const ViewPredicate&)> fn) {
    viewListener_ = std::move(fn);
  }

  void start();
  void stop();
  void refresh();
  void onNotification(const RegistryEntry& producer);

  /// A paused archiver keeps receiving but stops inserting into its sink.
  void setPaused(bool paused);
  /// Inserts everything pending; returns how many tuples went into the sink.
  std::size_t drain();

  std::map<std::string, ArchiverLag> lag() const;
  ArchiverLag totalLag() const;
  std::uint64_t received() const;
  std::uint64_t archived() const;
  std::uint64_t rejected() const;
  std::vector<std::string> sources() const;

 private:
  struct Pending {
    Tuple tuple;
    std::int64_t arrivedMs;
  };
  struct SourceViews {
    std::optional<ViewPredicate> common;
    std::map<std::string, ViewPredicate> bySource;
  };

  void onDelivery(const Delivery& d);
  void onAttach(const std::string& table, const Target& target);
  void work();
  std::size_t insertBatch(std::vector<Pending>& batch);

  ArchiverSpec spec_;
  std::shared_ptr<Producer> sink_;
  const Clock& clock_;
  bool threaded_;
  std::vector<std::unique_ptr<ContinuousSession>> sessions_;
  std::function<void(const std::string&, const ViewPredicate&)> viewListener_;

  mutable std::mutex mutex_;
  std::condition_variable wake_;
  std::deque<Pending> pending_;
  bool paused_ = false;
  bool stopping_ = false;
  std::uint64_t received_ = 0;
  std::uint64_t archived_ = 0;
  std::uint64_t rejected_ = 0;
  std::thread worker_;

  std::mutex viewMutex_;
  std::map<std::string, SourceViews> views_;
};

}  // namespace rgma

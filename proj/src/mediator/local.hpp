#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "mediator/mediator.hpp"
#include "producer/producer.hpp"

namespace rgma {

/// Reaches producers living in the same process, for embedded use and simulation.
/// Removing a producer severs every stream attached to it.
class LocalProducers {
 public:
  void add(const std::shared_ptr<Producer>& producer);
  void remove(const std::string& componentId);
  std::shared_ptr<Producer> find(const std::string& componentId) const;

  FetchFn fetcher() const;
  SubscribeFn subscriber() const;

 private:
  struct Link;
  struct Slot {
    std::shared_ptr<Producer> producer;
    std::vector<std::weak_ptr<std::atomic<bool>>> alive;
  };

  mutable std::mutex mutex_;
  mutable std::map<std::string, Slot> producers_;
};

}  // namespace rgma

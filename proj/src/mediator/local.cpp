#include "mediator/local.hpp"

#include "common/error.hpp"

namespace rgma {

struct LocalProducers::Link : StreamLink {
  std::weak_ptr<Producer> producer;
  std::uint64_t subscription = 0;
  std::shared_ptr<std::atomic<bool>> flag = std::make_shared<std::atomic<bool>>(true);

  bool alive() const override { return flag->load() && !producer.expired(); }
  void close() override {
    flag->store(false);
    if (auto p = producer.lock()) p->unsubscribe(subscription);
  }
};

void LocalProducers::add(const std::shared_ptr<Producer>& producer) {
  std::lock_guard lock(mutex_);
  producers_[producer->id()] = Slot{producer, {}};
}

void LocalProducers::remove(const std::string& componentId) {
  Slot slot;
  {
    std::lock_guard lock(mutex_);
    auto it = producers_.find(componentId);
    if (it == producers_.end()) return;
    slot = std::move(it->second);
    producers_.erase(it);
  }
  for (auto& w : slot.alive) {
    if (auto f = w.lock()) f->store(false);
  }
}

std::shared_ptr<Producer> LocalProducers::find(const std::string& componentId) const {
  std::lock_guard lock(mutex_);
  auto it = producers_.find(componentId);
  return it == producers_.end() ? nullptr : it->second.producer;
}

FetchFn LocalProducers::fetcher() const {
  return [this](const Target& target, QueryClass cls) {
    auto p = find(target.componentId);
    if (!p) fail(ErrorCode::Connection, "producer " + target.componentId + " is not reachable");
    return p->answer(target.residual, cls);
  };
}

SubscribeFn LocalProducers::subscriber() const {
  return [this](const Target& target, const std::optional<Resume>& resume, ItemFn onItem) -> std::unique_ptr<StreamLink> {
    auto p = find(target.componentId);
    if (!p) fail(ErrorCode::Connection, "producer " + target.componentId + " is not reachable");
    auto link = std::make_unique<Link>();
    link->producer = p;
    std::optional<std::uint64_t> from;
    if (resume && resume->epoch == p->epoch()) from = resume->fromSeq;
    auto flag = link->flag;
    const std::string epoch = p->epoch();
    link->subscription = p->subscribe(target.residual, from, [flag, epoch, onItem](const StreamItem& item) {
      if (!flag->load()) return false;
      onItem(item, epoch);
      return true;
    });
    std::lock_guard lock(mutex_);
    auto it = producers_.find(target.componentId);
    if (it == producers_.end()) {
      link->flag->store(false);
    } else {
      auto& alive = it->second.alive;
      std::erase_if(alive, [](const auto& w) { return w.expired(); });
      alive.push_back(link->flag);
    }
    return link;
  };
}

}  // namespace rgma

#include "store/stores.hpp"

#include <algorithm>
#include <bit>
#include <numeric>

#include "common/error.hpp"
#include "sql/evaluate.hpp"
#include "sql/parser.hpp"

namespace rgma {

std::string encodeTuple(const TableDefinition& def, const Tuple& tuple) {
  if (tuple.values.size() != def.columns().size()) {
    fail(ErrorCode::Schema, "tuple arity does not match table " + def.name());
  }
  std::string out;
  for (std::size_t i = 0; i < tuple.values.size(); ++i) {
    const Value& v = tuple.values[i];
    switch (def.columns()[i].type) {
      case ColumnType::Int:
      case ColumnType::Timestamp: appendU64(out, static_cast<std::uint64_t>(std::get<std::int64_t>(v))); break;
      case ColumnType::Real: appendU64(out, std::bit_cast<std::uint64_t>(std::get<double>(v))); break;
      case ColumnType::String: {
        const auto& s = std::get<std::string>(v);
        appendU32(out, static_cast<std::uint32_t>(s.size()));
        out += s;
        break;
      }
    }
  }
  return out;
}

Tuple decodeTuple(const TableDefinition& def, std::string_view payload) {
  const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
  std::size_t off = 0;
  auto need = [&](std::size_t n) {
    if (payload.size() - off < n) fail(ErrorCode::Storage, "truncated row in table " + def.name());
  };
  std::vector<Value> values;
  values.reserve(def.columns().size());
  for (const auto& col : def.columns()) {
    switch (col.type) {
      case ColumnType::Int:
      case ColumnType::Timestamp:
        need(8);
        values.emplace_back(static_cast<std::int64_t>(readU64(p + off)));
        off += 8;
        break;
      case ColumnType::Real:
        need(8);
        values.emplace_back(std::bit_cast<double>(readU64(p + off)));
        off += 8;
        break;
      case ColumnType::String: {
        need(4);
        const std::uint32_t len = readU32(p + off);
        off += 4;
        need(len);
        values.emplace_back(std::string(payload.substr(off, len)));
        off += len;
        break;
      }
    }
  }
  if (off != payload.size()) fail(ErrorCode::Storage, "trailing bytes in row of table " + def.name());
  Tuple t;
  t.table = def.name();
  t.timestamp = std::get<std::int64_t>(values[def.timestampIndex()]);
  t.values = std::move(values);
  return t;
}

Tuple latestMerge(const TableDefinition& def, const std::optional<Tuple>& existing, const Tuple& incoming) {
  if (!existing) return incoming;
  if (!(definingKeyOf(def, *existing) == definingKeyOf(def, incoming))) {
    fail(ErrorCode::KeyMismatch, "latestMerge of tuples with different defining keys");
  }
  return incoming.timestamp >= existing->timestamp ? incoming : *existing;
}

CleanupRule CleanupRule::whereRule(const TableDefinition& def, std::string_view condition,
                                   std::int64_t intervalMs) {
  if (intervalMs <= 0) fail(ErrorCode::InvalidArgument, "cleanup interval must be positive");
  CleanupRule r;
  r.table = def.name();
  r.kind = Kind::Where;
  r.where = parseCondition(condition, def, true);
  r.intervalMs = intervalMs;
  r.text = std::string(condition);
  return r;
}

CleanupRule CleanupRule::keepNewestRule(const TableDefinition& def, std::size_t count, std::int64_t intervalMs) {
  if (intervalMs <= 0) fail(ErrorCode::InvalidArgument, "cleanup interval must be positive");
  CleanupRule r;
  r.table = def.name();
  r.kind = Kind::KeepNewest;
  r.keepNewest = count;
  r.intervalMs = intervalMs;
  r.text = "KEEP NEWEST " + std::to_string(count);
  return r;
}

std::size_t applyCleanup(std::vector<Tuple>& rows, const CleanupRule& rule, std::int64_t now) {
  const std::size_t before = rows.size();
  if (rule.kind == CleanupRule::Kind::Where) {
    // Evaluate everything first so a TypeError leaves the rows untouched.
    std::vector<char> drop(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) drop[i] = evaluate(rule.where, rows[i], now);
    std::size_t w = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (drop[i]) continue;
      if (w != i) rows[w] = std::move(rows[i]);
      ++w;
    }
    rows.resize(w);
    return before - w;
  }
  if (rows.size() <= rule.keepNewest) return 0;
  // Newest by timestamp; among equal timestamps the later arrival counts as newer.
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rows[a].timestamp > rows[b].timestamp || (rows[a].timestamp == rows[b].timestamp && a > b);
  });
  std::vector<char> keep(rows.size());
  for (std::size_t i = 0; i < rule.keepNewest; ++i) keep[order[i]] = 1;
  std::size_t w = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!keep[i]) continue;
    if (w != i) rows[w] = std::move(rows[i]);
    ++w;
  }
  rows.resize(w);
  return before - w;
}

namespace {

bool sameRepresentation(ColumnType a, ColumnType b) {
  return (isIntegral(a) && isIntegral(b)) || a == b;
}

}  // namespace

std::vector<std::vector<Value>> selectRows(const Query& query, std::span<const std::vector<Tuple>* const> sources) {
  if (sources.size() != query.tables.size()) fail(ErrorCode::Internal, "one row source per table expected");
  std::vector<std::vector<Value>> out;

  if (query.tables.size() == 1) {
    for (const auto& t : *sources[0]) {
      if (evaluate(query.condition, t)) out.push_back(t.values);
    }
    return out;
  }

  // Extend partial rows one table at a time, using an index on the join
  // columns that link the new table to the ones already placed.
  std::vector<std::vector<const Tuple*>> partial;
  for (const auto& t : *sources[0]) partial.push_back({&t});

  for (std::size_t i = 1; i < query.tables.size(); ++i) {
    std::vector<std::pair<ColumnRef, ColumnRef>> links;  // (earlier column, column of table i)
    for (const auto& [a, b] : query.joinEqualities) {
      if (a.table == i && b.table < i && sameRepresentation(query.typeOf(a), query.typeOf(b))) links.push_back({b, a});
      if (b.table == i && a.table < i && sameRepresentation(query.typeOf(a), query.typeOf(b))) links.push_back({a, b});
    }
    std::vector<std::vector<const Tuple*>> next;
    if (links.empty()) {
      for (const auto& p : partial) {
        for (const auto& t : *sources[i]) {
          auto row = p;
          row.push_back(&t);
          next.push_back(std::move(row));
        }
      }
    } else {
      std::multimap<std::vector<Value>, const Tuple*, ValueLess> index;
      for (const auto& t : *sources[i]) {
        std::vector<Value> key;
        for (const auto& l : links) key.push_back(t.values[l.second.column]);
        index.emplace(std::move(key), &t);
      }
      for (const auto& p : partial) {
        std::vector<Value> key;
        for (const auto& l : links) key.push_back(p[l.first.table]->values[l.first.column]);
        auto [lo, hi] = index.equal_range(key);
        for (auto it = lo; it != hi; ++it) {
          auto row = p;
          row.push_back(it->second);
          next.push_back(std::move(row));
        }
      }
    }
    partial = std::move(next);
  }

  const Condition full = query.fullCondition();
  std::vector<const std::vector<Value>*> binding(query.tables.size());
  for (const auto& p : partial) {
    for (std::size_t i = 0; i < p.size(); ++i) binding[i] = &p[i]->values;
    if (!evaluate(full, RowBinding(binding))) continue;
    std::vector<Value> row;
    for (const auto* t : p) row.insert(row.end(), t->values.begin(), t->values.end());
    out.push_back(std::move(row));
  }
  return out;
}

void LatestStore::attach(const std::filesystem::path& path, bool syncWrites) {
  std::vector<std::string> recovered;
  log_ = RecordLog::open(path, def_.schemaHash(), &recovered, syncWrites);
  rows_.clear();
  for (const auto& payload : recovered) {
    Tuple t = decodeTuple(def_, payload);
    auto key = definingKeyOf(def_, t).keyValues;
    auto it = rows_.find(key);
    if (it == rows_.end()) {
      rows_.emplace(std::move(key), std::move(t));
    } else if (t.timestamp >= it->second.timestamp) {
      it->second = std::move(t);
    }
  }
  compactIfLarge();
}

bool LatestStore::insert(const Tuple& tuple) {
  auto key = definingKeyOf(def_, tuple).keyValues;
  auto it = rows_.find(key);
  if (it != rows_.end() && tuple.timestamp < it->second.timestamp) return false;
  if (log_.isOpen()) log_.append(encodeTuple(def_, tuple));
  if (it == rows_.end()) {
    rows_.emplace(std::move(key), tuple);
  } else {
    it->second = tuple;
  }
  compactIfLarge();
  return true;
}

std::vector<Tuple> LatestStore::rows() const {
  std::vector<Tuple> out;
  out.reserve(rows_.size());
  for (const auto& [k, t] : rows_) out.push_back(t);
  return out;
}

std::size_t LatestStore::cleanup(const CleanupRule& rule, std::int64_t now) {
  std::vector<Tuple> all = rows();
  const std::size_t removed = applyCleanup(all, rule, now);
  if (removed > 0) replaceAll(std::move(all));
  return removed;
}

std::size_t LatestStore::removeIf(const std::function<bool(const Tuple&)>& pred) {
  std::vector<Tuple> kept;
  std::size_t removed = 0;
  for (const auto& [k, t] : rows_) {
    if (pred(t)) {
      ++removed;
    } else {
      kept.push_back(t);
    }
  }
  if (removed > 0) replaceAll(std::move(kept));
  return removed;
}

void LatestStore::replaceAll(std::vector<Tuple> all) {
  rows_.clear();
  std::vector<std::string> payloads;
  for (auto& t : all) {
    if (log_.isOpen()) payloads.push_back(encodeTuple(def_, t));
    auto key = definingKeyOf(def_, t).keyValues;
    rows_.emplace(std::move(key), std::move(t));
  }
  if (log_.isOpen()) log_.rewrite(payloads);
}

void LatestStore::compactIfLarge() {
  if (!log_.isOpen() || log_.records() <= 2 * rows_.size() + 64) return;
  std::vector<std::string> payloads;
  payloads.reserve(rows_.size());
  for (const auto& [k, t] : rows_) payloads.push_back(encodeTuple(def_, t));
  log_.rewrite(payloads);
}

void HistoryStore::attach(const std::filesystem::path& path, bool syncWrites) {
  std::vector<std::string> recovered;
  log_ = RecordLog::open(path, def_.schemaHash(), &recovered, syncWrites);
  rows_.clear();
  rows_.reserve(recovered.size());
  for (const auto& payload : recovered) rows_.push_back(decodeTuple(def_, payload));
}

void HistoryStore::append(const Tuple& tuple) {
  if (log_.isOpen()) log_.append(encodeTuple(def_, tuple));
  rows_.push_back(tuple);
}

std::size_t HistoryStore::cleanup(const CleanupRule& rule, std::int64_t now) {
  const std::size_t removed = applyCleanup(rows_, rule, now);
  if (removed > 0 && log_.isOpen()) {
    std::vector<std::string> payloads;
    payloads.reserve(rows_.size());
    for (const auto& t : rows_) payloads.push_back(encodeTuple(def_, t));
    log_.rewrite(payloads);
  }
  return removed;
}

}  // namespace rgma

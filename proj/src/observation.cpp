#include "pact/observation.hpp"

#include <algorithm>
#include <cstdlib>

namespace pact {

std::string to_string(Redaction r) {
  switch (r) {
    case Redaction::none: return "none";
    case Redaction::day: return "day";
    case Redaction::suppress_time: return "suppress-time";
  }
  return "?";
}

Redaction redaction_from_string(std::string_view s) {
  if (s == "none") return Redaction::none;
  if (s == "day" || s == "day-granularity") return Redaction::day;
  if (s == "suppress-time") return Redaction::suppress_time;
  throw Error("unknown redaction policy: " + std::string(s));
}

ObservationStore::ObservationStore(core::Params params, Seconds retention, Redaction redaction)
    : params_(params), retention_(retention), redaction_(redaction) {
  params_.validate();
  if (retention_ <= 0) throw Error("retention must be positive");
}

bool ObservationStore::add(const core::PseudonymId& id, Seconds heard_at) {
  auto& times = core_[id];
  const auto epoch = core::epoch_index(heard_at, params_).index;
  for (auto t : times) {
    if (core::epoch_index(t, params_).index == epoch) return false;
  }
  times.push_back(heard_at);
  ++core_count_;
  return true;
}

bool ObservationStore::add_alt(const AltTriple& triple, std::int64_t day) {
  auto& bucket = alt_[day];
  if (std::find(bucket.begin(), bucket.end(), triple) != bucket.end()) return false;
  bucket.push_back(triple);
  ++alt_count_;
  return true;
}

std::span<const Seconds> ObservationStore::heard_times(const core::PseudonymId& id) const {
  auto it = core_.find(id);
  if (it == core_.end()) return {};
  return it->second;
}

std::size_t ObservationStore::purge(Seconds now) {
  std::size_t removed = 0;
  for (auto it = core_.begin(); it != core_.end();) {
    auto& times = it->second;
    const auto before = times.size();
    std::erase_if(times, [&](Seconds t) { return now - t >= retention_; });
    removed += before - times.size();
    it = times.empty() ? core_.erase(it) : std::next(it);
  }
  core_count_ -= removed;

  // a bucket goes once its latest possible record is past retention
  std::size_t alt_removed = 0;
  for (auto it = alt_.begin(); it != alt_.end();) {
    const Seconds latest = (it->first + 1) * kSecondsPerDay - 1;
    if (now - latest >= retention_) {
      alt_removed += it->second.size();
      it = alt_.erase(it);
    } else {
      ++it;
    }
  }
  alt_count_ -= alt_removed;
  return removed + alt_removed;
}

ExposureEvent ObservationStore::make_event(Bytes matched, std::optional<Seconds> heard_at,
                                           std::optional<std::int64_t> day) const {
  ExposureEvent e;
  e.matched = std::move(matched);
  switch (redaction_) {
    case Redaction::none:
      e.heard_at = heard_at;
      [[fallthrough]];
    case Redaction::day:
      e.day = day ? day : heard_at ? std::optional(day_of(*heard_at)) : std::nullopt;
      break;
    case Redaction::suppress_time:
      break;
  }
  return e;
}

std::vector<std::pair<core::PseudonymId, Seconds>> ObservationStore::core_records() const {
  std::vector<std::pair<core::PseudonymId, Seconds>> out;
  out.reserve(core_count_);
  for (const auto& [id, times] : core_) {
    for (auto t : times) out.emplace_back(id, t);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  return out;
}

void ObservationStore::clear() {
  core_.clear();
  alt_.clear();
  core_count_ = alt_count_ = 0;
}

namespace core {

std::vector<ExposureEvent> match_exposure(const ObservationStore& store, std::span<const TimedId> candidates,
                                          Seconds time_tolerance) {
  if (time_tolerance < 0) throw Error("time tolerance must be non-negative");
  const Seconds window = store.params().dt + time_tolerance;
  std::vector<ExposureEvent> events;
  for (const auto& c : candidates) {
    for (auto t : store.heard_times(c.id)) {
      if (std::llabs(t - c.epoch_start) <= window) {
        events.push_back(store.make_event(c.id.bytes, t, std::nullopt));
      }
    }
  }
  return events;
}

}  // namespace core
}  // namespace pact

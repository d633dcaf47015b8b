#pragma once

// Fixed-size uniform reservoir sampling with geometric skips (Li's
// Algorithm L). After the reservoir holds M items, the index of the next
// accepted item is drawn directly, so skipped items are never inspected.

#include <cmath>
#include <cstdint>
#include <limits>
#include <ranges>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "volseg/error.hpp"
#include "volseg/random.hpp"
#include "volseg/volume_io.hpp"

namespace volseg {

inline constexpr std::uint64_t kNoCandidate = std::numeric_limits<std::uint64_t>::max();

/// Items skipped before the next acceptance, plus one:
/// floor(log(u) / log(1 - w)) + 1. Saturates to kNoCandidate when the gap
/// exceeds any addressable stream.
inline std::uint64_t skip_gap(double w, double u) {
  const double denom = std::log1p(-w);
  if (denom == 0.0) return kNoCandidate;
  const double gap = std::floor(std::log(u) / denom) + 1.0;
  if (!(gap < 0x1.0p62)) return kNoCandidate;
  return gap < 1.0 ? 1 : static_cast<std::uint64_t>(gap);
}

/// w * u^(1/m). When u is within rounding of 1 the product can round back
/// to w; step one ulp down so the weight still strictly decreases.
inline double update_weight(double w, double u, std::size_t m) {
  const double next = w * std::exp(std::log(u) / static_cast<double>(m));
  return next < w ? next : std::nextafter(w, 0.0);
}

/// Reservoir of at most `capacity` items. Items arrive either one by one
/// via push() (every item is inspected) or in contiguous runs via feed()
/// (only accepted items are read). Both paths consume the generator
/// identically, so for the same seed they select the same indices.
template <class T>
class ReservoirSampler {
 public:
  ReservoirSampler(std::size_t capacity, std::uint64_t seed)
      : capacity_(capacity), rng_(seed) {
    if (capacity == 0) throw Error(ErrorCode::InvalidM, "reservoir size must be >= 1");
  }

  void push(const T& item) {
    if (seen_ == next_) accept(item);
    ++seen_;
  }

  /// Offers the next `std::ranges::size(run)` stream items at once.
  template <std::ranges::random_access_range R>
  void feed(R&& run) {
    const std::uint64_t base = seen_;
    const auto len = static_cast<std::uint64_t>(std::ranges::size(run));
    auto first = std::ranges::begin(run);
    while (next_ != kNoCandidate && next_ < base + len) {
      seen_ = next_;
      accept(first[static_cast<std::ptrdiff_t>(next_ - base)]);
    }
    seen_ = base + len;
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::uint64_t seen() const noexcept { return seen_; }
  std::uint64_t replacements() const noexcept { return replacements_; }
  /// Stream index of the next item that will enter the reservoir.
  std::uint64_t next_candidate() const noexcept { return next_; }
  double weight() const noexcept { return w_; }
  const std::vector<T>& reservoir() const noexcept { return reservoir_; }
  std::vector<T> take() && { return std::move(reservoir_); }

 private:
  void accept(const T& item) {
    if (reservoir_.size() < capacity_) {
      if (reservoir_.empty()) reservoir_.reserve(capacity_);
      reservoir_.push_back(item);
      if (reservoir_.size() < capacity_) {
        next_ = seen_ + 1;
        return;
      }
      w_ = update_weight(1.0, rng_.uniform_open(), capacity_);
    } else {
      reservoir_[rng_.uniform_index(capacity_)] = item;
      ++replacements_;
      w_ = update_weight(w_, rng_.uniform_open(), capacity_);
    }
    const std::uint64_t gap = skip_gap(w_, rng_.uniform_open());
    next_ = gap > kNoCandidate - seen_ ? kNoCandidate : seen_ + gap;
  }

  std::size_t capacity_;
  Rng rng_;
  std::vector<T> reservoir_;
  double w_ = 1.0;
  std::uint64_t seen_ = 0;
  std::uint64_t next_ = 0;
  std::uint64_t replacements_ = 0;
};

struct StratumSlice {
  std::size_t stratum = 0;
  std::size_t offset = 0;
  std::size_t count = 0;
};

/// Extracted sample. When stratified, `values` is the concatenation of the
/// per-stratum sub-samples described by `per_stratum`.
struct Sample {
  std::vector<double> values;
  std::uint64_t seed = 0;
  std::string strategy = "simple";
  std::vector<StratumSlice> per_stratum;

  std::size_t size() const noexcept { return values.size(); }

  std::span<const double> stratum_values(std::size_t slice) const {
    const auto& s = per_stratum.at(slice);
    return std::span<const double>(values).subspan(s.offset, s.count);
  }
};

/// Uniform sample of min(M, N) items from an in-memory stream.
template <std::ranges::random_access_range R>
Sample reservoir_sample(R&& stream, std::size_t m, std::uint64_t seed) {
  if (m == 0) throw Error(ErrorCode::InvalidM, "sample size must be >= 1");
  if (std::ranges::size(stream) == 0) throw Error(ErrorCode::EmptyStream, "stream has no items");
  ReservoirSampler<double> sampler(m, seed);
  sampler.feed(stream);
  Sample out;
  out.values = std::move(sampler).take();
  out.seed = seed;
  return out;
}

/// Single pass over a volume.
inline Sample reservoir_sample(const VolumeHandle& handle, std::size_t m,
                               std::uint64_t seed,
                               std::size_t chunk_len = kDefaultChunkLen) {
  if (m == 0) throw Error(ErrorCode::InvalidM, "sample size must be >= 1");
  ReservoirSampler<double> sampler(m, seed);
  for_each_chunk(handle, chunk_len, [&](const ValueChunk& c) { sampler.feed(c.values); });
  Sample out;
  out.values = std::move(sampler).take();
  out.seed = seed;
  return out;
}

}  // namespace volseg

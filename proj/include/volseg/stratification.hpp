#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "volseg/error.hpp"
#include "volseg/random.hpp"
#include "volseg/sampler.hpp"
#include "volseg/volume_io.hpp"

namespace volseg {

enum class StrategyKind { Simple, Linear, Exponential, Mixed };

/// Boundaries b_0 = 0 < b_1 < ... < b_K = 1 over normalized values.
/// Stratum k is [b_k, b_{k+1}); the last one also contains 1.
struct Stratification {
  std::vector<double> boundaries{0.0, 1.0};
  StrategyKind kind = StrategyKind::Simple;
  std::string spec = "simple";

  std::size_t strata() const noexcept { return boundaries.size() - 1; }
};

namespace detail {

inline void check_boundaries(const Stratification& s) {
  const auto& b = s.boundaries;
  if (b.size() < 2 || b.front() != 0.0 || b.back() != 1.0 ||
      std::adjacent_find(b.begin(), b.end(), std::greater_equal<>()) != b.end()) {
    throw Error(ErrorCode::InvalidK, "strategy '" + s.spec +
                                         "' does not yield strictly increasing boundaries");
  }
}

inline void check_k(long long k) {
  if (k < 1) throw Error(ErrorCode::InvalidK, "stratum count must be >= 1, got " + std::to_string(k));
  // 2^(1-K) must stay a normal double.
  if (k > 1000) throw Error(ErrorCode::InvalidK, "stratum count too large: " + std::to_string(k));
}

}  // namespace detail

inline Stratification simple_stratification() { return Stratification{}; }

inline Stratification linear_boundaries(long long k) {
  detail::check_k(k);
  Stratification s;
  s.kind = StrategyKind::Linear;
  s.spec = "linear:" + std::to_string(k);
  s.boundaries.resize(static_cast<std::size_t>(k) + 1);
  for (long long i = 0; i <= k; ++i) {
    s.boundaries[static_cast<std::size_t>(i)] = static_cast<double>(i) / static_cast<double>(k);
  }
  return s;
}

inline Stratification exponential_boundaries(long long k) {
  detail::check_k(k);
  Stratification s;
  s.kind = StrategyKind::Exponential;
  s.spec = "exp:" + std::to_string(k);
  s.boundaries.assign(1, 0.0);
  for (long long i = 0; i < k; ++i) {
    s.boundaries.push_back(std::ldexp(1.0, static_cast<int>(1 - k + i)));
  }
  return s;
}

/// Exponential strata on [0, t] followed by linear strata on [t, 1].
inline Stratification mixed_boundaries(long long k_exp, long long k_lin, double t) {
  detail::check_k(k_exp);
  detail::check_k(k_lin);
  if (!(t > 0.0 && t < 1.0)) {
    throw Error(ErrorCode::InvalidThreshold, "threshold must lie in (0, 1)");
  }
  Stratification s;
  s.kind = StrategyKind::Mixed;
  s.spec = "mixed:" + std::to_string(k_exp) + "," + std::to_string(k_lin) + "," +
           detail::format_double(t);
  s.boundaries.assign(1, 0.0);
  for (long long i = 0; i < k_exp; ++i) {
    s.boundaries.push_back(t * std::ldexp(1.0, static_cast<int>(1 - k_exp + i)));
  }
  for (long long i = 1; i <= k_lin; ++i) {
    s.boundaries.push_back(i == k_lin ? 1.0
                                      : t + (1.0 - t) * static_cast<double>(i) /
                                                static_cast<double>(k_lin));
  }
  detail::check_boundaries(s);
  return s;
}

/// Parses `simple`, `linear:K`, `exp:K` or `mixed:Ke,Kl,t`.
inline Stratification parse_strategy(std::string_view text) {
  const auto bad = [&] {
    return Error(ErrorCode::InvalidStrategy, "cannot parse strategy '" + std::string(text) + "'");
  };
  const auto parse_k = [&](std::string_view s) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw bad();
    return v;
  };
  if (text == "simple") return simple_stratification();
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw bad();
  const auto name = text.substr(0, colon);
  const auto args = text.substr(colon + 1);
  if (name == "linear") return linear_boundaries(parse_k(args));
  if (name == "exp") return exponential_boundaries(parse_k(args));
  if (name == "mixed") {
    const auto c1 = args.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : args.find(',', c1 + 1);
    if (c2 == std::string_view::npos) throw bad();
    const auto t = detail::parse_double(args.substr(c2 + 1));
    if (!t) throw bad();
    return mixed_boundaries(parse_k(args.substr(0, c1)),
                            parse_k(args.substr(c1 + 1, c2 - c1 - 1)), *t);
  }
  throw bad();
}

inline std::size_t assign_stratum(double v, const Stratification& strat) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw Error(ErrorCode::OutOfRange, "value " + detail::format_double(v) + " outside [0, 1]");
  }
  const auto& b = strat.boundaries;
  const auto it = std::upper_bound(b.begin() + 1, b.end() - 1, v);
  return static_cast<std::size_t>(it - (b.begin() + 1));
}

inline std::vector<std::uint64_t> histogram_pass(std::span<const double> stream,
                                                 const Stratification& strat) {
  if (stream.empty()) throw Error(ErrorCode::EmptyStream, "histogram over empty stream");
  std::vector<std::uint64_t> counts(strat.strata(), 0);
  for (double v : stream) ++counts[assign_stratum(v, strat)];
  return counts;
}

inline std::vector<std::uint64_t> histogram_pass(const VolumeHandle& handle,
                                                 const Stratification& strat,
                                                 std::size_t chunk_len = kDefaultChunkLen) {
  std::vector<std::uint64_t> counts(strat.strata(), 0);
  for_each_chunk(handle, chunk_len, [&](const ValueChunk& c) {
    for (double v : c.values) ++counts[assign_stratum(v, strat)];
  });
  return counts;
}

struct StratumAllocation {
  std::vector<std::uint64_t> counts;   // N_k
  std::vector<double> frequencies;     // c_k = N_k / N
  std::vector<std::uint64_t> sizes;    // n_k
  std::uint64_t requested = 0;         // M
  /// Nonempty strata that receive no sample.
  std::vector<std::size_t> zero_strata;

  std::uint64_t population() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  }
  std::uint64_t total() const {
    return std::accumulate(sizes.begin(), sizes.end(), std::uint64_t{0});
  }
};

struct AllocationOptions {
  /// Give every nonempty stratum at least one unit, taken from the
  /// currently largest allocation.
  bool min_one = false;
};

/// Proportional allocation n_k = M c_k, integerized by largest remainder
/// (ties to the lower index) and clamped to n_k <= N_k.
inline StratumAllocation allocate(std::span<const std::uint64_t> counts, std::uint64_t m,
                                  AllocationOptions opts = {}) {
  if (m == 0) throw Error(ErrorCode::InvalidM, "sample size must be >= 1");
  StratumAllocation a;
  a.counts.assign(counts.begin(), counts.end());
  a.requested = m;
  const std::uint64_t n = a.population();
  if (n == 0) throw Error(ErrorCode::EmptyStream, "all strata are empty");
  const std::size_t k = counts.size();

  __extension__ using u128 = unsigned __int128;
  a.frequencies.resize(k);
  a.sizes.resize(k);
  std::vector<std::uint64_t> remainder(k);
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    a.frequencies[i] = static_cast<double>(counts[i]) / static_cast<double>(n);
    const u128 scaled = static_cast<u128>(m) * counts[i];
    a.sizes[i] = static_cast<std::uint64_t>(scaled / n);
    remainder[i] = static_cast<std::uint64_t>(scaled % n);
    assigned += a.sizes[i];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return remainder[x] > remainder[y]; });
  for (std::uint64_t left = m - assigned, j = 0; left > 0; --left, ++j) {
    ++a.sizes[order[j % k]];
  }

  // Clamp to the stratum population and hand the excess to strata that
  // still have room, in the same priority order.
  std::uint64_t excess = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (a.sizes[i] > counts[i]) {
      excess += a.sizes[i] - counts[i];
      a.sizes[i] = counts[i];
    }
  }
  for (std::size_t idx : order) {
    if (excess == 0) break;
    const std::uint64_t room = counts[idx] - a.sizes[idx];
    const std::uint64_t give = std::min(room, excess);
    a.sizes[idx] += give;
    excess -= give;
  }

  if (opts.min_one) {
    for (std::size_t i = 0; i < k; ++i) {
      if (counts[i] == 0 || a.sizes[i] != 0) continue;
      const auto donor = std::max_element(a.sizes.begin(), a.sizes.end());
      if (*donor < 2) break;
      --*donor;
      a.sizes[i] = 1;
    }
  }

  for (std::size_t i = 0; i < k; ++i) {
    if (counts[i] > 0 && a.sizes[i] == 0) a.zero_strata.push_back(i);
  }
  return a;
}

struct StratifiedOptions {
  AllocationOptions allocation;
  std::size_t chunk_len = kDefaultChunkLen;
};

struct StratifiedSample {
  Sample sample;
  StratumAllocation allocation;
};

namespace detail {

// `pass(fn)` must call fn(std::span<const double>) over the whole population
// in index order; it is invoked once per traversal.
template <class Pass>
StratifiedSample stratified_sample_impl(Pass&& pass, std::uint64_t population,
                                        const Stratification& strat, std::uint64_t m,
                                        std::uint64_t seed, const StratifiedOptions& opts) {
  if (m == 0) throw Error(ErrorCode::InvalidM, "sample size must be >= 1");
  StratifiedSample out;
  out.sample.seed = seed;
  out.sample.strategy = strat.spec;

  if (strat.strata() == 1) {
    // One stratum: no histogram needed, and the reservoir may skip.
    const std::uint64_t counts[] = {population};
    out.allocation = allocate(counts, m, opts.allocation);
    ReservoirSampler<double> sampler(static_cast<std::size_t>(m), derive_seed(seed, 0));
    pass([&](std::span<const double> run) { sampler.feed(run); });
    out.sample.values = std::move(sampler).take();
    out.sample.per_stratum.push_back({0, 0, out.sample.values.size()});
    return out;
  }

  std::vector<std::uint64_t> counts(strat.strata(), 0);
  pass([&](std::span<const double> run) {
    for (double v : run) ++counts[assign_stratum(v, strat)];
  });
  out.allocation = allocate(counts, m, opts.allocation);

  std::vector<std::optional<ReservoirSampler<double>>> samplers(strat.strata());
  for (std::size_t k = 0; k < samplers.size(); ++k) {
    if (out.allocation.sizes[k] > 0) {
      samplers[k].emplace(static_cast<std::size_t>(out.allocation.sizes[k]), derive_seed(seed, k));
    }
  }
  pass([&](std::span<const double> run) {
    for (double v : run) {
      auto& s = samplers[assign_stratum(v, strat)];
      if (s) s->push(v);
    }
  });

  out.sample.values.reserve(static_cast<std::size_t>(out.allocation.total()));
  for (std::size_t k = 0; k < samplers.size(); ++k) {
    if (!samplers[k]) continue;
    const auto& r = samplers[k]->reservoir();
    out.sample.per_stratum.push_back({k, out.sample.values.size(), r.size()});
    out.sample.values.insert(out.sample.values.end(), r.begin(), r.end());
  }
  return out;
}

}  // namespace detail

/// Two passes (histogram, routed sampling) for K > 1; one pass for K == 1.
/// Stratum k is sampled with seed derive_seed(seed, k).
inline StratifiedSample stratified_sample(const VolumeHandle& handle, const Stratification& strat,
                                          std::uint64_t m, std::uint64_t seed,
                                          const StratifiedOptions& opts = {}) {
  auto pass = [&](auto&& fn) {
    for_each_chunk(handle, opts.chunk_len, [&](const ValueChunk& c) { fn(c.values); });
  };
  return detail::stratified_sample_impl(pass, handle.voxel_count(), strat, m, seed, opts);
}

/// Same procedure over an in-memory population.
inline StratifiedSample stratified_sample(std::span<const double> population,
                                          const Stratification& strat, std::uint64_t m,
                                          std::uint64_t seed, const StratifiedOptions& opts = {}) {
  if (population.empty()) throw Error(ErrorCode::EmptyStream, "population is empty");
  auto pass = [&](auto&& fn) {
    for (std::size_t at = 0; at < population.size(); at += opts.chunk_len) {
      fn(population.subspan(at, std::min(opts.chunk_len, population.size() - at)));
    }
  };
  return detail::stratified_sample_impl(pass, population.size(), strat, m, seed, opts);
}

}  // namespace volseg

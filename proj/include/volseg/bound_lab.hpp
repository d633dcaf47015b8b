#pragma once

// Synthetic phantoms and empirical checks of sampling quality: the
// sup-over-intervals frequency error of a sample, its scaling with sample
// size, and the agreement between sample-trained and fully trained models.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "volseg/clustering.hpp"
#include "volseg/error.hpp"
#include "volseg/metrics.hpp"
#include "volseg/random.hpp"
#include "volseg/segmentation.hpp"
#include "volseg/stratification.hpp"
#include "volseg/volume_io.hpp"

namespace volseg {

// ---------------------------------------------------------------------------
// Phantoms

struct Material {
  double mean = 0.0;
  double sd = 0.0;
  double fraction = 1.0;
};

/// Materials occupy contiguous runs of linear indices, in order, sized by
/// fraction (largest remainder). Voxel values are N(mean, sd) clamped to
/// [0, 1], drawn sequentially from Rng(seed).
class Phantom {
 public:
  Phantom(Dims dims, std::vector<Material> materials, std::uint64_t seed)
      : dims_(dims), materials_(std::move(materials)), seed_(seed) {
    if (materials_.empty()) throw Error(ErrorCode::InvalidFractions, "no materials");
    double sum = 0.0;
    for (const auto& m : materials_) {
      if (!(m.fraction >= 0.0)) throw Error(ErrorCode::InvalidFractions, "negative fraction");
      if (!(m.mean >= 0.0 && m.mean <= 1.0)) throw Error(ErrorCode::InvalidArgument, "material mean outside [0, 1]");
      if (!(m.sd >= 0.0)) throw Error(ErrorCode::InvalidArgument, "material sd must be >= 0");
      sum += m.fraction;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw Error(ErrorCode::InvalidFractions, "fractions sum to " + detail::format_double(sum));
    }
    if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0) throw Error(ErrorCode::InvalidArgument, "dims must be >= 1");

    // Largest-remainder split of N, scaled to integer weights.
    const std::uint64_t n = voxel_count();
    std::vector<std::uint64_t> weights;
    for (const auto& m : materials_) weights.push_back(static_cast<std::uint64_t>(std::llround(m.fraction * 1e12)));
    const std::uint64_t weight_sum = std::accumulate(weights.begin(), weights.end(), std::uint64_t{0});
    if (weight_sum == 0) throw Error(ErrorCode::InvalidFractions, "all fractions are zero");
    const StratumAllocation split = allocate(weights, n);
    ends_.resize(materials_.size());
    std::partial_sum(split.sizes.begin(), split.sizes.end(), ends_.begin());
  }

  const Dims& dims() const noexcept { return dims_; }
  const std::vector<Material>& materials() const noexcept { return materials_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t voxel_count() const noexcept { return dims_[0] * dims_[1] * dims_[2]; }

  /// Ground-truth material of linear voxel index i.
  std::uint32_t label_at(std::uint64_t i) const {
    return static_cast<std::uint32_t>(std::upper_bound(ends_.begin(), ends_.end(), i) - ends_.begin());
  }

  std::uint64_t material_voxels(std::size_t j) const { return ends_[j] - (j == 0 ? 0 : ends_[j - 1]); }

  /// Generates all values in order, calling fn(std::span<const double>).
  template <class Fn>
  void generate(Fn&& fn, std::size_t chunk_len = kDefaultChunkLen) const {
    Rng rng(seed_);
    std::vector<double> buf;
    const std::uint64_t n = voxel_count();
    for (std::uint64_t at = 0; at < n;) {
      const auto len = static_cast<std::size_t>(std::min<std::uint64_t>(chunk_len, n - at));
      buf.resize(len);
      for (std::size_t i = 0; i < len; ++i) {
        const Material& m = materials_[label_at(at + i)];
        const double v = m.sd > 0.0 ? m.mean + m.sd * rng.normal() : m.mean;
        buf[i] = std::clamp(v, 0.0, 1.0);
      }
      fn(std::span<const double>(buf));
      at += len;
    }
  }

  std::vector<double> values() const {
    std::vector<double> all;
    all.reserve(static_cast<std::size_t>(voxel_count()));
    generate([&](std::span<const double> run) { all.insert(all.end(), run.begin(), run.end()); });
    return all;
  }

  std::vector<std::uint32_t> truth() const {
    std::vector<std::uint32_t> labels(static_cast<std::size_t>(voxel_count()));
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = label_at(i);
    return labels;
  }

 private:
  Dims dims_;
  std::vector<Material> materials_;
  std::uint64_t seed_;
  std::vector<std::uint64_t> ends_;
};

/// Builds the phantom and streams it to `data_path` (plus sidecar).
inline Phantom generate_phantom(Dims dims, std::vector<Material> materials, std::uint64_t seed,
                                const std::filesystem::path& data_path,
                                ElementType type = ElementType::U16) {
  Phantom phantom(dims, std::move(materials), seed);
  VolumeWriter writer(data_path, dims, type);
  phantom.generate([&](std::span<const double> run) { writer.write(run); });
  writer.finish();
  return phantom;
}

/// Streams the ground-truth labels as a u8 label volume.
inline std::filesystem::path write_truth(const Phantom& phantom, const std::filesystem::path& data_path) {
  LabelWriter writer(data_path, phantom.dims());
  std::vector<std::uint32_t> buf;
  const std::uint64_t n = phantom.voxel_count();
  for (std::uint64_t at = 0; at < n;) {
    const auto len = static_cast<std::size_t>(std::min<std::uint64_t>(kDefaultChunkLen, n - at));
    buf.resize(len);
    for (std::size_t i = 0; i < len; ++i) buf[i] = phantom.label_at(at + i);
    writer.write(std::span<const std::uint32_t>(buf));
    at += len;
  }
  return writer.finish();
}

// ---------------------------------------------------------------------------
// Interval family and sup-interval error

/// All intervals [g_i, g_j), i < j, on a boundary grid g_0 = 0 < ... < g_G = 1.
/// The interval ending at 1 is closed.
struct IntervalFamily {
  std::vector<double> grid;

  static IntervalFamily uniform(std::size_t cells) {
    if (cells == 0) throw Error(ErrorCode::InvalidArgument, "grid needs at least one cell");
    IntervalFamily f;
    f.grid.resize(cells + 1);
    for (std::size_t i = 0; i <= cells; ++i) f.grid[i] = static_cast<double>(i) / static_cast<double>(cells);
    return f;
  }

  std::size_t cells() const noexcept { return grid.size() - 1; }
  std::size_t interval_count() const noexcept { return cells() * (cells() + 1) / 2; }

  std::size_t cell_of(double v) const {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::OutOfRange, "value outside [0, 1]");
    const auto it = std::upper_bound(grid.begin() + 1, grid.end() - 1, v);
    return static_cast<std::size_t>(it - (grid.begin() + 1));
  }
};

/// Counts of values per grid cell.
struct GridHistogram {
  std::vector<std::uint64_t> cells;
  std::uint64_t total = 0;

  explicit GridHistogram(const IntervalFamily& fam) : cells(fam.cells(), 0) {}

  void add(std::span<const double> values, const IntervalFamily& fam) {
    for (double v : values) ++cells[fam.cell_of(v)];
    total += values.size();
  }
};

/// max over family intervals E of | |S & E| / |S| - |X & E| / |X| |, by an
/// exact scan over all G(G+1)/2 grid intervals.
inline double sup_interval_error(const GridHistogram& population, const GridHistogram& sample) {
  if (population.total == 0 || sample.total == 0) throw Error(ErrorCode::EmptyInput, "empty population or sample");
  if (population.cells.size() != sample.cells.size()) throw Error(ErrorCode::InvalidArgument, "grid mismatch");
  const std::size_t g = population.cells.size();
  // prefix[i] = sample mass - population mass of cells [0, i).
  std::vector<double> prefix(g + 1, 0.0);
  std::int64_t s_run = 0;
  std::int64_t p_run = 0;
  const double s_total = static_cast<double>(sample.total);
  const double p_total = static_cast<double>(population.total);
  for (std::size_t i = 0; i < g; ++i) {
    s_run += static_cast<std::int64_t>(sample.cells[i]);
    p_run += static_cast<std::int64_t>(population.cells[i]);
    prefix[i + 1] = static_cast<double>(s_run) / s_total - static_cast<double>(p_run) / p_total;
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t j = i + 1; j <= g; ++j) worst = std::max(worst, std::abs(prefix[j] - prefix[i]));
  }
  return worst;
}

inline double sup_interval_error(std::span<const double> population, std::span<const double> sample,
                                 const IntervalFamily& fam) {
  if (population.empty() || sample.empty()) throw Error(ErrorCode::EmptyInput, "empty population or sample");
  GridHistogram p(fam), s(fam);
  p.add(population, fam);
  s.add(sample, fam);
  return sup_interval_error(p, s);
}

// ---------------------------------------------------------------------------
// Experiments

struct BoundExperimentConfig {
  std::vector<std::uint64_t> sizes{256, 1024, 4096};
  std::size_t seeds = 50;
  double delta = 0.05;  // nominal confidence, reported only
  std::size_t grid = 64;
  std::uint64_t master_seed = 0;
  bool min_one = false;
};

struct ScalingRow {
  std::uint64_t sample_size = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  std::vector<double> errors;  // one per seed, in seed order
};

/// Quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "quantile of nothing");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// For each sample size, draws `seeds` stratified samples (seed
/// derive_seed(master, trial)) and records their sup-interval error.
inline std::vector<ScalingRow> error_scaling_experiment(const VolumeHandle& handle, const Stratification& strat,
                                                        const BoundExperimentConfig& cfg) {
  if (cfg.seeds < 30) throw Error(ErrorCode::InvalidArgument, "need at least 30 seeds per size");
  if (cfg.sizes.empty() || !std::is_sorted(cfg.sizes.begin(), cfg.sizes.end())) {
    throw Error(ErrorCode::InvalidArgument, "sample sizes must be ascending");
  }
  const IntervalFamily fam = IntervalFamily::uniform(cfg.grid);
  GridHistogram population(fam);
  for_each_chunk(handle, kDefaultChunkLen, [&](const ValueChunk& c) { population.add(c.values, fam); });

  StratifiedOptions opts;
  opts.allocation.min_one = cfg.min_one;
  std::vector<ScalingRow> table;
  for (std::uint64_t m : cfg.sizes) {
    ScalingRow row;
    row.sample_size = m;
    for (std::size_t trial = 0; trial < cfg.seeds; ++trial) {
      const auto drawn = stratified_sample(handle, strat, m, derive_seed(cfg.master_seed, trial), opts);
      GridHistogram s(fam);
      s.add(drawn.sample.values, fam);
      row.errors.push_back(sup_interval_error(population, s));
    }
    row.median = quantile(row.errors, 0.5);
    row.q1 = quantile(row.errors, 0.25);
    row.q3 = quantile(row.errors, 0.75);
    table.push_back(std::move(row));
  }
  return table;
}

inline std::string format_scaling_table(const std::vector<ScalingRow>& table) {
  std::string out = "M\tmedian\tq1\tq3\n";
  for (const auto& r : table) {
    out += std::to_string(r.sample_size) + '\t' + detail::format_double(r.median) + '\t' +
           detail::format_double(r.q1) + '\t' + detail::format_double(r.q3) + '\n';
  }
  return out;
}

struct FidelityResult {
  double fm = 0.0;
  double nmi = 0.0;
  double speedup = 0.0;
  double baseline_fit_seconds = 0.0;
  double sample_seconds = 0.0;
  double sampled_fit_seconds = 0.0;
  std::uint64_t sample_size = 0;
};

/// Trains one model on every voxel and one on an extracted sample (same
/// FitConfig and seed), labels the volume with both and compares.
inline FidelityResult fidelity_experiment(const VolumeHandle& handle, const PipelineConfig& cfg) {
  using clock = std::chrono::steady_clock;
  const Stratification strat = parse_strategy(cfg.strategy);
  const std::uint64_t m = resolve_sample_size(cfg.size, handle.voxel_count());
  FitConfig fit = cfg.fit;
  fit.seed = cfg.seed;
  validate(fit);
  if (m < fit.clusters) throw Error(ErrorCode::InsufficientSample, "sample smaller than cluster count");

  FidelityResult r;
  const std::vector<double> all = read_all_values(handle);

  auto start = clock::now();
  const ClusterModel baseline = fit_model(all, cfg.model, fit);
  r.baseline_fit_seconds = detail::seconds_since(start);

  start = clock::now();
  StratifiedOptions opts;
  opts.allocation.min_one = cfg.min_one;
  opts.chunk_len = cfg.chunk_len;
  const StratifiedSample drawn = stratified_sample(handle, strat, m, cfg.seed, opts);
  r.sample_seconds = detail::seconds_since(start);
  r.sample_size = drawn.sample.size();

  start = clock::now();
  const ClusterModel sampled = fit_model(drawn.sample.values, cfg.model, fit);
  r.sampled_fit_seconds = detail::seconds_since(start);

  const auto a = classify_values(baseline, all);
  const auto b = classify_values(sampled, all);
  const ContingencyTable table = build_contingency(std::span<const std::uint32_t>(a), std::span<const std::uint32_t>(b));
  r.fm = fowlkes_mallows(table);
  r.nmi = nmi_mean(table);
  r.speedup = r.baseline_fit_seconds / (r.sample_seconds + r.sampled_fit_seconds);
  return r;
}

}  // namespace volseg

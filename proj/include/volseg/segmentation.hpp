#pragma once

// Sample -> fit -> classify. Volume passes: one for the `simple` strategy
// sample (two with stratification) plus one classification pass. Memory
// beyond the chunk buffers is the sample and the model.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "volseg/clustering.hpp"
#include "volseg/error.hpp"
#include "volseg/model_io.hpp"
#include "volseg/stratification.hpp"
#include "volseg/volume_io.hpp"

namespace volseg {

enum class ModelKind { KMeans, MiniBatch, Gmm };

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "kmeans") return ModelKind::KMeans;
  if (s == "minibatch") return ModelKind::MiniBatch;
  if (s == "gmm") return ModelKind::Gmm;
  throw Error(ErrorCode::InvalidArgument, "unknown model '" + std::string(s) + "'");
}

/// Requested sample size: an absolute count or a percentage of N.
struct SampleSize {
  std::optional<std::uint64_t> count;
  std::optional<double> percent;

  static SampleSize absolute(std::uint64_t m) { return {m, std::nullopt}; }
  static SampleSize of_percent(double p) { return {std::nullopt, p}; }
};

/// ceil(N p / 100) for percentages, so a positive request never rounds to 0.
inline std::uint64_t resolve_sample_size(const SampleSize& size, std::uint64_t voxels) {
  if (size.count.has_value() == size.percent.has_value()) {
    throw Error(ErrorCode::InvalidArgument, "give exactly one of a sample count or a percentage");
  }
  if (size.count) {
    if (*size.count == 0) throw Error(ErrorCode::InvalidM, "sample size must be >= 1");
    return *size.count;
  }
  const double p = *size.percent;
  if (!(p > 0.0 && p <= 100.0)) throw Error(ErrorCode::InvalidM, "percent must lie in (0, 100]");
  // Integer form first so exact requests such as 0.1% of 10^6 stay exact.
  const double scaled = static_cast<double>(voxels) * p / 100.0;
  const double nearest = std::round(scaled);
  const double m = std::abs(scaled - nearest) <= 1e-9 * std::max(1.0, scaled) ? nearest : std::ceil(scaled);
  return static_cast<std::uint64_t>(std::max(1.0, m));
}

struct PipelineConfig {
  std::string strategy = "simple";
  SampleSize size = SampleSize::absolute(4096);
  ModelKind model = ModelKind::Gmm;
  /// fit.seed is overwritten with `seed`.
  FitConfig fit;
  std::uint64_t seed = 0;
  bool min_one = false;
  std::size_t chunk_len = kDefaultChunkLen;
  std::size_t threads = 1;
};

struct SegmentationReport {
  std::uint64_t voxels = 0;
  std::uint64_t sample_size = 0;
  std::uint64_t seed = 0;
  std::string strategy;
  double sample_seconds = 0.0;
  double fit_seconds = 0.0;
  double classify_seconds = 0.0;
  std::uint64_t passes = 0;
  std::vector<std::uint64_t> label_histogram;
  std::optional<ClusterModel> model;
  std::vector<std::string> warnings;
  std::filesystem::path labels_meta;
};

inline ClusterModel fit_model(std::span<const double> values, ModelKind kind, const FitConfig& fit) {
  switch (kind) {
    case ModelKind::KMeans: return kmeans_fit(values, fit);
    case ModelKind::MiniBatch: return minibatch_kmeans_fit(values, fit);
    case ModelKind::Gmm: return gmm_fit(values, fit);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown model kind");
}

/// Labels for an in-memory run of values, split across `threads` workers.
inline void classify_values(const Predictor& predictor, std::span<const double> values,
                            std::span<std::uint32_t> labels, std::size_t threads = 1) {
  const auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) labels[i] = static_cast<std::uint32_t>(predictor(values[i]));
  };
  if (threads <= 1 || values.size() < 4096) {
    work(0, values.size());
    return;
  }
  std::vector<std::jthread> pool;
  const std::size_t step = (values.size() + threads - 1) / threads;
  for (std::size_t begin = 0; begin < values.size(); begin += step) {
    pool.emplace_back(work, begin, std::min(values.size(), begin + step));
  }
}

inline std::vector<std::uint32_t> classify_values(const ClusterModel& model, std::span<const double> values) {
  std::vector<std::uint32_t> labels(values.size());
  classify_values(Predictor(model), values, labels);
  return labels;
}

/// One pass over the volume; sink(std::span<const std::uint32_t>, origin)
/// receives labels in linear index order.
template <class Sink>
void classify_pass(const VolumeHandle& handle, const ClusterModel& model, Sink&& sink,
                   std::size_t threads = 1, std::size_t chunk_len = kDefaultChunkLen) {
  const Predictor predictor(model);
  std::vector<std::uint32_t> labels;
  for_each_chunk(handle, chunk_len, [&](const ValueChunk& c) {
    labels.resize(c.values.size());
    classify_values(predictor, c.values, labels, threads);
    sink(std::span<const std::uint32_t>(labels), c.origin);
  });
}

inline std::string describe_model(const ClusterModel& model) {
  std::ostringstream out;
  if (const auto* km = std::get_if<KMeansModel>(&model)) {
    out << (km->minibatch ? "minibatch" : "kmeans") << " K=" << km->clusters() << " centers=";
    for (std::size_t j = 0; j < km->clusters(); ++j) out << (j ? "," : "") << detail::format_double(km->centers[j]);
    out << " inertia=" << detail::format_double(km->inertia) << " iterations=" << km->iterations;
  } else {
    const auto& g = std::get<GmmModel>(model);
    out << "gmm K=" << g.clusters() << " means=";
    for (std::size_t j = 0; j < g.clusters(); ++j) out << (j ? "," : "") << detail::format_double(g.means[j]);
    out << " log_likelihood=" << detail::format_double(g.log_likelihood) << " iterations=" << g.iterations;
  }
  return out.str();
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline void classify_to_file(const VolumeHandle& handle, const ClusterModel& model,
                             const std::filesystem::path& out_path, std::size_t threads,
                             std::size_t chunk_len, SegmentationReport& report) {
  const auto start = std::chrono::steady_clock::now();
  LabelWriter writer(out_path, handle.dims());
  report.label_histogram.assign(cluster_count(model), 0);
  classify_pass(
      handle, model,
      [&](std::span<const std::uint32_t> labels, std::uint64_t) {
        for (auto l : labels) ++report.label_histogram[l];
        writer.write(labels);
      },
      threads, chunk_len);
  report.labels_meta = writer.finish();
  report.classify_seconds = seconds_since(start);
}

}  // namespace detail

/// Labels every voxel with a model fitted elsewhere.
inline SegmentationReport segment_with_model(const VolumeHandle& handle, const ClusterModel& model,
                                             const std::filesystem::path& out_path,
                                             std::size_t threads = 1,
                                             std::size_t chunk_len = kDefaultChunkLen) {
  SegmentationReport report;
  report.voxels = handle.voxel_count();
  report.seed = std::visit([](const auto& m) { return m.seed; }, model);
  const auto passes_before = handle.passes_started();
  detail::classify_to_file(handle, model, out_path, threads, chunk_len, report);
  report.model = model;
  report.passes = handle.passes_started() - passes_before;
  return report;
}

inline SegmentationReport run_pipeline(const VolumeHandle& handle, const PipelineConfig& cfg,
                                       const std::filesystem::path& out_path) {
  const Stratification strat = parse_strategy(cfg.strategy);
  const std::uint64_t m = resolve_sample_size(cfg.size, handle.voxel_count());
  FitConfig fit = cfg.fit;
  fit.seed = cfg.seed;
  validate(fit);
  if (m < fit.clusters) {
    throw Error(ErrorCode::InsufficientSample, "sample size " + std::to_string(m) + " is below " +
                                                   std::to_string(fit.clusters) + " clusters");
  }

  SegmentationReport report;
  report.voxels = handle.voxel_count();
  report.seed = cfg.seed;
  report.strategy = strat.spec;
  const auto passes_before = handle.passes_started();

  auto start = std::chrono::steady_clock::now();
  StratifiedOptions opts;
  opts.allocation.min_one = cfg.min_one;
  opts.chunk_len = cfg.chunk_len;
  StratifiedSample drawn = stratified_sample(handle, strat, m, cfg.seed, opts);
  report.sample_seconds = detail::seconds_since(start);
  report.sample_size = drawn.sample.size();
  for (std::size_t k : drawn.allocation.zero_strata) {
    report.warnings.push_back("stratum " + std::to_string(k) + " holds " +
                              std::to_string(drawn.allocation.counts[k]) +
                              " voxels but receives no sample");
  }
  if (drawn.sample.size() < fit.clusters) {
    throw Error(ErrorCode::InsufficientSample, "drew " + std::to_string(drawn.sample.size()) +
                                                   " values for " + std::to_string(fit.clusters) +
                                                   " clusters");
  }

  start = std::chrono::steady_clock::now();
  ClusterModel model = fit_model(drawn.sample.values, cfg.model, fit);
  report.fit_seconds = detail::seconds_since(start);
  std::visit([&](const auto& mm) { report.warnings.insert(report.warnings.end(), mm.warnings.begin(), mm.warnings.end()); },
             model);
  drawn = {};

  detail::classify_to_file(handle, model, out_path, cfg.threads, cfg.chunk_len, report);
  report.model = std::move(model);
  report.passes = handle.passes_started() - passes_before;
  return report;
}

inline std::string format_report(const SegmentationReport& r) {
  std::ostringstream out;
  out << "voxels        " << r.voxels << '\n'
      << "seed          " << r.seed << '\n';
  if (!r.strategy.empty()) {
    out << "strategy      " << r.strategy << '\n'
        << "sample size   " << r.sample_size << '\n'
        << "sample time   " << r.sample_seconds << " s\n"
        << "fit time      " << r.fit_seconds << " s\n";
  }
  out << "classify time " << r.classify_seconds << " s\n"
      << "volume passes " << r.passes << '\n';
  if (r.model) out << "model         " << describe_model(*r.model) << '\n';
  out << "labels       ";
  for (std::size_t j = 0; j < r.label_histogram.size(); ++j) out << ' ' << j << ':' << r.label_histogram[j];
  out << '\n';
  return out.str();
}

/// Machine-readable `key=value` lines.
inline std::string format_report_kv(const SegmentationReport& r) {
  std::ostringstream out;
  out << "voxels=" << r.voxels << '\n'
      << "seed=" << r.seed << '\n'
      << "strategy=" << r.strategy << '\n'
      << "sample_size=" << r.sample_size << '\n'
      << "sample_seconds=" << detail::format_double(r.sample_seconds) << '\n'
      << "fit_seconds=" << detail::format_double(r.fit_seconds) << '\n'
      << "classify_seconds=" << detail::format_double(r.classify_seconds) << '\n'
      << "passes=" << r.passes << '\n'
      << "label_histogram=";
  for (std::size_t j = 0; j < r.label_histogram.size(); ++j) out << (j ? "," : "") << r.label_histogram[j];
  out << '\n' << "warnings=" << r.warnings.size() << '\n';
  if (r.model) out << "model=" << model_kind(*r.model) << '\n';
  return out.str();
}

}  // namespace volseg

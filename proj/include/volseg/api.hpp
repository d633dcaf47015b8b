#pragma once

// Path-level entry points. The CLI calls these, and so should any language
// wrapper, so that every front end produces identical artifacts for
// identical arguments.

#include <cstdint>
#include <filesystem>
#include <string>

#include "volseg/sample_io.hpp"
#include "volseg/segmentation.hpp"
#include "volseg/stratification.hpp"
#include "volseg/volume_io.hpp"

namespace volseg::api {

struct SampleRequest {
  std::string strategy = "simple";
  SampleSize size = SampleSize::absolute(4096);
  std::uint64_t seed = 0;
  bool min_one = false;
};

inline StratifiedSample sample_volume(const std::filesystem::path& meta_path, const SampleRequest& req) {
  const Stratification strat = parse_strategy(req.strategy);
  const VolumeHandle handle = open_volume(meta_path);
  const std::uint64_t m = resolve_sample_size(req.size, handle.voxel_count());
  StratifiedOptions opts;
  opts.allocation.min_one = req.min_one;
  return stratified_sample(handle, strat, m, req.seed, opts);
}

inline SegmentationReport segment_volume(const std::filesystem::path& meta_path, const PipelineConfig& cfg,
                                         const std::filesystem::path& out_path) {
  const VolumeHandle handle = open_volume(meta_path);
  return run_pipeline(handle, cfg, out_path);
}

}  // namespace volseg::api

// volseg: sample, fit, segment and evaluate raw grayscale volumes.
//
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "volseg.hpp"

namespace {

constexpr std::uint64_t kDefaultSeed = 1;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t resolve_seed(const std::string& text) {
  if (text == "random") {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) | rd();
  }
  auto v = volseg::detail::parse_u64(text);
  if (!v) throw UsageError("--seed expects an unsigned integer or 'random'");
  return *v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) parts.push_back(item);
  return parts;
}

double to_double(const std::string& s, const char* what) {
  auto v = volseg::detail::parse_double(s);
  if (!v) throw UsageError(std::string("bad number for ") + what + ": '" + s + "'");
  return *v;
}

std::uint64_t to_u64(const std::string& s, const char* what) {
  auto v = volseg::detail::parse_u64(s);
  if (!v) throw UsageError(std::string("bad count for ") + what + ": '" + s + "'");
  return *v;
}

// --strategy accepts full specs (exp:4) or a bare name combined with --strata.
std::string strategy_spec(const std::string& strategy, std::optional<long long> strata) {
  if (!strata) return strategy;
  if (strategy == "linear" || strategy == "exp") return strategy + ":" + std::to_string(*strata);
  throw UsageError("--strata only combines with --strategy linear or exp");
}

struct SizeFlags {
  std::optional<std::uint64_t> size;
  std::optional<double> percent;

  void attach(CLI::App* cmd) {
    auto* s = cmd->add_option("--size", size, "Absolute sample size M");
    auto* p = cmd->add_option("--percent", percent, "Sample size as percent of the voxel count");
    s->excludes(p);
  }
  volseg::SampleSize resolve() const {
    if (percent) return volseg::SampleSize::of_percent(*percent);
    return volseg::SampleSize::absolute(size.value_or(4096));
  }
};

struct FitFlags {
  std::string model = "gmm";
  std::size_t clusters = 2;
  std::size_t max_iter = 300;
  double tol = 1e-6;
  std::size_t restarts = 10;
  std::size_t batch_size = 1024;

  void attach(CLI::App* cmd) {
    cmd->add_option("--model", model, "kmeans | minibatch | gmm")->capture_default_str();
    cmd->add_option("--clusters", clusters, "Number of clusters")->capture_default_str();
    cmd->add_option("--max-iter", max_iter, "Iteration budget per restart")->capture_default_str();
    cmd->add_option("--tol", tol, "Relative convergence tolerance")->capture_default_str();
    cmd->add_option("--restarts", restarts, "Independent restarts")->capture_default_str();
    cmd->add_option("--batch-size", batch_size, "Mini-batch size")->capture_default_str();
  }
  volseg::FitConfig config(std::uint64_t seed) const {
    volseg::FitConfig cfg;
    cfg.clusters = clusters;
    cfg.seed = seed;
    cfg.max_iter = max_iter;
    cfg.tol = tol;
    cfg.restarts = restarts;
    cfg.batch_size = batch_size;
    return cfg;
  }
};

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sampling-based segmentation of large grayscale volumes"};
  app.set_version_flag("--version", volseg::kVersion);
  app.require_subcommand(1);
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--threads", threads, "Worker threads for classification")->check(CLI::PositiveNumber);

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "Extract a (stratified) random sample");
  std::string sample_meta, sample_out, sample_strategy = "simple", sample_seed = std::to_string(kDefaultSeed);
  std::optional<long long> sample_strata;
  bool sample_min_one = false;
  SizeFlags sample_size;
  sample_cmd->add_option("volume", sample_meta, "Volume sidecar")->required();
  sample_cmd->add_option("--strategy", sample_strategy, "simple | linear:K | exp:K | mixed:Ke,Kl,t");
  sample_cmd->add_option("--strata", sample_strata, "Stratum count for --strategy linear|exp");
  sample_size.attach(sample_cmd);
  sample_cmd->add_option("--seed", sample_seed, "Seed, or 'random'");
  sample_cmd->add_option("--out", sample_out, "Sample file")->required();
  sample_cmd->add_flag("--min-one", sample_min_one, "Give every nonempty stratum at least one value");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Train a clustering model on a sample file");
  std::string fit_sample, fit_out, fit_seed = std::to_string(kDefaultSeed);
  FitFlags fit_flags;
  fit_cmd->add_option("--sample", fit_sample, "Sample file")->required();
  fit_flags.attach(fit_cmd);
  fit_cmd->add_option("--seed", fit_seed, "Seed, or 'random'");
  fit_cmd->add_option("--out", fit_out, "Model file")->required();

  // segment
  auto* seg_cmd = app.add_subcommand("segment", "Sample, fit and label every voxel");
  std::string seg_meta, seg_out, seg_strategy = "simple", seg_seed = std::to_string(kDefaultSeed), seg_model_file;
  std::optional<long long> seg_strata;
  bool seg_min_one = false;
  bool seg_kv = false;
  SizeFlags seg_size;
  FitFlags seg_fit;
  seg_cmd->add_option("volume", seg_meta, "Volume sidecar")->required();
  seg_cmd->add_option("--strategy", seg_strategy, "simple | linear:K | exp:K | mixed:Ke,Kl,t");
  seg_cmd->add_option("--strata", seg_strata, "Stratum count for --strategy linear|exp");
  seg_size.attach(seg_cmd);
  seg_fit.attach(seg_cmd);
  seg_cmd->add_option("--seed", seg_seed, "Seed, or 'random'");
  seg_cmd->add_option("--model-file", seg_model_file, "Use a previously fitted model instead of sampling");
  seg_cmd->add_option("--out", seg_out, "Label volume (raw u8; sidecar written next to it)")->required();
  seg_cmd->add_flag("--min-one", seg_min_one, "Give every nonempty stratum at least one value");
  seg_cmd->add_flag("--report-kv", seg_kv, "Also print the report as key=value lines");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Compare two label volumes");
  std::string eval_a, eval_b;
  eval_cmd->add_option("labels_a", eval_a, "First label sidecar")->required();
  eval_cmd->add_option("labels_b", eval_b, "Second label sidecar")->required();

  // phantom
  auto* ph_cmd = app.add_subcommand("phantom", "Write a synthetic multi-material volume");
  std::string ph_dims = "64,64,64", ph_type = "u16", ph_out, ph_truth, ph_seed = std::to_string(kDefaultSeed);
  std::vector<std::string> ph_materials;
  ph_cmd->add_option("--dims", ph_dims, "X,Y,Z")->capture_default_str();
  ph_cmd->add_option("--material", ph_materials, "mean,sd,fraction (repeat per material)")->required();
  ph_cmd->add_option("--type", ph_type, "u8 | u16 | f32")->capture_default_str();
  ph_cmd->add_option("--seed", ph_seed, "Seed, or 'random'");
  ph_cmd->add_option("--out", ph_out, "Volume data file")->required();
  ph_cmd->add_option("--truth", ph_truth, "Also write ground-truth labels here");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Sampling error scaling table, or model fidelity");
  std::string bench_meta, bench_strategy = "exp:4", bench_sizes = "256,1024,4096", bench_seed = std::to_string(kDefaultSeed);
  std::size_t bench_seeds = 50, bench_grid = 64;
  double bench_delta = 0.05;
  bool bench_fidelity = false;
  SizeFlags bench_size;
  FitFlags bench_fit;
  bench_cmd->add_option("volume", bench_meta, "Volume sidecar")->required();
  bench_cmd->add_option("--strategy", bench_strategy, "Stratification strategy")->capture_default_str();
  bench_cmd->add_option("--sizes", bench_sizes, "Ascending sample sizes, comma separated")->capture_default_str();
  bench_cmd->add_option("--seeds", bench_seeds, "Trials per size (>= 30)")->capture_default_str();
  bench_cmd->add_option("--grid", bench_grid, "Interval grid cells")->capture_default_str();
  bench_cmd->add_option("--delta", bench_delta, "Nominal confidence parameter (reported)")->capture_default_str();
  bench_cmd->add_option("--seed", bench_seed, "Seed, or 'random'");
  bench_cmd->add_flag("--fidelity", bench_fidelity, "Compare a sample-trained model against a full-volume fit");
  bench_size.attach(bench_cmd);
  bench_fit.attach(bench_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sample_cmd) {
      const std::uint64_t seed = resolve_seed(sample_seed);
      volseg::api::SampleRequest req;
      req.strategy = strategy_spec(sample_strategy, sample_strata);
      req.size = sample_size.resolve();
      req.seed = seed;
      req.min_one = sample_min_one;
      std::cout << "seed " << seed << '\n';
      const auto drawn = volseg::api::sample_volume(sample_meta, req);
      for (std::size_t k : drawn.allocation.zero_strata) {
        std::cerr << "warning: stratum " << k << " holds " << drawn.allocation.counts[k]
                  << " voxels but receives no sample\n";
      }
      volseg::write_sample(sample_out, drawn.sample);
      std::cout << "sampled " << drawn.sample.size() << " values (" << drawn.sample.strategy << ") -> "
                << sample_out << '\n';
    } else if (*fit_cmd) {
      const std::uint64_t seed = resolve_seed(fit_seed);
      std::cout << "seed " << seed << '\n';
      const volseg::Sample sample = volseg::read_sample(fit_sample);
      const auto model = volseg::fit_model(sample.values, volseg::parse_model_kind(fit_flags.model),
                                           fit_flags.config(seed));
      std::visit([](const auto& m) { print_warnings(m.warnings); }, model);
      volseg::write_model(fit_out, model);
      std::cout << volseg::describe_model(model) << '\n';
    } else if (*seg_cmd) {
      const std::uint64_t seed = resolve_seed(seg_seed);
      std::cout << "seed " << seed << '\n';
      volseg::SegmentationReport report;
      if (!seg_model_file.empty()) {
        const auto model = volseg::read_model(seg_model_file);
        report = volseg::segment_with_model(volseg::open_volume(seg_meta), model, seg_out, threads);
      } else {
        volseg::PipelineConfig cfg;
        cfg.strategy = strategy_spec(seg_strategy, seg_strata);
        cfg.size = seg_size.resolve();
        cfg.model = volseg::parse_model_kind(seg_fit.model);
        cfg.fit = seg_fit.config(seed);
        cfg.seed = seed;
        cfg.min_one = seg_min_one;
        cfg.threads = threads;
        report = volseg::api::segment_volume(seg_meta, cfg, seg_out);
      }
      print_warnings(report.warnings);
      std::cout << volseg::format_report(report);
      if (seg_kv) std::cout << volseg::format_report_kv(report);
    } else if (*eval_cmd) {
      const auto a = volseg::read_labels(volseg::open_volume(eval_a));
      const auto b = volseg::read_labels(volseg::open_volume(eval_b));
      const auto table = volseg::build_contingency(std::span<const std::uint32_t>(a), std::span<const std::uint32_t>(b));
      std::printf("fm %.6f\nnmi %.6f\n", volseg::fowlkes_mallows(table), volseg::nmi_mean(table));
    } else if (*ph_cmd) {
      const std::uint64_t seed = resolve_seed(ph_seed);
      const auto dims = split(ph_dims, ',');
      if (dims.size() != 3) throw UsageError("--dims expects X,Y,Z");
      std::vector<volseg::Material> materials;
      for (const auto& spec : ph_materials) {
        const auto parts = split(spec, ',');
        if (parts.size() != 3) throw UsageError("--material expects mean,sd,fraction");
        materials.push_back({to_double(parts[0], "mean"), to_double(parts[1], "sd"), to_double(parts[2], "fraction")});
      }
      const auto type = volseg::parse_element_type(ph_type);
      if (!type) throw UsageError("--type must be u8, u16 or f32");
      std::cout << "seed " << seed << '\n';
      const volseg::Dims d{to_u64(dims[0], "dims"), to_u64(dims[1], "dims"), to_u64(dims[2], "dims")};
      const auto phantom = volseg::generate_phantom(d, materials, seed, ph_out, *type);
      std::cout << "wrote " << phantom.voxel_count() << " voxels -> " << volseg::sidecar_path_for(ph_out).string()
                << '\n';
      if (!ph_truth.empty()) {
        std::cout << "truth -> " << volseg::write_truth(phantom, ph_truth).string() << '\n';
      }
    } else if (*bench_cmd) {
      const std::uint64_t seed = resolve_seed(bench_seed);
      std::cout << "seed " << seed << '\n';
      const auto handle = volseg::open_volume(bench_meta);
      if (bench_fidelity) {
        volseg::PipelineConfig cfg;
        cfg.strategy = bench_strategy;
        cfg.size = bench_size.resolve();
        cfg.model = volseg::parse_model_kind(bench_fit.model);
        cfg.fit = bench_fit.config(seed);
        cfg.seed = seed;
        const auto r = volseg::fidelity_experiment(handle, cfg);
        std::cout << "sample_size\tfm\tnmi\tspeedup\tbaseline_fit_s\tsample_s\tsampled_fit_s\n"
                  << r.sample_size << '\t' << r.fm << '\t' << r.nmi << '\t' << r.speedup << '\t'
                  << r.baseline_fit_seconds << '\t' << r.sample_seconds << '\t' << r.sampled_fit_seconds << '\n';
      } else {
        volseg::BoundExperimentConfig cfg;
        cfg.sizes.clear();
        for (const auto& s : split(bench_sizes, ',')) cfg.sizes.push_back(to_u64(s, "sizes"));
        cfg.seeds = bench_seeds;
        cfg.grid = bench_grid;
        cfg.delta = bench_delta;
        cfg.master_seed = seed;
        const auto table = volseg::error_scaling_experiment(handle, volseg::parse_strategy(bench_strategy), cfg);
        std::cout << volseg::format_scaling_table(table);
      }
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const volseg::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return volseg::is_usage_error(e.code()) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

// Acceptance run: one PASS/FAIL line per primary criterion. Exit status is
// nonzero if any criterion fails.

#include <sys/wait.h>
#include <unistd.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

#include "../test_support.hpp"
#include "volseg.hpp"

namespace {

using namespace volseg;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

std::uint64_t status_kib(const char* key) {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key, 0) == 0) return std::stoull(line.substr(std::strlen(key)));
  }
  return 0;
}

const std::vector<Material> kThreeMaterials{{0.1, 0.05, 0.7}, {0.5, 0.05, 0.2}, {0.9, 0.05, 0.1}};

Outcome sampler_uniformity() {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = 10000, m = 100, trials = 5000;
  std::vector<double> stream(n);
  std::iota(stream.begin(), stream.end(), 0.0);
  std::vector<double> hits(n, 0.0);
  for (std::size_t t = 0; t < trials; ++t) {
    for (double v : reservoir_sample(stream, m, derive_seed(20240101, t)).values) hits[static_cast<std::size_t>(v)] += 1;
  }
  const double p = static_cast<double>(m) / n;
  const double mean = trials * p, sd = std::sqrt(trials * p * (1 - p));
  std::size_t inside = 0;
  double chi2 = 0.0;
  for (double h : hits) {
    inside += std::abs(h - mean) <= 3 * sd;
    chi2 += (h - mean) * (h - mean) / mean;
  }
  const double pvalue = boost::math::cdf(boost::math::complement(boost::math::chi_squared(n - 1.0), chi2));
  const double frac = static_cast<double>(inside) / n;
  const double secs = seconds(start);
  return {frac >= 0.99 && pvalue > 0.001 && secs < 60,
          fmt("within 3 sd %.4f, chi-square p %.4f, %.1f s", frac, pvalue, secs)};
}

Outcome error_scaling() {
  const auto start = std::chrono::steady_clock::now();
  testing::TempDir dir;
  generate_phantom({64, 64, 64}, kThreeMaterials, 11, dir / "p.raw");
  const auto h = open_volume(dir / "p.meta");
  BoundExperimentConfig cfg;
  cfg.sizes = {256, 1024, 4096};
  cfg.seeds = 50;
  cfg.grid = 64;
  cfg.master_seed = 3;
  const auto table = error_scaling_experiment(h, exponential_boundaries(4), cfg);
  const double r1 = table[0].median / table[1].median;
  const double r2 = table[1].median / table[2].median;
  const bool decreasing = table[0].median > table[1].median && table[1].median > table[2].median;
  const bool ratios = r1 >= 1.6 && r1 <= 2.5 && r2 >= 1.6 && r2 <= 2.5;
  const double secs = seconds(start);
  return {decreasing && ratios && secs < 300,
          fmt("medians %.5f %.5f %.5f, ratios %.3f %.3f, %.1f s", table[0].median, table[1].median,
              table[2].median, r1, r2, secs)};
}

struct FidelityRuns {
  double min_fm = 1, min_nmi = 1, min_speedup = 1e300;
  std::size_t runs = 0;
};

FidelityRuns fidelity_runs() {
  testing::TempDir dir;
  generate_phantom({128, 128, 128}, kThreeMaterials, 21, dir / "p.raw");
  const auto h = open_volume(dir / "p.meta");
  FidelityRuns out;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    PipelineConfig cfg;
    cfg.strategy = "exp:4";
    cfg.size = SampleSize::absolute(4096);
    cfg.model = ModelKind::Gmm;
    cfg.fit.clusters = 3;
    cfg.seed = seed;
    const auto r = fidelity_experiment(h, cfg);
    out.min_fm = std::min(out.min_fm, r.fm);
    out.min_nmi = std::min(out.min_nmi, r.nmi);
    out.min_speedup = std::min(out.min_speedup, r.speedup);
    ++out.runs;
    std::cerr << fmt("  fidelity seed %llu: fm %.4f nmi %.4f speedup %.1f (full fit %.2f s, sample %.3f s, fit %.3f s)\n",
                     static_cast<unsigned long long>(seed), r.fm, r.nmi, r.speedup, r.baseline_fit_seconds,
                     r.sample_seconds, r.sampled_fit_seconds);
  }
  return out;
}

Outcome kmeans_oracle() {
  std::mt19937_64 gen(99);
  int matched = 0, below = 0;
  const int instances = 200;
  for (int i = 0; i < instances; ++i) {
    const std::size_t k = 1 + gen() % 3;
    const std::size_t n = std::max<std::size_t>(k, 3 + gen() % 10);
    std::vector<double> s(n);
    for (auto& v : s) v = static_cast<double>(gen() >> 11) * 0x1p-53;
    FitConfig cfg;
    cfg.clusters = k;
    cfg.restarts = 10;
    cfg.seed = static_cast<std::uint64_t>(i);
    const double fitted = kmeans_fit(s, cfg).inertia;
    const double opt = testing::brute_force_kmeans_cost(s, k);
    matched += std::abs(fitted - opt) <= 1e-9;
    below += fitted < opt - 1e-12;
  }
  return {matched >= 180 && below == 0, fmt("matched %d/%d, below optimum %d", matched, instances, below)};
}

Outcome metric_oracles() {
  std::mt19937_64 gen(7);
  double worst = 0;
  const auto score = [](const std::vector<int>& a, const std::vector<int>& b) {
    const auto t = build_contingency(std::span<const int>(a), std::span<const int>(b));
    return std::pair{fowlkes_mallows(t), nmi_mean(t)};
  };
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 2 + gen() % 199;
    std::vector<int> a(n), b(n);
    const int ka = 1 + static_cast<int>(gen() % 5), kb = 1 + static_cast<int>(gen() % 5);
    for (auto& x : a) x = static_cast<int>(gen() % ka);
    for (auto& x : b) x = static_cast<int>(gen() % kb);
    const auto [fm, nmi] = score(a, b);
    worst = std::max({worst, std::abs(fm - testing::brute_force_fm(a, b)), std::abs(nmi - testing::brute_force_nmi(a, b))});
  }
  const auto same = score({0, 0, 1, 1, 2}, {3, 3, 0, 0, 1});
  const auto indep = score({0, 0, 1, 1}, {0, 1, 0, 1});
  const bool ok = worst <= 1e-12 && same.first == 1.0 && same.second == 1.0 && indep.first == 0.0 && indep.second == 0.0;
  return {ok, fmt("max oracle gap %.2e, identical (%g, %g), independent (%g, %g)", worst, same.first, same.second,
                  indep.first, indep.second)};
}

Outcome tie_breaking() {
  KMeansModel km;
  km.centers = {0, 2};
  GmmModel g;
  g.weights = {0.5, 0.5};
  g.means = {0.2, 0.8};
  g.variances = {0.01, 0.01};
  const auto a = predict(km, 1.0), b = predict(g, 0.5);
  return {a == 0 && b == 0, fmt("kmeans -> %zu, gmm -> %zu", a, b)};
}

Outcome allocation_edges() {
  const std::vector<std::uint64_t> counts{999, 1};
  const auto plain = allocate(counts, 100);
  const auto bumped = allocate(counts, 100, {.min_one = true});
  // The pipeline surfaces the zero stratum as a report warning.
  testing::TempDir dir;
  generate_phantom({10, 10, 10}, {{0.1, 0.0, 0.999}, {0.9, 0.0, 0.001}}, 1, dir / "p.raw");
  PipelineConfig cfg;
  cfg.strategy = "linear:2";
  cfg.size = SampleSize::absolute(100);
  cfg.model = ModelKind::KMeans;
  cfg.fit.clusters = 1;
  const auto report = run_pipeline(open_volume(dir / "p.meta"), cfg, dir / "l.raw");
  const bool ok = plain.sizes == std::vector<std::uint64_t>{100, 0} && plain.zero_strata == std::vector<std::size_t>{1} &&
                  bumped.sizes == std::vector<std::uint64_t>{99, 1} && report.warnings.size() == 1;
  return {ok, fmt("plain (%llu,%llu), min-one (%llu,%llu), pipeline warnings %zu",
                  static_cast<unsigned long long>(plain.sizes[0]), static_cast<unsigned long long>(plain.sizes[1]),
                  static_cast<unsigned long long>(bumped.sizes[0]), static_cast<unsigned long long>(bumped.sizes[1]),
                  report.warnings.size())};
}

// Segments a phantom in a forked child and reports the child's peak RSS
// growth in KiB, or -1 on failure.
long long segment_peak_growth_kib(const std::filesystem::path& meta, const std::filesystem::path& out) {
  int fds[2];
  if (pipe(fds) != 0) return -1;
  const pid_t pid = fork();
  if (pid == 0) {
    close(fds[0]);
    long long growth = -1;
    {
      std::ofstream("/proc/self/clear_refs") << "5";  // reset the peak to the current RSS
      const std::uint64_t base = status_kib("VmRSS:");
      try {
        PipelineConfig cfg;
        cfg.strategy = "exp:4";
        cfg.size = SampleSize::absolute(4096);
        cfg.model = ModelKind::Gmm;
        cfg.fit.clusters = 3;
        cfg.seed = 1;
        run_pipeline(open_volume(meta), cfg, out);
        growth = static_cast<long long>(status_kib("VmHWM:")) - static_cast<long long>(base);
      } catch (...) {
      }
    }
    [[maybe_unused]] auto w = write(fds[1], &growth, sizeof growth);
    _exit(0);
  }
  close(fds[1]);
  long long growth = -1;
  if (read(fds[0], &growth, sizeof growth) != sizeof growth) growth = -1;
  close(fds[0]);
  int status = 0;
  waitpid(pid, &status, 0);
  return growth;
}

Outcome out_of_core() {
  testing::TempDir dir;
  generate_phantom({256, 256, 256}, kThreeMaterials, 31, dir / "big.raw");
  generate_phantom({64, 64, 64}, kThreeMaterials, 31, dir / "small.raw");
  const long long big = segment_peak_growth_kib(dir / "big.meta", dir / "big-labels.raw");
  const long long small = segment_peak_growth_kib(dir / "small.meta", dir / "small-labels.raw");
  const bool labels_ok = std::filesystem::exists(dir / "big-labels.raw") &&
                         std::filesystem::file_size(dir / "big-labels.raw") == 256ull * 256 * 256;
  // Sample (4096 doubles) and a 3-component model are well under 64 KiB.
  const long long ceiling_kib = 8 * 1024 + 64;
  return {big >= 0 && big <= ceiling_kib && labels_ok,
          fmt("peak growth 256^3: %lld KiB, 64^3: %lld KiB (ceiling %lld KiB)", big, small, ceiling_kib)};
}

}  // namespace

int main() {
  int failures = 0;
  const auto report = [&](const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  };

  // First, while the process is still small.
  report("out-of-core memory", out_of_core);
  report("sampler uniformity", sampler_uniformity);
  report("error scaling shape", error_scaling);

  std::optional<FidelityRuns> fid;
  const auto fidelity = [&] {
    if (!fid) fid = fidelity_runs();
    return *fid;
  };
  report("pipeline fidelity", [&] {
    const auto f = fidelity();
    return Outcome{f.runs >= 5 && f.min_fm >= 0.95 && f.min_nmi >= 0.95,
                   fmt("min fm %.4f, min nmi %.4f over %zu seeds", f.min_fm, f.min_nmi, f.runs)};
  });
  report("speedup direction", [&] {
    const auto f = fidelity();
    return Outcome{f.min_speedup >= 10.0, fmt("min speedup %.1fx over %zu seeds", f.min_speedup, f.runs)};
  });

  report("k-means oracle", kmeans_oracle);
  report("metric oracles", metric_oracles);
  report("tie-breaking", tie_breaking);
  report("allocation edge cases", allocation_edges);
  return failures == 0 ? 0 : 1;
}

#pragma once

// Test-only helpers and brute-force oracles. Nothing here calls into the
// library's numerical code, so the oracles stay independent of it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace volseg::testing {

class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 gen{std::random_device{}()};
    path_ = std::filesystem::temp_directory_path() / ("volseg-test-" + std::to_string(gen()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  out << text;
}

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes `<stem>.raw` and `<stem>.meta`; returns the sidecar path.
inline std::filesystem::path write_volume(const TempDir& dir, const std::string& stem,
                                          const std::string& sidecar,
                                          const std::vector<unsigned char>& bytes) {
  write_bytes(dir / (stem + ".raw"), bytes);
  const auto meta = dir / (stem + ".meta");
  write_text(meta, sidecar);
  return meta;
}

// ---------------------------------------------------------------------------
// Oracles

/// Optimal 1D K-Means cost: optimal clusters are contiguous runs of the
/// sorted values, so enumerate every split into k nonempty runs.
inline double brute_force_kmeans_cost(std::vector<double> values, std::size_t k) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const auto run_cost = [&](std::size_t b, std::size_t e) {
    double mean = 0.0;
    for (std::size_t i = b; i < e; ++i) mean += values[i];
    mean /= static_cast<double>(e - b);
    double c = 0.0;
    for (std::size_t i = b; i < e; ++i) c += (values[i] - mean) * (values[i] - mean);
    return c;
  };
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> cuts;
  // cuts holds k-1 strictly increasing split points in [1, n-1].
  const auto recurse = [&](auto&& self, std::size_t from) -> void {
    if (cuts.size() == k - 1) {
      double c = 0.0;
      std::size_t b = 0;
      for (std::size_t cut : cuts) {
        c += run_cost(b, cut);
        b = cut;
      }
      c += run_cost(b, n);
      best = std::min(best, c);
      return;
    }
    for (std::size_t cut = from; cut + (k - 1 - cuts.size()) <= n; ++cut) {
      if (cut >= n) break;
      cuts.push_back(cut);
      self(self, cut + 1);
      cuts.pop_back();
    }
  };
  recurse(recurse, 1);
  return best;
}

/// Fowlkes-Mallows by enumerating every unordered pair of items.
inline double brute_force_fm(const std::vector<int>& a, const std::vector<int>& b) {
  double tp = 0, same_a = 0, same_b = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const bool sa = a[i] == a[j];
      const bool sb = b[i] == b[j];
      tp += sa && sb;
      same_a += sa;
      same_b += sb;
    }
  }
  if (same_a == 0 || same_b == 0) return 0.0;
  return tp / std::sqrt(same_a * same_b);
}

/// NMI normalized by mean entropy, straight from label frequency maps.
inline double brute_force_nmi(const std::vector<int>& a, const std::vector<int>& b) {
  const double n = static_cast<double>(a.size());
  std::map<int, double> pa, pb;
  std::map<std::pair<int, int>, double> pab;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pa[a[i]] += 1.0 / n;
    pb[b[i]] += 1.0 / n;
    pab[{a[i], b[i]}] += 1.0 / n;
  }
  double ha = 0, hb = 0, mi = 0;
  for (auto& [k, p] : pa) ha -= p * std::log(p);
  for (auto& [k, p] : pb) hb -= p * std::log(p);
  for (auto& [k, p] : pab) mi += p * std::log(p / (pa[k.first] * pb[k.second]));
  if (pa.size() == 1 && pb.size() == 1) return 1.0;
  if (pa.size() == 1 || pb.size() == 1) return 0.0;
  return mi / ((ha + hb) / 2.0);
}

}  // namespace volseg::testing

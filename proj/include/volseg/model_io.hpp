#pragma once

// Text form of a fitted model. Floats use shortest round-trip formatting so
// a written model reads back bit-identical.
//
//   volseg-model 1
//   kind: gmm                  (kmeans | minibatch | gmm)
//   K: 3
//   seed: 7
//   iterations: 14
//   objective: 5123.77         (inertia, or log-likelihood for gmm)
//   0.69 0.1003 0.0024         (gmm: weight mean variance)
//   ...                        (kmeans: one center per line)

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "volseg/clustering.hpp"
#include "volseg/error.hpp"
#include "volseg/volume_io.hpp"

namespace volseg {

inline std::string model_kind(const ClusterModel& model) {
  if (const auto* km = std::get_if<KMeansModel>(&model)) return km->minibatch ? "minibatch" : "kmeans";
  return "gmm";
}

inline std::string format_model(const ClusterModel& model) {
  using detail::format_double;
  std::ostringstream out;
  out << "volseg-model 1\n" << "kind: " << model_kind(model) << '\n';
  if (const auto* km = std::get_if<KMeansModel>(&model)) {
    out << "K: " << km->clusters() << '\n'
        << "seed: " << km->seed << '\n'
        << "iterations: " << km->iterations << '\n'
        << "objective: " << format_double(km->inertia) << '\n';
    for (double c : km->centers) out << format_double(c) << '\n';
  } else {
    const auto& g = std::get<GmmModel>(model);
    out << "K: " << g.clusters() << '\n'
        << "seed: " << g.seed << '\n'
        << "iterations: " << g.iterations << '\n'
        << "objective: " << format_double(g.log_likelihood) << '\n';
    for (std::size_t j = 0; j < g.clusters(); ++j) {
      out << format_double(g.weights[j]) << ' ' << format_double(g.means[j]) << ' '
          << format_double(g.variances[j]) << '\n';
    }
  }
  return out.str();
}

inline ClusterModel parse_model(std::string_view text) {
  const auto bad = [](const std::string& why) { return Error(ErrorCode::MalformedFile, "model: " + why); };
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "volseg-model 1") throw bad("missing 'volseg-model 1' header");

  const auto field = [&](std::string_view key) {
    if (!std::getline(in, line)) throw bad("missing " + std::string(key));
    const std::string prefix = std::string(key) + ":";
    if (line.rfind(prefix, 0) != 0) throw bad("expected '" + prefix + "', got '" + line + "'");
    return std::string(detail::trim(std::string_view(line).substr(prefix.size())));
  };
  const auto number = [&](const std::string& s) {
    auto v = detail::parse_double(s);
    if (!v) throw bad("bad number '" + s + "'");
    return *v;
  };
  const auto count = [&](const std::string& s) {
    auto v = detail::parse_u64(s);
    if (!v) throw bad("bad integer '" + s + "'");
    return *v;
  };

  const std::string kind = field("kind");
  const auto k = static_cast<std::size_t>(count(field("K")));
  const std::uint64_t seed = count(field("seed"));
  const auto iterations = static_cast<std::size_t>(count(field("iterations")));
  const double objective = number(field("objective"));
  if (k == 0) throw bad("K must be >= 1");

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::istringstream row(line);
    std::vector<double> values;
    std::string tok;
    while (row >> tok) values.push_back(number(tok));
    rows.push_back(std::move(values));
  }
  if (rows.size() != k) throw bad("expected " + std::to_string(k) + " component lines");

  if (kind == "kmeans" || kind == "minibatch") {
    KMeansModel m;
    m.minibatch = kind == "minibatch";
    m.seed = seed;
    m.iterations = iterations;
    m.inertia = objective;
    for (const auto& r : rows) {
      if (r.size() != 1) throw bad("kmeans lines hold one center");
      m.centers.push_back(r[0]);
    }
    return m;
  }
  if (kind == "gmm") {
    GmmModel g;
    g.seed = seed;
    g.iterations = iterations;
    g.log_likelihood = objective;
    for (const auto& r : rows) {
      if (r.size() != 3) throw bad("gmm lines hold 'weight mean variance'");
      if (!(r[2] > 0.0) || r[0] < 0.0 || r[0] > 1.0) throw bad("invalid gmm component");
      g.weights.push_back(r[0]);
      g.means.push_back(r[1]);
      g.variances.push_back(r[2]);
    }
    return g;
  }
  throw bad("unknown kind '" + kind + "'");
}

inline void write_model(const std::filesystem::path& path, const ClusterModel& model) {
  std::ofstream out(path, std::ios::trunc);
  out << format_model(model);
  if (!out) throw Error(ErrorCode::WriteFailure, path.string());
}

inline ClusterModel read_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_model(text.str());
}

}  // namespace volseg

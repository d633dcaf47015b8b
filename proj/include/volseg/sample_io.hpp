#pragma once

// Sample files: a text header terminated by a line `end`, followed by
// `size` little-endian IEEE-754 binary64 values.
//
//   volseg-sample 1
//   size: 4096
//   seed: 7
//   strategy: exp:4
//   strata: 0:2867 1:410 2:614 3:205     (optional, stratum:count)
//   end

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "volseg/error.hpp"
#include "volseg/sampler.hpp"
#include "volseg/volume_io.hpp"

namespace volseg {

inline void write_sample(const std::filesystem::path& path, const Sample& sample) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::WriteFailure, path.string());
  out << "volseg-sample 1\n"
      << "size: " << sample.size() << '\n'
      << "seed: " << sample.seed << '\n'
      << "strategy: " << sample.strategy << '\n';
  if (!sample.per_stratum.empty()) {
    out << "strata:";
    for (const auto& s : sample.per_stratum) out << ' ' << s.stratum << ':' << s.count;
    out << '\n';
  }
  out << "end\n";
  std::array<unsigned char, 8> word{};
  for (double v : sample.values) {
    detail::store_word(word.data(), std::bit_cast<std::uint64_t>(v), 8, ByteOrder::Little);
    out.write(reinterpret_cast<const char*>(word.data()), 8);
  }
  if (!out) throw Error(ErrorCode::WriteFailure, path.string());
}

inline Sample read_sample(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  const auto bad = [&](const std::string& why) {
    return Error(ErrorCode::MalformedFile, path.string() + ": " + why);
  };
  std::string line;
  if (!std::getline(in, line) || line != "volseg-sample 1") throw bad("not a sample file");

  Sample sample;
  std::optional<std::uint64_t> size;
  while (true) {
    if (!std::getline(in, line)) throw bad("header has no 'end'");
    if (line == "end") break;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw bad("header line without ':'");
    const std::string key = line.substr(0, colon);
    const std::string value(detail::trim(std::string_view(line).substr(colon + 1)));
    if (key == "size") {
      size = detail::parse_u64(value);
      if (!size) throw bad("bad size");
    } else if (key == "seed") {
      auto s = detail::parse_u64(value);
      if (!s) throw bad("bad seed");
      sample.seed = *s;
    } else if (key == "strategy") {
      sample.strategy = value;
    } else if (key == "strata") {
      std::istringstream items(value);
      std::string item;
      std::size_t offset = 0;
      while (items >> item) {
        const auto c = item.find(':');
        auto k = c == std::string::npos ? std::nullopt : detail::parse_u64(std::string_view(item).substr(0, c));
        auto n = c == std::string::npos ? std::nullopt : detail::parse_u64(std::string_view(item).substr(c + 1));
        if (!k || !n) throw bad("bad strata entry '" + item + "'");
        sample.per_stratum.push_back({static_cast<std::size_t>(*k), offset, static_cast<std::size_t>(*n)});
        offset += static_cast<std::size_t>(*n);
      }
    } else {
      throw bad("unknown header key '" + key + "'");
    }
  }
  if (!size) throw bad("missing size");
  sample.values.resize(static_cast<std::size_t>(*size));
  std::array<unsigned char, 8> word{};
  for (auto& v : sample.values) {
    if (!in.read(reinterpret_cast<char*>(word.data()), 8)) throw bad("payload truncated");
    v = std::bit_cast<double>(detail::load_word(word.data(), 8, ByteOrder::Little));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw bad("trailing bytes after payload");
  std::size_t covered = 0;
  for (const auto& s : sample.per_stratum) covered += s.count;
  if (!sample.per_stratum.empty() && covered != sample.values.size()) {
    throw bad("strata counts do not add up to size");
  }
  return sample;
}

}  // namespace volseg

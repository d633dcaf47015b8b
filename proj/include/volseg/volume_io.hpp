#pragma once

// Raw grayscale volumes on disk: sidecar parsing, chunked streaming of
// normalized values, and writers for raw volumes and label volumes.
//
// Sidecar format, one `key: value` pair per line:
//
//   dims: 256 256 128
//   element_type: u16          (u8 | u16 | f32)
//   byte_order: little         (little | big, default little)
//   value_min: 0.0             (f32 only, required there)
//   value_max: 1.0             (f32 only, required there)
//   data: volume.raw           (optional, relative to the sidecar directory)
//
// Blank lines and lines starting with '#' are ignored. Without `data`, the
// data file is the sidecar path with its extension replaced by `.raw`.
// Voxels are stored x-fastest: index = x + dx * (y + dy * z).

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "volseg/error.hpp"

namespace volseg {

enum class ElementType { U8, U16, F32 };
enum class ByteOrder { Little, Big };

constexpr std::size_t element_width(ElementType type) noexcept {
  switch (type) {
    case ElementType::U8: return 1;
    case ElementType::U16: return 2;
    case ElementType::F32: return 4;
  }
  return 0;
}

constexpr std::string_view to_string(ElementType type) noexcept {
  switch (type) {
    case ElementType::U8: return "u8";
    case ElementType::U16: return "u16";
    case ElementType::F32: return "f32";
  }
  return "?";
}

constexpr std::string_view to_string(ByteOrder order) noexcept {
  return order == ByteOrder::Little ? "little" : "big";
}

inline std::optional<ElementType> parse_element_type(std::string_view s) {
  if (s == "u8") return ElementType::U8;
  if (s == "u16") return ElementType::U16;
  if (s == "f32") return ElementType::F32;
  return std::nullopt;
}

using Dims = std::array<std::uint64_t, 3>;

/// Immutable descriptor of a raw volume. Copies share the pass counter.
class VolumeHandle {
 public:
  VolumeHandle(std::filesystem::path meta_path, std::filesystem::path data_path,
               Dims dims, ElementType type, ByteOrder order,
               double value_min = 0.0, double value_max = 1.0)
      : meta_path_(std::move(meta_path)),
        data_path_(std::move(data_path)),
        dims_(dims),
        type_(type),
        order_(order),
        value_min_(value_min),
        value_max_(value_max),
        passes_(std::make_shared<std::atomic<std::uint64_t>>(0)) {}

  const std::filesystem::path& meta_path() const noexcept { return meta_path_; }
  const std::filesystem::path& data_path() const noexcept { return data_path_; }
  const Dims& dims() const noexcept { return dims_; }
  ElementType element_type() const noexcept { return type_; }
  ByteOrder byte_order() const noexcept { return order_; }
  double value_min() const noexcept { return value_min_; }
  double value_max() const noexcept { return value_max_; }

  std::uint64_t voxel_count() const noexcept {
    return dims_[0] * dims_[1] * dims_[2];
  }
  std::uint64_t byte_size() const noexcept {
    return voxel_count() * element_width(type_);
  }

  /// Number of chunk streams opened over this volume so far.
  std::uint64_t passes_started() const noexcept { return passes_->load(); }
  void note_pass() const noexcept { passes_->fetch_add(1); }

 private:
  std::filesystem::path meta_path_;
  std::filesystem::path data_path_;
  Dims dims_;
  ElementType type_;
  ByteOrder order_;
  double value_min_;
  double value_max_;
  std::shared_ptr<std::atomic<std::uint64_t>> passes_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return v;
}

inline std::optional<std::uint64_t> parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

inline std::uint64_t load_word(const unsigned char* p, std::size_t width,
                               ByteOrder order) {
  std::uint64_t w = 0;
  if (order == ByteOrder::Little) {
    for (std::size_t b = width; b-- > 0;) w = (w << 8) | p[b];
  } else {
    for (std::size_t b = 0; b < width; ++b) w = (w << 8) | p[b];
  }
  return w;
}

inline void store_word(unsigned char* p, std::uint64_t w, std::size_t width,
                       ByteOrder order) {
  for (std::size_t b = 0; b < width; ++b) {
    const auto byte = static_cast<unsigned char>((w >> (8 * b)) & 0xff);
    p[order == ByteOrder::Little ? b : width - 1 - b] = byte;
  }
}

}  // namespace detail

/// Sidecar path paired with a data path (`x.raw` -> `x.meta`).
inline std::filesystem::path sidecar_path_for(const std::filesystem::path& data) {
  auto meta = data;
  meta.replace_extension(".meta");
  if (meta == data) meta += ".meta";
  return meta;
}

struct SidecarFields {
  Dims dims{1, 1, 1};
  ElementType type = ElementType::U8;
  ByteOrder order = ByteOrder::Little;
  std::optional<double> value_min;
  std::optional<double> value_max;
  std::optional<std::string> data;
};

inline SidecarFields parse_sidecar(std::string_view text) {
  SidecarFields f;
  bool have_dims = false;
  bool have_type = false;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) {
      throw Error(ErrorCode::MalformedSidecar,
                  "line " + std::to_string(line_no) + " has no ':'");
    }
    const auto key = detail::trim(line.substr(0, colon));
    const auto value = detail::trim(line.substr(colon + 1));
    if (key == "dims") {
      std::istringstream ds{std::string(value)};
      std::string tok;
      std::vector<std::uint64_t> parts;
      while (ds >> tok) {
        auto v = detail::parse_u64(tok);
        if (!v || *v == 0) {
          throw Error(ErrorCode::MalformedSidecar, "bad dims '" + std::string(value) + "'");
        }
        parts.push_back(*v);
      }
      if (parts.size() != 3) {
        throw Error(ErrorCode::MalformedSidecar, "dims needs three values");
      }
      f.dims = {parts[0], parts[1], parts[2]};
      have_dims = true;
    } else if (key == "element_type") {
      auto t = parse_element_type(value);
      if (!t) {
        throw Error(ErrorCode::MalformedSidecar,
                    "unsupported element_type '" + std::string(value) + "'");
      }
      f.type = *t;
      have_type = true;
    } else if (key == "byte_order") {
      if (value == "little") {
        f.order = ByteOrder::Little;
      } else if (value == "big") {
        f.order = ByteOrder::Big;
      } else {
        throw Error(ErrorCode::MalformedSidecar,
                    "byte_order must be little or big");
      }
    } else if (key == "value_min" || key == "value_max") {
      auto v = detail::parse_double(value);
      if (!v || !std::isfinite(*v)) {
        throw Error(ErrorCode::MalformedSidecar, "bad " + std::string(key));
      }
      (key == "value_min" ? f.value_min : f.value_max) = *v;
    } else if (key == "data") {
      if (value.empty()) throw Error(ErrorCode::MalformedSidecar, "empty data path");
      f.data = std::string(value);
    } else {
      throw Error(ErrorCode::MalformedSidecar, "unknown key '" + std::string(key) + "'");
    }
  }
  if (!have_dims) throw Error(ErrorCode::MalformedSidecar, "missing key 'dims'");
  if (!have_type) throw Error(ErrorCode::MalformedSidecar, "missing key 'element_type'");
  if (f.type == ElementType::F32) {
    if (!f.value_min || !f.value_max) {
      throw Error(ErrorCode::MalformedSidecar,
                  "f32 volumes need value_min and value_max");
    }
    if (!(*f.value_max > *f.value_min)) {
      throw Error(ErrorCode::MalformedSidecar, "value_max must exceed value_min");
    }
  }
  return f;
}

inline std::string format_sidecar(const SidecarFields& f) {
  std::ostringstream out;
  out << "dims: " << f.dims[0] << ' ' << f.dims[1] << ' ' << f.dims[2] << '\n'
      << "element_type: " << to_string(f.type) << '\n'
      << "byte_order: " << to_string(f.order) << '\n';
  if (f.value_min) out << "value_min: " << detail::format_double(*f.value_min) << '\n';
  if (f.value_max) out << "value_max: " << detail::format_double(*f.value_max) << '\n';
  if (f.data) out << "data: " << *f.data << '\n';
  return out.str();
}

inline VolumeHandle open_volume(const std::filesystem::path& meta_path) {
  std::ifstream in(meta_path);
  if (!in) throw Error(ErrorCode::MissingFile, meta_path.string());
  std::stringstream text;
  text << in.rdbuf();
  const SidecarFields f = parse_sidecar(text.str());

  std::filesystem::path data;
  if (f.data) {
    data = std::filesystem::path(*f.data);
    if (data.is_relative()) data = meta_path.parent_path() / data;
  } else {
    data = meta_path;
    data.replace_extension(".raw");
  }
  std::error_code ec;
  const auto bytes = std::filesystem::file_size(data, ec);
  if (ec) throw Error(ErrorCode::MissingFile, data.string());

  VolumeHandle handle(meta_path, data, f.dims, f.type, f.order,
                      f.value_min.value_or(0.0), f.value_max.value_or(1.0));
  if (bytes != handle.byte_size()) {
    throw Error(ErrorCode::SizeMismatch,
                data.string() + " has " + std::to_string(bytes) +
                    " bytes, expected " + std::to_string(handle.byte_size()));
  }
  return handle;
}

/// A run of normalized values starting at linear voxel index `origin`.
struct ValueChunk {
  std::span<const double> values;
  std::uint64_t origin = 0;
};

/// Sequential single-consumer cursor over a volume's normalized values.
/// Integer types are divided by the type maximum; f32 is min-max normalized
/// with the sidecar range and clamped to [0, 1] (NaN maps to 0).
class ChunkReader {
 public:
  ChunkReader(const VolumeHandle& handle, std::size_t chunk_len)
      : handle_(handle), chunk_len_(chunk_len) {
    if (chunk_len == 0) throw Error(ErrorCode::InvalidArgument, "chunk_len must be >= 1");
    in_.open(handle.data_path(), std::ios::binary);
    if (!in_) throw Error(ErrorCode::MissingFile, handle.data_path().string());
    handle.note_pass();
    const std::size_t buffered = static_cast<std::size_t>(
        std::min<std::uint64_t>(chunk_len, handle.voxel_count()));
    raw_.resize(buffered * element_width(handle.element_type()));
    values_.resize(buffered);
  }

  /// Next chunk, or nullopt once all N voxels have been produced. The
  /// returned span stays valid until the following call.
  std::optional<ValueChunk> next() {
    const std::uint64_t total = handle_.voxel_count();
    if (position_ >= total) return std::nullopt;
    const auto count = static_cast<std::size_t>(
        std::min<std::uint64_t>(chunk_len_, total - position_));
    const std::size_t width = element_width(handle_.element_type());
    in_.read(reinterpret_cast<char*>(raw_.data()),
             static_cast<std::streamsize>(count * width));
    if (static_cast<std::size_t>(in_.gcount()) != count * width) {
      throw Error(ErrorCode::ReadFailure,
                  handle_.data_path().string() + " truncated at voxel " +
                      std::to_string(position_));
    }
    decode(count);
    ValueChunk chunk{std::span<const double>(values_.data(), count), position_};
    position_ += count;
    return chunk;
  }

 private:
  void decode(std::size_t count) {
    const ElementType type = handle_.element_type();
    const ByteOrder order = handle_.byte_order();
    const std::size_t width = element_width(type);
    const unsigned char* p = raw_.data();
    switch (type) {
      case ElementType::U8:
        for (std::size_t i = 0; i < count; ++i) values_[i] = p[i] / 255.0;
        break;
      case ElementType::U16:
        for (std::size_t i = 0; i < count; ++i) {
          values_[i] = static_cast<double>(detail::load_word(p + 2 * i, width, order)) / 65535.0;
        }
        break;
      case ElementType::F32: {
        const double lo = handle_.value_min();
        const double span = handle_.value_max() - lo;
        for (std::size_t i = 0; i < count; ++i) {
          const auto bits = static_cast<std::uint32_t>(detail::load_word(p + 4 * i, width, order));
          const double v = (static_cast<double>(std::bit_cast<float>(bits)) - lo) / span;
          values_[i] = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
        }
        break;
      }
    }
  }

  VolumeHandle handle_;
  std::size_t chunk_len_;
  std::ifstream in_;
  std::vector<unsigned char> raw_;
  std::vector<double> values_;
  std::uint64_t position_ = 0;
};

inline constexpr std::size_t kDefaultChunkLen = std::size_t{1} << 16;

inline ChunkReader stream_chunks(const VolumeHandle& handle,
                                 std::size_t chunk_len = kDefaultChunkLen) {
  return ChunkReader(handle, chunk_len);
}

/// One full pass: calls fn(ValueChunk) for every chunk in index order.
template <class Fn>
void for_each_chunk(const VolumeHandle& handle, std::size_t chunk_len, Fn&& fn) {
  ChunkReader reader(handle, chunk_len);
  while (auto chunk = reader.next()) fn(*chunk);
}

/// Materializes every normalized value. Only for volumes that fit in memory.
inline std::vector<double> read_all_values(const VolumeHandle& handle) {
  std::vector<double> all;
  all.reserve(static_cast<std::size_t>(handle.voxel_count()));
  for_each_chunk(handle, kDefaultChunkLen, [&](const ValueChunk& c) {
    all.insert(all.end(), c.values.begin(), c.values.end());
  });
  return all;
}

/// Streaming writer for a raw volume plus its sidecar. Values are given in
/// normalized units and quantized to the element type (f32 is stored as-is
/// with value range [0, 1]).
class VolumeWriter {
 public:
  VolumeWriter(std::filesystem::path data_path, Dims dims, ElementType type,
               ByteOrder order = ByteOrder::Little)
      : data_path_(std::move(data_path)), dims_(dims), type_(type), order_(order) {
    out_.open(data_path_, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error(ErrorCode::WriteFailure, data_path_.string());
  }

  void write(std::span<const double> values) {
    const std::size_t width = element_width(type_);
    buffer_.resize(values.size() * width);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double v = std::clamp(values[i], 0.0, 1.0);
      std::uint64_t word = 0;
      switch (type_) {
        case ElementType::U8: word = static_cast<std::uint64_t>(std::lround(v * 255.0)); break;
        case ElementType::U16: word = static_cast<std::uint64_t>(std::lround(v * 65535.0)); break;
        case ElementType::F32: word = std::bit_cast<std::uint32_t>(static_cast<float>(v)); break;
      }
      detail::store_word(buffer_.data() + i * width, word, width, order_);
    }
    out_.write(reinterpret_cast<const char*>(buffer_.data()),
               static_cast<std::streamsize>(buffer_.size()));
    written_ += values.size();
  }

  /// Flushes data and writes the sidecar; returns the sidecar path.
  std::filesystem::path finish() {
    const std::uint64_t expected = dims_[0] * dims_[1] * dims_[2];
    if (written_ != expected) {
      throw Error(ErrorCode::WriteFailure,
                  "wrote " + std::to_string(written_) + " voxels, expected " +
                      std::to_string(expected));
    }
    out_.close();
    if (!out_) throw Error(ErrorCode::WriteFailure, data_path_.string());
    SidecarFields f;
    f.dims = dims_;
    f.type = type_;
    f.order = order_;
    if (type_ == ElementType::F32) {
      f.value_min = 0.0;
      f.value_max = 1.0;
    }
    f.data = data_path_.filename().string();
    const auto meta = sidecar_path_for(data_path_);
    std::ofstream m(meta, std::ios::trunc);
    m << format_sidecar(f);
    if (!m) throw Error(ErrorCode::WriteFailure, meta.string());
    return meta;
  }

 private:
  std::filesystem::path data_path_;
  Dims dims_;
  ElementType type_;
  ByteOrder order_;
  std::ofstream out_;
  std::vector<unsigned char> buffer_;
  std::uint64_t written_ = 0;
};

/// Streaming u8 label volume writer (N bytes in linear order + sidecar).
class LabelWriter {
 public:
  LabelWriter(std::filesystem::path data_path, Dims dims)
      : data_path_(std::move(data_path)), dims_(dims) {
    out_.open(data_path_, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error(ErrorCode::WriteFailure, data_path_.string());
  }

  template <class Label>
  void write(std::span<const Label> labels) {
    buffer_.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      bool negative = false;
      if constexpr (std::is_signed_v<Label>) negative = labels[i] < 0;
      const auto label = static_cast<std::uint64_t>(labels[i]);
      if (negative || label >= 256) {
        throw Error(ErrorCode::LabelOverflow,
                    "label " + std::to_string(labels[i]) + " at voxel " +
                        std::to_string(written_ + i));
      }
      buffer_[i] = static_cast<unsigned char>(label);
    }
    out_.write(reinterpret_cast<const char*>(buffer_.data()),
               static_cast<std::streamsize>(buffer_.size()));
    if (!out_) throw Error(ErrorCode::WriteFailure, data_path_.string());
    written_ += labels.size();
  }

  std::filesystem::path finish() {
    const std::uint64_t expected = dims_[0] * dims_[1] * dims_[2];
    if (written_ != expected) {
      throw Error(ErrorCode::WriteFailure,
                  "label stream has " + std::to_string(written_) +
                      " entries, volume has " + std::to_string(expected));
    }
    out_.close();
    if (!out_) throw Error(ErrorCode::WriteFailure, data_path_.string());
    SidecarFields f;
    f.dims = dims_;
    f.type = ElementType::U8;
    f.data = data_path_.filename().string();
    const auto meta = sidecar_path_for(data_path_);
    std::ofstream m(meta, std::ios::trunc);
    m << format_sidecar(f);
    if (!m) throw Error(ErrorCode::WriteFailure, meta.string());
    return meta;
  }

 private:
  std::filesystem::path data_path_;
  Dims dims_;
  std::ofstream out_;
  std::vector<unsigned char> buffer_;
  std::uint64_t written_ = 0;
};

template <class Label>
std::filesystem::path write_labels(const VolumeHandle& handle,
                                   std::span<const Label> labels,
                                   const std::filesystem::path& out_path) {
  if (labels.size() != handle.voxel_count()) {
    throw Error(ErrorCode::WriteFailure,
                "label stream has " + std::to_string(labels.size()) +
                    " entries, volume has " + std::to_string(handle.voxel_count()));
  }
  LabelWriter writer(out_path, handle.dims());
  writer.write(labels);
  return writer.finish();
}

/// Reads a u8 label volume back as raw label indices (not normalized).
inline std::vector<std::uint32_t> read_labels(const VolumeHandle& handle) {
  if (handle.element_type() != ElementType::U8) {
    throw Error(ErrorCode::MalformedSidecar, "label volumes must be u8");
  }
  std::vector<std::uint32_t> labels;
  labels.reserve(static_cast<std::size_t>(handle.voxel_count()));
  for_each_chunk(handle, kDefaultChunkLen, [&](const ValueChunk& c) {
    for (double v : c.values) labels.push_back(static_cast<std::uint32_t>(std::lround(v * 255.0)));
  });
  return labels;
}

}  // namespace volseg

#pragma once

// Binary time-tag stream, one file per station.
//
// Layout (all integers little-endian, no padding):
//
//   offset  size  field
//   0       8     magic "BELLTAG1"
//   8       2     version (1)
//   10      1     station_id (0 = Alice, 1 = Bob)
//   11      1     reserved, zero
//   12      4     tick_unit, picoseconds per tick (> 0)
//   16      8     start_time, ticks
//   24      8     record_count (0 = read until EOF)
//   32      9*n   records
//
// Record: u64 timestamp in ticks, then one flag byte
//   bit0 = setting bit, bit1 = detector (0 = "+", 1 = "-"), bits 2-7 zero.
// Timestamps are non-decreasing within a file.

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bellsim/station.hpp"
#include "bellsim/units.hpp"

namespace bellsim {

inline constexpr std::array<char, 8> kTagMagic{'B', 'E', 'L', 'L', 'T', 'A', 'G', '1'};
inline constexpr std::uint16_t kTagVersion = 1;
inline constexpr std::size_t kHeaderSize = 32;
inline constexpr std::size_t kRecordSize = 9;
inline constexpr std::uint8_t kFlagSetting = 0x01;
inline constexpr std::uint8_t kFlagDetector = 0x02;
inline constexpr std::uint8_t kFlagMask = kFlagSetting | kFlagDetector;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StreamHeader {
  std::uint16_t version = kTagVersion;
  std::uint8_t station_id = 0;
  std::uint32_t tick_unit = 75;
  std::uint64_t start_time = 0;
  std::uint64_t record_count = 0;

  bool operator==(const StreamHeader&) const = default;
};

struct TagRecord {
  std::uint64_t ticks = 0;
  std::uint8_t flags = 0;

  bool operator==(const TagRecord&) const = default;
};

namespace detail {

template <typename T>
void put_le(std::uint8_t* out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out[i] = static_cast<std::uint8_t>(value >> (8 * i));
}

template <typename T>
T get_le(const std::uint8_t* in) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::array<std::uint8_t, kHeaderSize> encode_header(const StreamHeader& h) {
  if (h.tick_unit == 0) throw FormatError("tick_unit must be > 0");
  if (h.station_id > 1) throw FormatError("station_id must be 0 or 1");
  std::array<std::uint8_t, kHeaderSize> out{};
  std::memcpy(out.data(), kTagMagic.data(), kTagMagic.size());
  detail::put_le(out.data() + 8, h.version);
  out[10] = h.station_id;
  out[11] = 0;
  detail::put_le(out.data() + 12, h.tick_unit);
  detail::put_le(out.data() + 16, h.start_time);
  detail::put_le(out.data() + 24, h.record_count);
  return out;
}

inline StreamHeader decode_header(std::span<const std::uint8_t, kHeaderSize> in) {
  if (std::memcmp(in.data(), kTagMagic.data(), kTagMagic.size()) != 0)
    throw FormatError("bad magic: not a BELLTAG1 stream");
  StreamHeader h;
  h.version = detail::get_le<std::uint16_t>(in.data() + 8);
  if (h.version != kTagVersion) throw FormatError("unsupported version " + std::to_string(h.version));
  h.station_id = in[10];
  if (h.station_id > 1) throw FormatError("station_id must be 0 or 1");
  if (in[11] != 0) throw FormatError("reserved header byte must be zero");
  h.tick_unit = detail::get_le<std::uint32_t>(in.data() + 12);
  if (h.tick_unit == 0) throw FormatError("tick_unit must be > 0");
  h.start_time = detail::get_le<std::uint64_t>(in.data() + 16);
  h.record_count = detail::get_le<std::uint64_t>(in.data() + 24);
  return h;
}

inline std::array<std::uint8_t, kRecordSize> encode_record(const TagRecord& r) {
  if (r.flags & ~kFlagMask) throw FormatError("flag bits outside mask");
  std::array<std::uint8_t, kRecordSize> out{};
  detail::put_le(out.data(), r.ticks);
  out[8] = r.flags;
  return out;
}

inline TagRecord to_record(const TimeTag& tag, std::uint32_t tick_unit) {
  if (tag.timestamp.count() < 0) throw FormatError("negative timestamp");
  if (tag.setting > 1) throw FormatError("setting bit outside {0,1}");
  if (tag.timestamp.count() % tick_unit != 0)
    throw FormatError("timestamp " + std::to_string(tag.timestamp.count()) +
                      " ps is not on the tick grid");
  std::uint8_t flags = tag.setting;
  if (tag.detector == Outcome::Minus) flags |= kFlagDetector;
  return {static_cast<std::uint64_t>(tag.timestamp.count()) / tick_unit, flags};
}

inline TimeTag from_record(const TagRecord& r, std::uint32_t tick_unit) {
  return {Picoseconds{static_cast<std::int64_t>(r.ticks * tick_unit)},
          static_cast<std::uint8_t>(r.flags & kFlagSetting),
          (r.flags & kFlagDetector) ? Outcome::Minus : Outcome::Plus};
}

// Incremental writer. record_count stays as given in the header (0 allowed
// for writers that cannot seek back).
class TagStreamWriter {
 public:
  TagStreamWriter(std::ostream& os, const StreamHeader& header) : os_(os), header_(header) {
    const auto bytes = encode_header(header);
    os_.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }

  void write(const TimeTag& tag) {
    const auto rec = to_record(tag, header_.tick_unit);
    if (written_ > 0 && rec.ticks < last_ticks_)
      throw FormatError("unsorted input at record " + std::to_string(written_));
    const auto bytes = encode_record(rec);
    os_.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    last_ticks_ = rec.ticks;
    ++written_;
  }

  std::uint64_t written() const { return written_; }

 private:
  std::ostream& os_;
  StreamHeader header_;
  std::uint64_t last_ticks_ = 0;
  std::uint64_t written_ = 0;
};

inline void write_stream(std::ostream& os, StreamHeader header, std::span<const TimeTag> tags) {
  header.record_count = tags.size();
  TagStreamWriter writer{os, header};
  for (const auto& t : tags) writer.write(t);
  if (!os) throw std::runtime_error("write failed");
}

inline void write_stream_file(const std::string& path, const StreamHeader& header,
                              std::span<const TimeTag> tags) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_stream(os, header, tags);
}

// Streaming reader with constant memory. Validates monotonicity and reserved
// bits as records are pulled.
class TagStreamReader {
 public:
  explicit TagStreamReader(std::istream& is) : is_(is) {
    std::array<std::uint8_t, kHeaderSize> buf{};
    is_.read(reinterpret_cast<char*>(buf.data()), buf.size());
    if (static_cast<std::size_t>(is_.gcount()) != kHeaderSize)
      throw FormatError("truncated header (" + std::to_string(is_.gcount()) + " of 32 bytes)");
    header_ = decode_header(buf);
  }

  const StreamHeader& header() const { return header_; }
  std::uint64_t records_read() const { return index_; }

  std::optional<TagRecord> next_record() {
    if (header_.record_count != 0 && index_ == header_.record_count) {
      if (is_.peek() != std::char_traits<char>::eof())
        throw FormatError("trailing bytes after " + std::to_string(index_) + " records");
      return std::nullopt;
    }
    std::array<std::uint8_t, kRecordSize> buf{};
    is_.read(reinterpret_cast<char*>(buf.data()), buf.size());
    const auto got = static_cast<std::size_t>(is_.gcount());
    const std::uint64_t offset = kHeaderSize + index_ * kRecordSize;
    if (got == 0) {
      if (header_.record_count != 0)
        throw FormatError("truncated stream: expected " + std::to_string(header_.record_count) +
                          " records, found " + std::to_string(index_));
      return std::nullopt;
    }
    if (got != kRecordSize)
      throw FormatError("truncated record " + std::to_string(index_) + " at byte offset " +
                        std::to_string(offset));
    TagRecord r{detail::get_le<std::uint64_t>(buf.data()), buf[8]};
    if (r.flags & ~kFlagMask)
      throw FormatError("reserved flag bits set in record " + std::to_string(index_));
    if (index_ > 0 && r.ticks < last_ticks_)
      throw FormatError("timestamp decreases at record " + std::to_string(index_));
    last_ticks_ = r.ticks;
    ++index_;
    return r;
  }

  std::optional<TimeTag> next() {
    auto r = next_record();
    if (!r) return std::nullopt;
    return from_record(*r, header_.tick_unit);
  }

 private:
  std::istream& is_;
  StreamHeader header_;
  std::uint64_t index_ = 0;
  std::uint64_t last_ticks_ = 0;
};

struct TagStream {
  StreamHeader header;
  std::vector<TimeTag> tags;
};

inline TagStream read_stream(std::istream& is) {
  TagStreamReader reader{is};
  TagStream out{reader.header(), {}};
  if (out.header.record_count) out.tags.reserve(out.header.record_count);
  while (auto t = reader.next()) out.tags.push_back(*t);
  return out;
}

inline TagStream read_stream_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return read_stream(is);
}

// Debug export: "ticks,setting,detector", one record per line.
inline void write_text(std::ostream& os, const StreamHeader& header, std::span<const TimeTag> tags) {
  os << "ticks,setting,detector\n";
  for (const auto& t : tags) {
    const auto r = to_record(t, header.tick_unit);
    os << r.ticks << ',' << int(t.setting) << ',' << symbol(t.detector) << '\n';
  }
}

}  // namespace bellsim

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fse/common.hpp"

namespace fse {

static_assert(std::endian::native == std::endian::little,
              "snapshot encoding assumes a little-endian host");

class ByteWriter {
 public:
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void i64(std::int64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void bytes(std::string_view s) { buf_.append(s); }
  void str(std::string_view s) {
    u64(s.size());
    bytes(s);
  }
  void f64s(const double* p, std::size_t n) { raw(p, n * sizeof(double)); }

  const std::string& data() const { return buf_; }

  // Appends the FNV-1a checksum of everything written so far.
  void seal() { u64(fnv1a(buf_)); }

 private:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint32_t u32() { return pod<std::uint32_t>(); }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  std::int64_t i64() { return pod<std::int64_t>(); }
  double f64() { return pod<double>(); }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::string str() {
    const auto n = u64();
    return std::string(bytes(n));
  }
  void f64s(double* out, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(out, data_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  // Verifies the trailing checksum written by ByteWriter::seal. Must be
  // called when exactly 8 bytes remain.
  void verify_seal() {
    if (remaining() != sizeof(std::uint64_t)) throw CorruptionError("snapshot has trailing or missing bytes");
    const auto expected = fnv1a(data_.substr(0, pos_));
    if (u64() != expected) throw CorruptionError("snapshot checksum mismatch");
  }

 private:
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void need(std::size_t n) const {
    if (n > remaining()) throw CorruptionError("snapshot truncated");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

// Checks an 8-byte magic and a format version at the start of a snapshot.
void expect_header(ByteReader& in, std::string_view magic, std::uint32_t version);
void write_header(ByteWriter& out, std::string_view magic, std::uint32_t version);

// Named dense tensors with a kind tag and a free-form JSON metadata string.
// Layout: magic "FSEPARAM", u32 version, kind, metadata, u64 count, then per
// tensor: name, u64 rows, u64 cols, rows*cols little-endian f64; FNV-1a
// trailer.
struct TensorArchive {
  std::string kind;
  std::string metadata;
  std::map<std::string, Mat> tensors;

  void put(const std::string& name, const Mat& m) { tensors[name] = m; }
  void put(const std::string& name, const Vec& v) {
    Mat m(v.size(), 1);
    for (Eigen::Index i = 0; i < v.size(); ++i) m(i, 0) = v[i];
    tensors[name] = std::move(m);
  }
  const Mat& mat(const std::string& name) const;
  Vec vec(const std::string& name) const;

  std::string serialize() const;
  static TensorArchive deserialize(std::string_view bytes, std::string_view expected_kind);

  void save(const std::string& path) const { write_file(path, serialize()); }
  static TensorArchive load(const std::string& path, std::string_view expected_kind) {
    return deserialize(read_file(path), expected_kind);
  }
};

// Version string for a snapshot: hex FNV-1a of its bytes.
inline std::string snapshot_version(std::string_view bytes) { return hex64(fnv1a(bytes)); }

}  // namespace fse

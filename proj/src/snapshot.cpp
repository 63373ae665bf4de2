#include "fse/snapshot.hpp"

namespace fse {

void write_header(ByteWriter& out, std::string_view magic, std::uint32_t version) {
  out.bytes(magic);
  out.u32(version);
}

void expect_header(ByteReader& in, std::string_view magic, std::uint32_t version) {
  std::string_view got;
  try {
    got = in.bytes(magic.size());
  } catch (const CorruptionError&) {
    throw VersionError("not a " + std::string(magic) + " snapshot (file too short)");
  }
  if (got != magic) throw VersionError("bad snapshot magic: expected " + std::string(magic));
  const auto v = in.u32();
  if (v != version) {
    throw VersionError("unsupported " + std::string(magic) + " version " + std::to_string(v) +
                       " (expected " + std::to_string(version) + ")");
  }
}

const Mat& TensorArchive::mat(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw CorruptionError("tensor archive missing '" + name + "'");
  return it->second;
}

Vec TensorArchive::vec(const std::string& name) const {
  const Mat& m = mat(name);
  if (m.cols() != 1) throw CorruptionError("tensor '" + name + "' is not a column vector");
  Vec v(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[i] = m(i, 0);
  return v;
}

std::string TensorArchive::serialize() const {
  ByteWriter out;
  write_header(out, "FSEPARAM", 1);
  out.str(kind);
  out.str(metadata);
  out.u64(tensors.size());
  for (const auto& [name, m] : tensors) {
    out.str(name);
    out.u64(static_cast<std::uint64_t>(m.rows()));
    out.u64(static_cast<std::uint64_t>(m.cols()));
    out.f64s(m.data(), static_cast<std::size_t>(m.size()));
  }
  out.seal();
  return out.data();
}

TensorArchive TensorArchive::deserialize(std::string_view bytes, std::string_view expected_kind) {
  ByteReader in(bytes);
  expect_header(in, "FSEPARAM", 1);
  TensorArchive a;
  a.kind = in.str();
  if (!expected_kind.empty() && a.kind != expected_kind) {
    throw VersionError("params snapshot holds '" + a.kind + "', expected '" + std::string(expected_kind) + "'");
  }
  a.metadata = in.str();
  const auto n = in.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    auto name = in.str();
    const auto rows = in.u64();
    const auto cols = in.u64();
    if (rows * cols * sizeof(double) > in.remaining()) throw CorruptionError("snapshot truncated");
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.f64s(m.data(), rows * cols);
    a.tensors.emplace(std::move(name), std::move(m));
  }
  in.verify_seal();
  return a;
}

}  // namespace fse

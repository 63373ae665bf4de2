#include "fse/common.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace fse {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path);
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

void init_uniform(Mat& m, Rng& rng, double scale) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
}

void init_uniform(Vec& v, Rng& rng, double scale) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-scale, scale);
}

bool normalize_into(const Vec& h, Vec& out, double& norm) {
  norm = h.norm();
  if (norm < 1e-12) {
    out = Vec::Zero(h.size());
    if (out.size() > 0) out[0] = 1.0;
    return false;
  }
  out = h / norm;
  return true;
}

}  // namespace fse

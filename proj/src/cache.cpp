#include "bidhom/cache.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace bidhom {

namespace fs = std::filesystem;

std::uint64_t TensorCache::fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

void put_matrix(std::ostringstream& os, const char* name, const Mat& m) {
  os << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  char buf[40];
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      os << buf << (j + 1 == m.cols() ? "" : " ");
    }
    os << '\n';
  }
}

bool get_matrix(std::istringstream& is, const std::string& expect, Mat& m) {
  std::string name;
  long rows = -1, cols = -1;
  if (!(is >> name >> rows >> cols)) return false;
  if (name != expect || rows < 0 || cols < 0 || rows > 64 || cols > 64) return false;
  m.resize(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j)
      if (!(is >> m(i, j))) return false;
  return true;
}

}  // namespace

std::string TensorCache::serialize(const EffectiveTensors& t) {
  std::ostringstream os;
  char buf[64];
  os << kToolVersion << '\n';
  std::snprintf(buf, sizeof buf, "%.17g", t.dt_kernel);
  os << "meta " << t.dim << ' ' << t.K << ' ' << buf;
  std::snprintf(buf, sizeof buf, " %.17g", t.vol_out);
  os << buf;
  std::snprintf(buf, sizeof buf, " %.17g", t.vol_int);
  os << buf;
  std::snprintf(buf, sizeof buf, " %.17g", t.area_gamma);
  os << buf << ' ' << t.key_hash;
  std::snprintf(buf, sizeof buf, " %.17g", t.kernel_tail_ratio);
  os << buf << '\n';
  put_matrix(os, "A1", t.A1);
  put_matrix(os, "A2", t.A2.size() ? t.A2 : Mat(0, 0));
  put_matrix(os, "A2_B", t.A2_B.size() ? t.A2_B : Mat(0, 0));
  put_matrix(os, "A2_D", t.A2_D.size() ? t.A2_D : Mat(0, 0));
  os << "B " << t.B.size() << '\n';
  for (std::size_t k = 0; k < t.B.size(); ++k) put_matrix(os, "Bk", t.B[k]);
  os << "F " << t.F_cellflux.size() << '\n';
  for (std::size_t k = 0; k < t.F_cellflux.size(); ++k) {
    const Vec& f = t.F_cellflux[k];
    os << "Fk " << f.size() << '\n';
    for (int i = 0; i < f.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", f[i]);
      os << buf << (i + 1 == f.size() ? "" : " ");
    }
    os << '\n';
  }
  return os.str();
}

std::optional<EffectiveTensors> TensorCache::deserialize(const std::string& text) {
  std::istringstream is(text);
  std::string version;
  if (!std::getline(is, version) || version != kToolVersion) return std::nullopt;
  EffectiveTensors t;
  std::string tag;
  if (!(is >> tag >> t.dim >> t.K >> t.dt_kernel >> t.vol_out >> t.vol_int >> t.area_gamma >>
        t.key_hash >> t.kernel_tail_ratio) ||
      tag != "meta")
    return std::nullopt;
  if (!get_matrix(is, "A1", t.A1)) return std::nullopt;
  if (!get_matrix(is, "A2", t.A2)) return std::nullopt;
  if (!get_matrix(is, "A2_B", t.A2_B)) return std::nullopt;
  if (!get_matrix(is, "A2_D", t.A2_D)) return std::nullopt;
  long count = -1;
  if (!(is >> tag >> count) || tag != "B" || count < 0 || count > 1000000) return std::nullopt;
  t.B.resize(count);
  for (long k = 0; k < count; ++k)
    if (!get_matrix(is, "Bk", t.B[k])) return std::nullopt;
  if (!(is >> tag >> count) || tag != "F" || count < 0 || count > 1000000) return std::nullopt;
  t.F_cellflux.resize(count);
  for (long k = 0; k < count; ++k) {
    long sz = -1;
    if (!(is >> tag >> sz) || tag != "Fk" || sz < 0 || sz > 64) return std::nullopt;
    t.F_cellflux[k].resize(sz);
    for (long i = 0; i < sz; ++i)
      if (!(is >> t.F_cellflux[k][i])) return std::nullopt;
  }
  return t;
}

std::string TensorCache::entry_path(std::uint64_t key) const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, key);
  return (fs::path(dir_) / (std::string(buf) + ".tensors")).string();
}

std::optional<EffectiveTensors> TensorCache::load(std::uint64_t key, bool* corrupt) const {
  if (corrupt) *corrupt = false;
  std::ifstream in(entry_path(key));
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  auto t = deserialize(ss.str());
  if (!t && corrupt) *corrupt = true;
  return t;
}

void TensorCache::store(std::uint64_t key, const EffectiveTensors& t) const {
  fs::create_directories(dir_);
  std::string path = entry_path(key);
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cache: cannot write " + tmp);
    out << serialize(t);
  }
  fs::rename(tmp, path);
}

}  // namespace bidhom

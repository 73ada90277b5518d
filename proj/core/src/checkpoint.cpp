#include "cberl/checkpoint.hpp"

#include <fstream>

namespace cberl {

namespace {

constexpr char kMagic[4] = {'C', 'B', 'R', 'L'};

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("checkpoint: truncated stream");
  return v;
}

void write_str(std::ostream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& in) {
  const auto n = read_pod<std::uint64_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw Error("checkpoint: truncated string");
  return s;
}

}  // namespace

void Checkpoint::put(const std::string& name, Mat m) {
  tensors.emplace_back(name, std::move(m));
}

const Mat& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return m;
  throw Error("checkpoint: missing tensor " + name);
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return true;
  return false;
}

void Checkpoint::put_params(const ad::ParamSet& ps, const std::string& prefix) {
  for (const auto& p : ps.items()) put(prefix + p->name, p->value);
}

void Checkpoint::load_params(ad::ParamSet& ps, const std::string& prefix) const {
  for (auto& p : ps.items()) {
    const Mat& m = get(prefix + p->name);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
      throw ShapeMismatch("checkpoint tensor " + prefix + p->name +
                          " has wrong shape");
    p->value = m;
  }
}

void Checkpoint::save(const std::filesystem::path& path) const {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("checkpoint: cannot open " + tmp);
    out.write(kMagic, 4);
    write_pod<std::uint32_t>(out, version);
    write_str(out, kind);
    write_str(out, config_json);
    write_pod<std::uint64_t>(out, tensors.size());
    for (const auto& [name, m] : tensors) {
      write_str(out, name);
      write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
      write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * m.size()));
    }
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile("checkpoint not found: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kMagic, 4))
    throw Error("checkpoint: bad magic in " + path.string());
  Checkpoint ck;
  ck.version = read_pod<std::uint32_t>(in);
  ck.kind = read_str(in);
  ck.config_json = read_str(in);
  const auto n = read_pod<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = read_str(in);
    const auto rows = read_pod<std::uint64_t>(in);
    const auto cols = read_pod<std::uint64_t>(in);
    Mat m(static_cast<long>(rows), static_cast<long>(cols));
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!in) throw Error("checkpoint: truncated tensor " + name);
    ck.tensors.emplace_back(std::move(name), std::move(m));
  }
  return ck;
}

}  // namespace cberl

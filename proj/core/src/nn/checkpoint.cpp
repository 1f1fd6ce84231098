#include "fedfc/nn/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace fedfc::nn {

namespace {

constexpr char kMagic[8] = {'F', 'E', 'D', 'F', 'C', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& is, const std::string& path) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw std::runtime_error("checkpoint: truncated file " + path);
  return v;
}

std::string read_str(std::istream& is, const std::string& path) {
  const std::uint32_t n = read_u32(is, path);
  std::string s(n, '\0');
  if (!is.read(s.data(), n))
    throw std::runtime_error("checkpoint: truncated file " + path);
  return s;
}

}  // namespace

void save_checkpoint(MlpModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, sizeof kMagic);
  write_u32(os, kVersion);
  write_str(os, model.arch_id);

  std::vector<TensorRef> tensors = model.all_tensors();
  write_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const TensorRef& t : tensors) {
    write_str(os, t.id);
    write_u32(os, static_cast<std::uint32_t>(t.rows));
    write_u32(os, static_cast<std::uint32_t>(t.cols));
    Eigen::Map<const Matrix> m(t.data, t.rows, t.cols);
    for (Index r = 0; r < t.rows; ++r)
      for (Index c = 0; c < t.cols; ++c) {
        const double v = m(r, c);
        os.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

MlpModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::uint32_t version = read_u32(is, path);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version in " + path);

  const std::string arch = read_str(is, path);
  MlpModel model = init_model(arch, 0);

  std::vector<TensorRef> tensors = model.all_tensors();
  const std::uint32_t count = read_u32(is, path);
  if (count != tensors.size())
    throw std::runtime_error("checkpoint: tensor count mismatch in " + path);

  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string id = read_str(is, path);
    const std::uint32_t rows = read_u32(is, path);
    const std::uint32_t cols = read_u32(is, path);
    TensorRef* ref = nullptr;
    for (TensorRef& t : tensors)
      if (t.id == id) ref = &t;
    if (!ref) throw std::runtime_error("checkpoint: unknown tensor " + id + " in " + path);
    if (ref->rows != static_cast<Index>(rows) || ref->cols != static_cast<Index>(cols))
      throw std::runtime_error("checkpoint: shape mismatch for " + id + " in " + path);
    Eigen::Map<Matrix> m(ref->data, ref->rows, ref->cols);
    for (Index r = 0; r < ref->rows; ++r)
      for (Index c = 0; c < ref->cols; ++c) {
        double v;
        if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
          throw std::runtime_error("checkpoint: truncated file " + path);
        m(r, c) = v;
      }
  }
  return model;
}

}  // namespace fedfc::nn

#include "trama/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "trama/errors.hpp"

namespace trama {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

template <typename V>
void write_pod(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw VersionError("checkpoint truncated");
  return v;
}

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void check_count(const std::string& name, const std::vector<std::int64_t>& shape, std::size_t n) {
  if (element_count(shape) != static_cast<std::int64_t>(n)) {
    throw PreconditionError("archive record " + name + ": shape does not match data length");
  }
}

}  // namespace

void Archive::put_f32(const std::string& name, std::vector<std::int64_t> shape, std::vector<float> data) {
  check_count(name, shape, data.size());
  Record r;
  r.dtype = DType::kF32;
  r.shape = std::move(shape);
  r.f32 = std::move(data);
  records_[name] = std::move(r);
}

void Archive::put_f64(const std::string& name, std::vector<std::int64_t> shape, std::vector<double> data) {
  check_count(name, shape, data.size());
  Record r;
  r.dtype = DType::kF64;
  r.shape = std::move(shape);
  r.f64 = std::move(data);
  records_[name] = std::move(r);
}

void Archive::put_i64(const std::string& name, std::vector<std::int64_t> shape, std::vector<std::int64_t> data) {
  check_count(name, shape, data.size());
  Record r;
  r.dtype = DType::kI64;
  r.shape = std::move(shape);
  r.i64 = std::move(data);
  records_[name] = std::move(r);
}

void Archive::put_string(const std::string& name, const std::string& s) {
  const auto n = static_cast<std::int64_t>(s.size());
  put_i64(name, {n}, std::vector<std::int64_t>(s.begin(), s.end()));
}

const Archive::Record& Archive::get(const std::string& name) const {
  auto it = records_.find(name);
  if (it == records_.end()) throw VersionError("checkpoint missing record: " + name);
  return it->second;
}

const std::vector<float>& Archive::f32(const std::string& name) const {
  const auto& r = get(name);
  if (r.dtype != DType::kF32) throw VersionError("checkpoint record " + name + " is not f32");
  return r.f32;
}

const std::vector<double>& Archive::f64(const std::string& name) const {
  const auto& r = get(name);
  if (r.dtype != DType::kF64) throw VersionError("checkpoint record " + name + " is not f64");
  return r.f64;
}

const std::vector<std::int64_t>& Archive::i64(const std::string& name) const {
  const auto& r = get(name);
  if (r.dtype != DType::kI64) throw VersionError("checkpoint record " + name + " is not i64");
  return r.i64;
}

std::int64_t Archive::scalar(const std::string& name) const { return i64(name).at(0); }
double Archive::scalar_f64(const std::string& name) const { return f64(name).at(0); }

std::string Archive::string(const std::string& name) const {
  const auto& v = i64(name);
  return std::string(v.begin(), v.end());
}

std::vector<std::string> Archive::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (auto it = records_.lower_bound(prefix); it != records_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    out.push_back(it->first);
  }
  return out;
}

void Archive::write(std::ostream& out) const {
  write_pod<std::uint8_t>(out, kVersion);
  write_pod<std::uint64_t>(out, records_.size());
  for (const auto& [name, r] : records_) {
    std::ostringstream body;
    write_pod<std::uint32_t>(body, static_cast<std::uint32_t>(name.size()));
    body.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint8_t>(body, static_cast<std::uint8_t>(r.dtype));
    write_pod<std::uint32_t>(body, static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) write_pod<std::int64_t>(body, d);
    switch (r.dtype) {
      case DType::kF32:
        body.write(reinterpret_cast<const char*>(r.f32.data()), static_cast<std::streamsize>(r.f32.size() * 4));
        break;
      case DType::kF64:
        body.write(reinterpret_cast<const char*>(r.f64.data()), static_cast<std::streamsize>(r.f64.size() * 8));
        break;
      case DType::kI64:
        body.write(reinterpret_cast<const char*>(r.i64.data()), static_cast<std::streamsize>(r.i64.size() * 8));
        break;
    }
    const std::string bytes = body.str();
    write_pod<std::uint64_t>(out, bytes.size());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
}

Archive Archive::read(std::istream& in) {
  const auto version = read_pod<std::uint8_t>(in);
  if (version != kVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) + ", expected " +
                       std::to_string(kVersion));
  }
  Archive ar;
  const auto count = read_pod<std::uint64_t>(in);
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto len = read_pod<std::uint64_t>(in);
    std::string bytes(len, '\0');
    in.read(bytes.data(), static_cast<std::streamsize>(len));
    if (!in) throw VersionError("checkpoint truncated");
    std::istringstream body(bytes);
    const auto name_len = read_pod<std::uint32_t>(body);
    std::string name(name_len, '\0');
    body.read(name.data(), name_len);
    Record r;
    r.dtype = static_cast<DType>(read_pod<std::uint8_t>(body));
    const auto rank = read_pod<std::uint32_t>(body);
    for (std::uint32_t i = 0; i < rank; ++i) r.shape.push_back(read_pod<std::int64_t>(body));
    const auto n = static_cast<std::size_t>(element_count(r.shape));
    switch (r.dtype) {
      case DType::kF32:
        r.f32.resize(n);
        body.read(reinterpret_cast<char*>(r.f32.data()), static_cast<std::streamsize>(n * 4));
        break;
      case DType::kF64:
        r.f64.resize(n);
        body.read(reinterpret_cast<char*>(r.f64.data()), static_cast<std::streamsize>(n * 8));
        break;
      case DType::kI64:
        r.i64.resize(n);
        body.read(reinterpret_cast<char*>(r.i64.data()), static_cast<std::streamsize>(n * 8));
        break;
      default:
        throw VersionError("checkpoint record " + name + " has unknown dtype");
    }
    if (!body) throw VersionError("checkpoint record " + name + " truncated");
    ar.records_[name] = std::move(r);
  }
  return ar;
}

void Archive::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write(out);
}

Archive Archive::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return read(in);
}

void put_params(Archive& ar, const std::string& prefix, const nn::ParamStore<float>& store) {
  ar.put_scalar(prefix + "#step", store.step_count());
  for (const auto& p : store) {
    const std::vector<std::int64_t> shape{p.value.rows(), p.value.cols()};
    auto flat = [](const nn::Matrix<float>& m) { return std::vector<float>(m.data(), m.data() + m.size()); };
    ar.put_f32(prefix + "/" + p.name, shape, flat(p.value));
    ar.put_f32(prefix + "#m/" + p.name, shape, flat(p.adam_m));
    ar.put_f32(prefix + "#v/" + p.name, shape, flat(p.adam_v));
  }
}

void get_params(const Archive& ar, const std::string& prefix, nn::ParamStore<float>& store) {
  store.set_step_count(ar.scalar(prefix + "#step"));
  for (auto& p : store) {
    auto load = [&](const std::string& key, nn::Matrix<float>& dst) {
      const auto& rec = ar.get(key);
      if (rec.shape.size() != 2 || rec.shape[0] != dst.rows() || rec.shape[1] != dst.cols()) {
        throw VersionError("checkpoint parameter " + key + " has the wrong shape");
      }
      const auto& v = ar.f32(key);
      std::memcpy(dst.data(), v.data(), v.size() * sizeof(float));
    };
    load(prefix + "/" + p.name, p.value);
    load(prefix + "#m/" + p.name, p.adam_m);
    load(prefix + "#v/" + p.name, p.adam_v);
  }
}

}  // namespace trama

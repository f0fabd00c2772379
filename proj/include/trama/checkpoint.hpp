#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "trama/param_store.hpp"

namespace trama {

/// Binary container of named row-major arrays.
///
/// Layout (little endian): u8 format version, u64 record count, then per
/// record a u64 byte length followed by
///   u32 name length | name | u8 dtype | u32 rank | i64 dims[rank] | data.
class Archive {
 public:
  static constexpr std::uint8_t kVersion = 1;
  enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kI64 = 2 };

  struct Record {
    DType dtype = DType::kF32;
    std::vector<std::int64_t> shape;
    std::vector<float> f32;
    std::vector<double> f64;
    std::vector<std::int64_t> i64;
  };

  void put_f32(const std::string& name, std::vector<std::int64_t> shape, std::vector<float> data);
  void put_f64(const std::string& name, std::vector<std::int64_t> shape, std::vector<double> data);
  void put_i64(const std::string& name, std::vector<std::int64_t> shape, std::vector<std::int64_t> data);
  void put_scalar(const std::string& name, std::int64_t v) { put_i64(name, {1}, {v}); }
  void put_scalar_f64(const std::string& name, double v) { put_f64(name, {1}, {v}); }
  void put_string(const std::string& name, const std::string& s);

  bool has(const std::string& name) const { return records_.count(name) != 0; }
  const Record& get(const std::string& name) const;
  const std::vector<float>& f32(const std::string& name) const;
  const std::vector<double>& f64(const std::string& name) const;
  const std::vector<std::int64_t>& i64(const std::string& name) const;
  std::int64_t scalar(const std::string& name) const;
  double scalar_f64(const std::string& name) const;
  std::string string(const std::string& name) const;
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;

  void write(std::ostream& out) const;
  /// Throws VersionError on a version byte other than kVersion.
  static Archive read(std::istream& in);
  void save(const std::string& path) const;
  static Archive load(const std::string& path);

 private:
  std::map<std::string, Record> records_;
};

/// Stores values, Adam moments and the step counter under "<prefix>/...".
void put_params(Archive& ar, const std::string& prefix, const nn::ParamStore<float>& store);
/// Restores into a store with identical names and shapes.
void get_params(const Archive& ar, const std::string& prefix, nn::ParamStore<float>& store);

}  // namespace trama

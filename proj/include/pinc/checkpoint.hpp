#pragma once

// Binary checkpoint: "PINC1", five int32 config fields, f64 softplus beta,
// u64 parameter count, f64 parameters, then optional tagged blocks
// ("AFF1" normalization record, "ADM1" optimizer state). Little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pinc/common.hpp"
#include "pinc/io.hpp"
#include "pinc/network.hpp"
#include "pinc/optim.hpp"
#include "pinc/sampler.hpp"

namespace pinc {

struct Checkpoint {
  MLPConfig config;
  std::vector<double> params;
  std::optional<Affine> affine;
  std::optional<AdamState> adam;
  std::uint64_t iteration = 0;
};

namespace detail {

class ByteWriter {
 public:
  void raw(std::string_view s) { buf_.append(s); }
  template <class T>
  void put(T v) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    buf_.append(b, sizeof(T));
  }
  void doubles(const std::vector<double>& v) {
    put<std::uint64_t>(v.size());
    for (double d : v) put(d);
  }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string name) : data_(data), name_(std::move(name)) {}
  bool done() const { return pos_ == data_.size(); }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::vector<double> doubles() {
    const auto n = get<std::uint64_t>();
    if (n > (data_.size() - pos_) / sizeof(double)) fail("array length exceeds file size");
    std::vector<double> v(static_cast<std::size_t>(n));
    for (double& d : v) d = get<double>();
    return v;
  }
  [[noreturn]] void fail(const std::string& why) const { throw InputError(name_ + ": " + why); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail("truncated checkpoint");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string name_;
};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& c) {
  detail::ByteWriter w;
  w.raw("PINC1");
  w.put<std::int32_t>(c.config.depth);
  w.put<std::int32_t>(c.config.width);
  w.put<std::int32_t>(c.config.skip_layer);
  w.put<std::int32_t>(c.config.in_dim);
  w.put<std::int32_t>(c.config.out_dim);
  w.put<double>(c.config.softplus_beta);
  w.doubles(c.params);
  w.raw("ITR1");
  w.put<std::uint64_t>(c.iteration);
  if (c.affine) {
    w.raw("AFF1");
    for (double x : c.affine->center) w.put(x);
    w.put(c.affine->scale);
  }
  if (c.adam) {
    w.raw("ADM1");
    w.put<std::uint64_t>(c.adam->step);
    w.put(c.adam->beta1);
    w.put(c.adam->beta2);
    w.put(c.adam->eps);
    w.doubles(c.adam->m);
    w.doubles(c.adam->v);
  }
  return w.take();
}

inline Checkpoint decode_checkpoint(std::string_view bytes, const std::string& name = "<checkpoint>") {
  detail::ByteReader r(bytes, name);
  if (bytes.size() < 5 || r.raw(5) != "PINC1") r.fail("not a checkpoint (bad magic)");
  Checkpoint c;
  c.config.depth = r.get<std::int32_t>();
  c.config.width = r.get<std::int32_t>();
  c.config.skip_layer = r.get<std::int32_t>();
  c.config.in_dim = r.get<std::int32_t>();
  c.config.out_dim = r.get<std::int32_t>();
  c.config.softplus_beta = r.get<double>();
  try {
    c.config.validate();
  } catch (const ConfigError& e) {
    r.fail(std::string("invalid network config: ") + e.what());
  }
  c.params = r.doubles();
  if (c.params.size() != Mlp(c.config).param_count()) r.fail("parameter count does not match the network config");
  while (!r.done()) {
    const std::string tag(r.raw(4));
    if (tag == "ITR1") {
      c.iteration = r.get<std::uint64_t>();
    } else if (tag == "AFF1") {
      Affine a;
      for (double& x : a.center) x = r.get<double>();
      a.scale = r.get<double>();
      if (!(a.scale > 0.0)) r.fail("non-positive normalization scale");
      c.affine = a;
    } else if (tag == "ADM1") {
      AdamState s;
      s.step = r.get<std::uint64_t>();
      s.beta1 = r.get<double>();
      s.beta2 = r.get<double>();
      s.eps = r.get<double>();
      s.m = r.doubles();
      s.v = r.doubles();
      if (s.m.size() != c.params.size() || s.v.size() != c.params.size()) r.fail("optimizer state size mismatch");
      c.adam = std::move(s);
    } else {
      r.fail("unknown block '" + tag + "'");
    }
  }
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_file_atomic(path, encode_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace pinc

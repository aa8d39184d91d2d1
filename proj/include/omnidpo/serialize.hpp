#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "omnidpo/tensor.hpp"

namespace omnidpo {

// Little binary buffer used by the checkpoint format. Doubles are stored as
// raw IEEE-754 bytes so round-trips are bit-exact.
class ByteWriter {
 public:
  void u64(std::uint64_t v) { raw(&v, sizeof(v)); }
  void f64(double v) { raw(&v, sizeof(v)); }

  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }

  void tensor(const Tensor& t) {
    u64(t.rank());
    for (std::size_t e : t.shape()) u64(e);
    raw(t.data().data(), t.size() * sizeof(double));
  }

  void u64_vec(const std::vector<std::size_t>& v) {
    u64(v.size());
    for (std::size_t x : v) u64(x);
  }

  const std::string& buffer() const { return buf_; }

  std::uint64_t checksum() const { return fnv1a(buf_.data(), buf_.size()); }

 private:
  void raw(const void* p, std::size_t n) {
    buf_.append(static_cast<const char*>(p), n);
  }
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string data) : buf_(std::move(data)) {}

  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof(v));
    return v;
  }

  double f64() {
    double v;
    raw(&v, sizeof(v));
    return v;
  }

  std::string str() {
    std::size_t n = u64();
    check(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  Tensor tensor() {
    std::size_t rank = u64();
    std::vector<std::size_t> shape(rank);
    for (std::size_t& e : shape) e = u64();
    Tensor t(shape);
    raw(t.data().data(), t.size() * sizeof(double));
    return t;
  }

  std::vector<std::size_t> u64_vec() {
    std::vector<std::size_t> v(u64());
    for (std::size_t& x : v) x = u64();
    return v;
  }

  std::size_t pos() const { return pos_; }
  std::size_t size() const { return buf_.size(); }
  const std::string& buffer() const { return buf_; }

 private:
  void raw(void* p, std::size_t n) {
    check(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  void check(std::size_t n) const {
    if (pos_ + n > buf_.size()) {
      throw std::runtime_error("checkpoint: truncated file");
    }
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return data;
}

}  // namespace omnidpo

#pragma once

#include <cstddef>
#include <istream>
#include <stdexcept>
#include <string>

namespace cten {

inline constexpr const char* kVersion = "0.1.0";

/// Version plus compiler: stamped into config echoes and run reports so any
/// output names the binary that produced it.
inline std::string build_id() {
  return std::string("cten ") + kVersion + " (" + __VERSION__ + ")";
}

/// Incompatible tensor shapes or axis indices.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid values: labels out of range, bad configuration fields, empty axes.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite value appeared in a forward or backward pass.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file content. Carries the byte offset (binary) or line (text)
/// at which reading failed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t where)
      : std::runtime_error(msg + " (at " + std::to_string(where) + ")"),
        where_(where) {}
  std::size_t where() const { return where_; }

 private:
  std::size_t where_;
};

namespace detail {

/// Binary reader that tracks the byte offset for parse diagnostics and turns
/// short reads into ParseError.
class ByteReader {
 public:
  explicit ByteReader(std::istream& in) : in_(in) {}
  void read(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw ParseError("unexpected end of file", off_);
    off_ += n;
  }
  template <class T>
  T get() {
    T v;
    read(&v, sizeof(T));
    return v;
  }
  std::size_t offset() const { return off_; }

 private:
  std::istream& in_;
  std::size_t off_ = 0;
};

}  // namespace detail

}  // namespace cten

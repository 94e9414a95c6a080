#pragma once

#include <stdexcept>
#include <string>

namespace pxd {

// Mirrors pxd_status in the C header; values must stay in sync.
enum class Errc {
  invalid_argument = 1,
  config = 2,
  io = 3,
  palette = 4,
  protocol = 5,
  backend = 6,
  gradcheck = 7,
  exists = 8,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace pxd

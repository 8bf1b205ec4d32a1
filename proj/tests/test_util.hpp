#pragma once

#include <functional>

#include "doctest.h"
#include "flowmatch/errors.hpp"

namespace flowmatch::testing {

// Runs `fn` and reports the kind of flowmatch::Error it threw.
inline bool throws_kind(const std::function<void()>& fn, ErrorKind kind) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind() == kind;
  }
  return false;
}

}  // namespace flowmatch::testing

#define CHECK_THROWS_KIND(expr, kind) \
  CHECK(::flowmatch::testing::throws_kind([&] { (void)(expr); }, (kind)))

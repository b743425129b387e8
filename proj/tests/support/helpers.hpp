#pragma once

#include <functional>

#include "common/error.hpp"
#include "doctest.h"
#include "sql/types.hpp"
#include "support/condition_gen.hpp"

namespace rgma::testing {

/// The ErrorCode `fn` throws; fails the check if it throws nothing.
inline ErrorCode codeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an rgma::Error");
  return ErrorCode::Internal;
}

inline Value toValue(const TVal& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  if (const auto* d = std::get_if<double>(&v)) return *d;
  return std::get<std::string>(v);
}

}  // namespace rgma::testing

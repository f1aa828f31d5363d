#pragma once

#include <gtest/gtest.h>

#include "smt/error.hpp"

namespace smt::testing {

template <typename F>
void expect_error(ErrorKind kind, F&& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected " << to_string(kind);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

}  // namespace smt::testing

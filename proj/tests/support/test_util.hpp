#pragma once

#include <gtest/gtest.h>

#include "cras/error.hpp"
#include "fixtures.hpp"

#define EXPECT_THROW_CODE(stmt, expected_code)                                \
  do {                                                                        \
    try {                                                                     \
      stmt;                                                                   \
      ADD_FAILURE() << "expected cras::Error(" << ::cras::to_string(expected_code) << ")"; \
    } catch (const ::cras::Error& e_) {                                       \
      EXPECT_EQ(e_.code(), expected_code) << e_.what();                       \
    }                                                                         \
  } while (0)

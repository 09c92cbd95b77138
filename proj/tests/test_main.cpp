#include "stadv/runtime.hpp"

#include <gtest/gtest.h>

int main(int argc, char** argv) {
  stadv::tune_allocator();
  ::testing::InitGoogleTest(&argc, argv);
  return RUN_ALL_TESTS();
}

#include <doctest.h>
#include "fog/bounds.hpp"
TEST_SUITE_BEGIN("bounds");
TEST_SUITE_END();

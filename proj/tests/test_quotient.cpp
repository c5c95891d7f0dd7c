#include <doctest.h>
#include "fog/quotient.hpp"
TEST_SUITE_BEGIN("quotient");
TEST_SUITE_END();

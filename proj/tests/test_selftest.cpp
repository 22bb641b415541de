#include "doctest.h"
#include "wgae/error.hpp"
#include "wgae/selftest.hpp"

using namespace wgae;

TEST_CASE("every selftest suite passes at full size") {
  for (const auto& name : selftest_suite_names()) {
    const auto suite = run_selftest_suite(name);
    INFO(to_text(suite));
    CHECK(suite.passed());
  }
}

TEST_CASE("selftest reports failures and unknown suites") {
  SelftestOptions strict;
  strict.gradient_tolerance = 0.0;  // no finite-difference estimate is exact
  const auto suite = run_selftest_suite("gradients", strict);
  CHECK_FALSE(suite.passed());
  CHECK(to_text(suite).find("FAIL gradients/") != std::string::npos);
  CHECK_THROWS_AS(run_selftest_suite("nope"), Error);
}

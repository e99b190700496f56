// SPDX-License-Identifier: Apache-2.0
//
// One line per acceptance criterion. Criteria 3 and 4 are known not to hold
// with this discretization (see the README); they are still run with their
// original thresholds and reported as expected failures.

#include <cstdio>
#include <set>
#include <sstream>
#include <thread>

#include "hsm/verify.hpp"

int main()
{
  using namespace hsm::verify;
  const std::set<int> expected_failures{3, 4};
  VerifyOptions opt;
  opt.threads = std::max(1u, std::thread::hardware_concurrency());

  int unexpected = 0;
  for (int i = 1; i <= 10; ++i)
  {
    const std::string id = "acceptance-" + std::to_string(i);
    Report r;
    std::string why;
    try
    {
      r = run_case(id, opt);
    }
    catch (const std::exception &e)
    {
      why = e.what();
    }
    const bool pass = why.empty() && r.pass();
    const bool expected = expected_failures.count(i) > 0;

    std::ostringstream detail;
    for (const auto &c : r.checks)
    {
      detail << " [" << c.name << (c.pass ? " ok" : " FAILED");
      for (const auto &[k, v] : c.metrics)
      {
        detail << " " << k << "=" << v;
      }
      detail << "]";
    }
    if (!why.empty())
    {
      detail << " [exception: " << why << "]";
    }

    const char *verdict = pass ? (expected ? "PASS (expected failure did not occur)" : "PASS")
                               : (expected ? "FAIL (expected)" : "FAIL");
    std::printf("criterion %2d: %s  %s (%.1f s)%s\n", i, verdict, r.title.c_str(), r.seconds,
                detail.str().c_str());
    std::fflush(stdout);
    if (!pass && !expected)
    {
      ++unexpected;
    }
  }
  std::printf("%d unexpected failure(s)\n", unexpected);
  return unexpected == 0 ? 0 : 1;
}

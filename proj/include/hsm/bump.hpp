// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "hsm/common.hpp"

namespace hsm
{

// rho = value or f = value inside a disc.
struct DiscBump
{
  Vec2 center;
  double radius = 0.0;
  cplx value;
};

}  // namespace hsm

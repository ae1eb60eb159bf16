#pragma once

#include "dualformer.hpp"
#include "dualformer/checks/suites.hpp"

namespace dualformer::testing {
using namespace dualformer::checks;
}  // namespace dualformer::testing

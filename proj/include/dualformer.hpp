#pragma once

#include "dualformer/analysis/cost.hpp"
#include "dualformer/analysis/report_io.hpp"
#include "dualformer/checks/fixtures.hpp"
#include "dualformer/checks/suites.hpp"
#include "dualformer/attention/multi_head.hpp"
#include "dualformer/attention/pyramid.hpp"
#include "dualformer/attention/sublayers.hpp"
#include "dualformer/attention/window.hpp"
#include "dualformer/errors.hpp"
#include "dualformer/model/config.hpp"
#include "dualformer/model/config_io.hpp"
#include "dualformer/model/forward.hpp"
#include "dualformer/model/inflate.hpp"
#include "dualformer/model/state.hpp"
#include "dualformer/model/weights_io.hpp"
#include "dualformer/numerics/dual.hpp"
#include "dualformer/numerics/exec.hpp"
#include "dualformer/numerics/extent.hpp"
#include "dualformer/numerics/gradcheck.hpp"
#include "dualformer/numerics/ops.hpp"
#include "dualformer/numerics/serialize.hpp"
#include "dualformer/numerics/tensor.hpp"
#include "dualformer/oracle/reference.hpp"

#pragma once

#include "selftune/errors.hpp"
#include "selftune/exact_dp.hpp"
#include "selftune/format.hpp"
#include "selftune/greedy.hpp"
#include "selftune/linalg.hpp"
#include "selftune/model.hpp"
#include "selftune/presets.hpp"
#include "selftune/random.hpp"
#include "selftune/scenario_json.hpp"
#include "selftune/sim.hpp"
#include "selftune/sysid.hpp"

namespace selftune {
inline constexpr const char* kVersion = "0.1.0";
}

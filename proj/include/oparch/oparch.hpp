#pragma once

// Umbrella header: the whole library in one include.

#include "oparch/basis.hpp"
#include "oparch/cli.hpp"
#include "oparch/common.hpp"
#include "oparch/diagnostics.hpp"
#include "oparch/estimate.hpp"
#include "oparch/forecast.hpp"
#include "oparch/grid.hpp"
#include "oparch/io.hpp"
#include "oparch/kernels.hpp"
#include "oparch/mc.hpp"
#include "oparch/model.hpp"
#include "oparch/simulate.hpp"

#pragma once

#include "lama/error.hpp"
#include "lama/mem_topology.hpp"
#include "lama/timing.hpp"
#include "lama/energy.hpp"
#include "lama/lut_engine.hpp"
#include "lama/baselines.hpp"
#include "lama/calibration.hpp"
#include "lama/exp_quant.hpp"
#include "lama/accel.hpp"
#include "lama/report.hpp"

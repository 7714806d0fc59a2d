#pragma once

#include "calibration.hpp"
#include "chunk_plan.hpp"
#include "errors.hpp"
#include "harness.hpp"
#include "kernels.hpp"
#include "native.hpp"
#include "platform.hpp"
#include "simulator.hpp"
#include "stats.hpp"
#include "technique.hpp"
#include "text_format.hpp"

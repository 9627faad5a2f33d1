#pragma once

#include "rloc/solve/aoa.hpp"
#include "rloc/solve/damped_lsq.hpp"
#include "rloc/solve/options.hpp"
#include "rloc/solve/rss.hpp"
#include "rloc/solve/tdoa.hpp"
#include "rloc/solve/toa.hpp"

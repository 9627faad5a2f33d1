#pragma once

#include "rloc/channel.hpp"
#include "rloc/config.hpp"
#include "rloc/error.hpp"
#include "rloc/geometry.hpp"
#include "rloc/harness.hpp"
#include "rloc/oracle.hpp"
#include "rloc/report.hpp"
#include "rloc/rng.hpp"
#include "rloc/scenario.hpp"
#include "rloc/solvers.hpp"
#include "rloc/textutil.hpp"
#include "rloc/version.hpp"

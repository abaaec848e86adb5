#pragma once

#include "tvcn/common.hpp"
#include "tvcn/control.hpp"
#include "tvcn/dense.hpp"
#include "tvcn/evolution.hpp"
#include "tvcn/fluid.hpp"
#include "tvcn/graph.hpp"
#include "tvcn/harness.hpp"
#include "tvcn/io.hpp"
#include "tvcn/rng.hpp"
#include "tvcn/routing.hpp"
#include "tvcn/stability.hpp"

#pragma once

// Umbrella header: the whole pipeline from scene to rate decisions.

#include "twinmap/common.hpp"
#include "twinmap/geometry.hpp"
#include "twinmap/gp.hpp"
#include "twinmap/harness.hpp"
#include "twinmap/io.hpp"
#include "twinmap/parallel.hpp"
#include "twinmap/prior.hpp"
#include "twinmap/propagate.hpp"
#include "twinmap/rng.hpp"
#include "twinmap/scene.hpp"
#include "twinmap/select.hpp"
#include "twinmap/stats.hpp"
#include "twinmap/urllc.hpp"

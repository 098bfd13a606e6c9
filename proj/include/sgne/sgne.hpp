#pragma once

// Umbrella header.

#include "sgne/common.hpp"
#include "sgne/rng.hpp"
#include "sgne/dynamics.hpp"
#include "sgne/com_model.hpp"
#include "sgne/game.hpp"
#include "sgne/com.hpp"
#include "sgne/solver.hpp"
#include "sgne/trace_io.hpp"
#include "sgne/microgrid.hpp"
#include "sgne/config.hpp"
#include "sgne/cli.hpp"

#pragma once

#include "bold/attacks.hpp"
#include "bold/calib.hpp"
#include "bold/cobyla.hpp"
#include "bold/commands.hpp"
#include "bold/config.hpp"
#include "bold/core.hpp"
#include "bold/error.hpp"
#include "bold/fixtures.hpp"
#include "bold/io.hpp"
#include "bold/metrics.hpp"
#include "bold/rng.hpp"
#include "bold/simulate.hpp"
#include "bold/weighted.hpp"

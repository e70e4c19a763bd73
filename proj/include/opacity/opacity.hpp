#pragma once

#include "opacity/numeric.hpp"
#include "opacity/model.hpp"
#include "opacity/belief.hpp"
#include "opacity/equilibrium.hpp"
#include "opacity/survival.hpp"
#include "opacity/viability.hpp"
#include "opacity/config.hpp"
#include "opacity/io.hpp"
#include "opacity/presets.hpp"

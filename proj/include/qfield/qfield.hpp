#pragma once

#include "qfield/ac_zeeman.hpp"
#include "qfield/analysis.hpp"
#include "qfield/config.hpp"
#include "qfield/dynamics.hpp"
#include "qfield/error.hpp"
#include "qfield/hyperfine.hpp"
#include "qfield/linalg.hpp"
#include "qfield/magnetics.hpp"
#include "qfield/units.hpp"
#include "qfield/vec3.hpp"

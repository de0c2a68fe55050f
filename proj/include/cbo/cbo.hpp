#pragma once

#include "cbo/constants.hpp"
#include "cbo/dynamics.hpp"
#include "cbo/errors.hpp"
#include "cbo/io.hpp"
#include "cbo/meanfield.hpp"
#include "cbo/measure.hpp"
#include "cbo/objective.hpp"
#include "cbo/parallel.hpp"
#include "cbo/rng.hpp"

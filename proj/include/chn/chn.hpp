#pragma once

// Umbrella header: finite-difference solver and experiment harness for a
// Cahn-Hilliard tumor-growth system with nutrient coupling, chemotaxis,
// active transport, and non-homogeneous Dirichlet data.

#include "chn/config.hpp"
#include "chn/diagnostics.hpp"
#include "chn/experiments.hpp"
#include "chn/expr.hpp"
#include "chn/grid.hpp"
#include "chn/linalg.hpp"
#include "chn/mms.hpp"
#include "chn/model.hpp"
#include "chn/potential.hpp"
#include "chn/run.hpp"
#include "chn/solver.hpp"

#pragma once

// Low-order divergence-free Stokes elements on Powell-Sabin and
// Worsey-Farin splits.

#include "divfree/errors.hpp"
#include "divfree/geometry_mesh.hpp"
#include "divfree/split_refinement.hpp"
#include "divfree/quadrature.hpp"
#include "divfree/manufactured.hpp"
#include "divfree/sparse.hpp"
#include "divfree/fe_assembly.hpp"
#include "divfree/pressure_constraints.hpp"
#include "divfree/stokes_solvers.hpp"
#include "divfree/experiment.hpp"

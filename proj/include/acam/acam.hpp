#pragma once

// Umbrella header for the acoustic-camera calibration library.

#include "acam/baseline_grid.hpp"
#include "acam/error.hpp"
#include "acam/gccphat.hpp"
#include "acam/geometry.hpp"
#include "acam/io.hpp"
#include "acam/simulator.hpp"
#include "acam/solver.hpp"
#include "acam/tdoa_model.hpp"
#include "acam/wav.hpp"

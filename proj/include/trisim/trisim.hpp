#ifndef TRISIM_TRISIM_HPP
#define TRISIM_TRISIM_HPP

#include "trisim/abm.hpp"
#include "trisim/case_studies.hpp"
#include "trisim/error.hpp"
#include "trisim/experiment.hpp"
#include "trisim/expr.hpp"
#include "trisim/model.hpp"
#include "trisim/network.hpp"
#include "trisim/ode.hpp"
#include "trisim/rng.hpp"
#include "trisim/ssa.hpp"
#include "trisim/stats/compare.hpp"
#include "trisim/stats/curve_fit.hpp"
#include "trisim/stats/extrema.hpp"
#include "trisim/stats/tests.hpp"
#include "trisim/trajectory.hpp"

#endif  // TRISIM_TRISIM_HPP

#pragma once

#include "cmrg/error.hpp"
#include "cmrg/core.hpp"
#include "cmrg/prox.hpp"
#include "cmrg/solvers.hpp"
#include "cmrg/simulate.hpp"
#include "cmrg/select.hpp"
#include "cmrg/metrics.hpp"
#include "cmrg/io.hpp"
#include "cmrg/bench.hpp"

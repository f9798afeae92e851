#pragma once

#include "pathbench/numkit/gradcheck.hpp"
#include "pathbench/numkit/lbfgs.hpp"
#include "pathbench/numkit/linalg.hpp"
#include "pathbench/numkit/loss.hpp"
#include "pathbench/numkit/matrix.hpp"
#include "pathbench/numkit/optim.hpp"
#include "pathbench/numkit/rng.hpp"
#include "pathbench/numkit/stats.hpp"

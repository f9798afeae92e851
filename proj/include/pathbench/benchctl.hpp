#pragma once

#include "pathbench/benchctl/cli.hpp"
#include "pathbench/benchctl/executor.hpp"
#include "pathbench/benchctl/planner.hpp"
#include "pathbench/benchctl/registry.hpp"
#include "pathbench/benchctl/store.hpp"
#include "pathbench/benchctl/synth.hpp"

#pragma once

#include "pathbench/splitkit/seeds.hpp"
#include "pathbench/splitkit/splits.hpp"

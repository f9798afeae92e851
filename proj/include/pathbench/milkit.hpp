#pragma once

#include "pathbench/milkit/abmil.hpp"
#include "pathbench/milkit/bags.hpp"

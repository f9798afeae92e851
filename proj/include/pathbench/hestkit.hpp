#pragma once

#include "pathbench/hestkit/regression.hpp"

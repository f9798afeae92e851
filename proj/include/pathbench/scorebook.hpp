#pragma once

#include "pathbench/scorebook/metrics.hpp"
#include "pathbench/scorebook/report.hpp"

#pragma once

#include "pathbench/probekit/logreg.hpp"
#include "pathbench/probekit/probe.hpp"

#pragma once

#include "pathbench/embstore/binary_io.hpp"
#include "pathbench/embstore/bound_dataset.hpp"
#include "pathbench/embstore/csv.hpp"
#include "pathbench/embstore/embeddings.hpp"
#include "pathbench/embstore/manifest.hpp"
#include "pathbench/embstore/model_card.hpp"

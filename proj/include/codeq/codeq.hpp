#pragma once

// Umbrella header: compact-code encoders (k-means, PQ, OPQ, ITQ), decoders
// (natural, topline, additive LUT, neural network), distance estimation and
// re-ranking, plus the experiment drivers.

#include "codeq/codes.hpp"
#include "codeq/common.hpp"
#include "codeq/config.hpp"
#include "codeq/csv.hpp"
#include "codeq/experiments.hpp"
#include "codeq/itq.hpp"
#include "codeq/kmeans.hpp"
#include "codeq/linear_decoders.hpp"
#include "codeq/matrix.hpp"
#include "codeq/nn_decoder.hpp"
#include "codeq/nn_train.hpp"
#include "codeq/opq.hpp"
#include "codeq/pq.hpp"
#include "codeq/search.hpp"
#include "codeq/serialize.hpp"
#include "codeq/synthetic.hpp"
#include "codeq/vecs_io.hpp"

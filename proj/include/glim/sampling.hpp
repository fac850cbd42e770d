#pragma once

#include <utility>

#include "glim/array.hpp"
#include "glim/rng.hpp"

namespace glim {

// Softmax over a spatial logit grid [H,W] (or flat [N]); probabilities are
// positive and sum to 1 within 1e-9.
Array softmax_flat(const Array& logits);

// Sample an index from a flat probability array.
int categorical_sample_index(const Array& probs, rng::Engine& gen);

// Sample a (row, col) cell from a [H,W] probability grid.
std::pair<int, int> categorical_sample(const Array& probs, rng::Engine& gen);

}  // namespace glim

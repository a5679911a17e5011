#pragma once

#include <vector>

#include "calopt/calosim.hpp"

namespace calopt {

// One perturbed design with its simulated events; a CandidateSet is one
// iteration's training data.
struct Candidate {
  DesignVector design;
  EventBatch batch;
};

using CandidateSet = std::vector<Candidate>;

}  // namespace calopt

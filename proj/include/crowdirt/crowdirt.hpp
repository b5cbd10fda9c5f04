#ifndef CROWDIRT_CROWDIRT_HPP
#define CROWDIRT_CROWDIRT_HPP

#include "crowdirt/core_data.hpp"
#include "crowdirt/diagnostics.hpp"
#include "crowdirt/error.hpp"
#include "crowdirt/io.hpp"
#include "crowdirt/irt_model.hpp"
#include "crowdirt/metrics.hpp"
#include "crowdirt/pipeline.hpp"
#include "crowdirt/posterior.hpp"
#include "crowdirt/rng.hpp"
#include "crowdirt/sampler.hpp"
#include "crowdirt/simgen.hpp"
#include "crowdirt/text.hpp"
#include "crowdirt/vote.hpp"

#endif  // CROWDIRT_CROWDIRT_HPP

#pragma once

// Convenience umbrella for the whole library.

#include "vireid/augment.hpp"
#include "vireid/batch.hpp"
#include "vireid/center.hpp"
#include "vireid/classify.hpp"
#include "vireid/eval.hpp"
#include "vireid/experiment.hpp"
#include "vireid/numkit.hpp"
#include "vireid/oracle.hpp"
#include "vireid/rng.hpp"
#include "vireid/train.hpp"
#include "vireid/triplet.hpp"

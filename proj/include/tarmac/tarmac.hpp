#pragma once

#include "tarmac/config.hpp"
#include "tarmac/csv.hpp"
#include "tarmac/error.hpp"
#include "tarmac/evaluate.hpp"
#include "tarmac/featurize.hpp"
#include "tarmac/geo.hpp"
#include "tarmac/ingest.hpp"
#include "tarmac/model.hpp"
#include "tarmac/pca.hpp"
#include "tarmac/pipeline.hpp"
#include "tarmac/random.hpp"
#include "tarmac/synth.hpp"
#include "tarmac/time.hpp"
#include "tarmac/trajectory.hpp"

#pragma once

#include "rulegate/formula.hpp"
#include "rulegate/rulegraph.hpp"
#include "rulegate/boolsem.hpp"
#include "rulegate/indepprob.hpp"
#include "rulegate/neural.hpp"
#include "rulegate/leafbank.hpp"
#include "rulegate/cache.hpp"
#include "rulegate/gates.hpp"
#include "rulegate/mining.hpp"
#include "rulegate/scoring.hpp"
#include "rulegate/synth.hpp"
#include "rulegate/experiment.hpp"

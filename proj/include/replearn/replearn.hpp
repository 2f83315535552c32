#pragma once

#include "replearn/bundle_io.hpp"
#include "replearn/constants.hpp"
#include "replearn/error.hpp"
#include "replearn/estimators.hpp"
#include "replearn/harness.hpp"
#include "replearn/lemmalab.hpp"
#include "replearn/linops.hpp"
#include "replearn/parallel.hpp"
#include "replearn/risk.hpp"
#include "replearn/rng.hpp"
#include "replearn/taskgen.hpp"

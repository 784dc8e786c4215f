#pragma once

// Everything except the HTTP clients and the command-line front end.

#include "rlqr/common.hpp"
#include "rlqr/config.hpp"
#include "rlqr/corpus.hpp"
#include "rlqr/demo.hpp"
#include "rlqr/eval.hpp"
#include "rlqr/grpo.hpp"
#include "rlqr/policy.hpp"
#include "rlqr/retrieval.hpp"
#include "rlqr/reward.hpp"
#include "rlqr/sample.hpp"
#include "rlqr/synth.hpp"
#include "rlqr/synthetic.hpp"
#include "rlqr/text.hpp"

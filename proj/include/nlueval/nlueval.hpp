#pragma once

#include "nlueval/common.hpp"
#include "nlueval/corpus.hpp"
#include "nlueval/evalengine.hpp"
#include "nlueval/genconstrain.hpp"
#include "nlueval/harness.hpp"
#include "nlueval/lexicon.hpp"
#include "nlueval/metrics.hpp"
#include "nlueval/promptkit.hpp"
#include "nlueval/rankscore.hpp"
#include "nlueval/registry.hpp"
#include "nlueval/rng.hpp"
#include "nlueval/stats.hpp"
#include "nlueval/text.hpp"

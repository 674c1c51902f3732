#pragma once

#include "seqpack/conversation.hpp"
#include "seqpack/corpus.hpp"
#include "seqpack/emit.hpp"
#include "seqpack/errors.hpp"
#include "seqpack/greedy_packing.hpp"
#include "seqpack/padding.hpp"
#include "seqpack/pipeline.hpp"
#include "seqpack/random.hpp"
#include "seqpack/random_packing.hpp"
#include "seqpack/rows.hpp"
#include "seqpack/stats.hpp"
#include "seqpack/subprocess_tokenizer.hpp"
#include "seqpack/tokenizer.hpp"
#include "seqpack/types.hpp"

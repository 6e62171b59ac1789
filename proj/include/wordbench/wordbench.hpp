#pragma once

#include "analogy.hpp"
#include "classify.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "rng.hpp"
#include "store.hpp"
#include "tagger.hpp"
#include "train.hpp"
#include "utf8.hpp"
#include "vocab.hpp"

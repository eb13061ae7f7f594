#pragma once

// Umbrella header. The HTTP binding lives in gramscope/http_server.hpp.

#include "gramscope/bpe.hpp"
#include "gramscope/chat.hpp"
#include "gramscope/classifiers.hpp"
#include "gramscope/corpus.hpp"
#include "gramscope/crossval.hpp"
#include "gramscope/error.hpp"
#include "gramscope/io.hpp"
#include "gramscope/manifest.hpp"
#include "gramscope/metrics.hpp"
#include "gramscope/ngram.hpp"
#include "gramscope/pipeline.hpp"
#include "gramscope/rng.hpp"
#include "gramscope/schema.hpp"
#include "gramscope/service.hpp"
#include "gramscope/synthetic.hpp"
#include "gramscope/trends.hpp"

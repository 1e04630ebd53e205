#pragma once

// Convenience include of the whole library. Pull in individual headers
// instead if you want to avoid the HTTP-backed pieces (and their httplib
// dependency): everything except openai_gateway.hpp, remote_retrieval.hpp and
// http_common.hpp is self-contained.

#include "ragloop/errors.hpp"
#include "ragloop/core.hpp"
#include "ragloop/tag_protocol.hpp"
#include "ragloop/retrieval.hpp"
#include "ragloop/llm_gateway.hpp"
#include "ragloop/http_common.hpp"
#include "ragloop/openai_gateway.hpp"
#include "ragloop/remote_retrieval.hpp"
#include "ragloop/squeeze.hpp"
#include "ragloop/rollout.hpp"
#include "ragloop/reward.hpp"
#include "ragloop/bench.hpp"

#pragma once

#include "radalign/alignment.hpp"
#include "radalign/common.hpp"
#include "radalign/config.hpp"
#include "radalign/datagen.hpp"
#include "radalign/encoders.hpp"
#include "radalign/heatmap.hpp"
#include "radalign/io.hpp"
#include "radalign/knowledge.hpp"
#include "radalign/llm_client.hpp"
#include "radalign/metrics.hpp"
#include "radalign/promptgen.hpp"
#include "radalign/retrieval.hpp"
#include "radalign/training.hpp"

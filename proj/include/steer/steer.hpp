#pragma once

#include "steer/analysis.hpp"
#include "steer/error.hpp"
#include "steer/extraction.hpp"
#include "steer/harness.hpp"
#include "steer/its.hpp"
#include "steer/model.hpp"
#include "steer/pca.hpp"
#include "steer/runtime.hpp"
#include "steer/steering_plan.hpp"
#include "steer/svg_plot.hpp"
#include "steer/system_prompts.hpp"
#include "steer/tokenizer.hpp"
#include "steer/toy.hpp"
#include "steer/transfer.hpp"
#include "steer/tuner.hpp"

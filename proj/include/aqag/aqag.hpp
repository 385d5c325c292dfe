#pragma once

#include "aqag/corpus.hpp"
#include "aqag/error.hpp"
#include "aqag/inference_client.hpp"
#include "aqag/label.hpp"
#include "aqag/mcq_parser.hpp"
#include "aqag/metrics.hpp"
#include "aqag/prompting.hpp"
#include "aqag/token_scores.hpp"
#include "aqag/train_config.hpp"
#include "aqag/version.hpp"

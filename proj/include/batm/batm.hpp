#pragma once

#include "batm/checkpoint.hpp"
#include "batm/coherence.hpp"
#include "batm/common.hpp"
#include "batm/config.hpp"
#include "batm/corpus.hpp"
#include "batm/embedding.hpp"
#include "batm/gradcheck.hpp"
#include "batm/model.hpp"
#include "batm/pipeline.hpp"
#include "batm/topics.hpp"
#include "batm/training.hpp"

#pragma once

// Everything: data preparation, model, objective, training and evaluation.

#include "drsc/audio.hpp"
#include "drsc/checkpoint.hpp"
#include "drsc/config.hpp"
#include "drsc/cycle.hpp"
#include "drsc/dataset.hpp"
#include "drsc/eval.hpp"
#include "drsc/feature_cache.hpp"
#include "drsc/losses.hpp"
#include "drsc/manifest.hpp"
#include "drsc/mel.hpp"
#include "drsc/model.hpp"
#include "drsc/png.hpp"
#include "drsc/synthetic.hpp"
#include "drsc/text.hpp"
#include "drsc/train.hpp"

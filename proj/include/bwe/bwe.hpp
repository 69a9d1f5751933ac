#pragma once

#include "audio.hpp"
#include "cfm/checkpoint.hpp"
#include "cfm/estimator.hpp"
#include "cfm/guidance.hpp"
#include "cfm/path.hpp"
#include "cfm/postprocess.hpp"
#include "cfm/sampler.hpp"
#include "cfm/train.hpp"
#include "corpus.hpp"
#include "degradation.hpp"
#include "dsp.hpp"
#include "error.hpp"
#include "features.hpp"
#include "fft.hpp"
#include "grid.hpp"
#include "mel.hpp"
#include "metrics.hpp"
#include "evaluation.hpp"
#include "pipeline.hpp"

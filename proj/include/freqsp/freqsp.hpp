#pragma once

#include "freqsp/codec.hpp"
#include "freqsp/config.hpp"
#include "freqsp/error.hpp"
#include "freqsp/freq.hpp"
#include "freqsp/labeler.hpp"
#include "freqsp/media.hpp"
#include "freqsp/nn/dataset.hpp"
#include "freqsp/nn/loss.hpp"
#include "freqsp/nn/model.hpp"
#include "freqsp/nn/ops.hpp"
#include "freqsp/nn/serialize.hpp"
#include "freqsp/nn/tensor.hpp"
#include "freqsp/nn/train.hpp"
#include "freqsp/rdcurve.hpp"
#include "freqsp/sharpen.hpp"

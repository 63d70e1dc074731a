#pragma once

#include "hnn/ablation.hpp"
#include "hnn/checkpoint.hpp"
#include "hnn/config.hpp"
#include "hnn/convert.hpp"
#include "hnn/encoder.hpp"
#include "hnn/errors.hpp"
#include "hnn/evaluation.hpp"
#include "hnn/gradcheck.hpp"
#include "hnn/instance.hpp"
#include "hnn/losses.hpp"
#include "hnn/model.hpp"
#include "hnn/synthetic.hpp"
#include "hnn/tensor.hpp"
#include "hnn/training.hpp"
#include "hnn/vocab.hpp"

#pragma once

#include "trear/adam.hpp"
#include "trear/checkpoint.hpp"
#include "trear/clip.hpp"
#include "trear/config.hpp"
#include "trear/error.hpp"
#include "trear/image.hpp"
#include "trear/model.hpp"
#include "trear/nn.hpp"
#include "trear/pipeline.hpp"
#include "trear/positional.hpp"
#include "trear/rng.hpp"
#include "trear/synthetic.hpp"
#include "trear/tensor.hpp"
#include "trear/train.hpp"

#pragma once

#include "mvpl/tensorlab/batchnorm.hpp"
#include "mvpl/tensorlab/conv.hpp"
#include "mvpl/tensorlab/gradcheck.hpp"
#include "mvpl/tensorlab/loss.hpp"
#include "mvpl/tensorlab/ops.hpp"
#include "mvpl/tensorlab/tape.hpp"
#include "mvpl/tensorlab/tensor.hpp"

#pragma once

#include "occage/numcore/checkpoint.hpp"
#include "occage/numcore/gradcheck.hpp"
#include "occage/numcore/layers.hpp"
#include "occage/numcore/nn.hpp"
#include "occage/numcore/ops.hpp"
#include "occage/numcore/optim.hpp"
#include "occage/numcore/spectral.hpp"
#include "occage/numcore/tensor.hpp"

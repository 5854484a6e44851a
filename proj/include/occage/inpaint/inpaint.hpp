#pragma once

#include "occage/inpaint/attention.hpp"
#include "occage/inpaint/config.hpp"
#include "occage/inpaint/networks.hpp"
#include "occage/inpaint/train.hpp"

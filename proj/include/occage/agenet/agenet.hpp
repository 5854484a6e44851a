#pragma once

#include "occage/agenet/backbone.hpp"
#include "occage/agenet/config.hpp"
#include "occage/agenet/swin.hpp"

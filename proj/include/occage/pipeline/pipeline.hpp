#pragma once

#include "occage/pipeline/config.hpp"
#include "occage/pipeline/manifest.hpp"
#include "occage/pipeline/run.hpp"
#include "occage/pipeline/train.hpp"

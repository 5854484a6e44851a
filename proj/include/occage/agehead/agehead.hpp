#pragma once

#include "occage/agehead/head.hpp"
#include "occage/agehead/model.hpp"

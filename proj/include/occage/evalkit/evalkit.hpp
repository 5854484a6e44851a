#pragma once

#include "occage/evalkit/metrics.hpp"
#include "occage/evalkit/report.hpp"

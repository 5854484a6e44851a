#pragma once

#include "occage/facegeom/align.hpp"
#include "occage/facegeom/image.hpp"
#include "occage/facegeom/image_io.hpp"
#include "occage/facegeom/occlusion.hpp"
#include "occage/facegeom/synthetic.hpp"

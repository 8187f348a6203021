#pragma once

#include "mvtex/app.hpp"
#include "mvtex/attention.hpp"
#include "mvtex/bake.hpp"
#include "mvtex/config.hpp"
#include "mvtex/denoiser.hpp"
#include "mvtex/dilation.hpp"
#include "mvtex/error.hpp"
#include "mvtex/finalize.hpp"
#include "mvtex/grid.hpp"
#include "mvtex/islands.hpp"
#include "mvtex/knn.hpp"
#include "mvtex/merge.hpp"
#include "mvtex/mesh.hpp"
#include "mvtex/pipeline.hpp"
#include "mvtex/png_io.hpp"
#include "mvtex/primitives.hpp"
#include "mvtex/raster.hpp"
#include "mvtex/remote.hpp"
#include "mvtex/schedule.hpp"
#include "mvtex/tensor_io.hpp"
#include "mvtex/vec.hpp"
#include "mvtex/wire.hpp"

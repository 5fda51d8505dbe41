#pragma once

// Umbrella header for the texsynth library.

#include "texsynth/convnet.hpp"
#include "texsynth/core.hpp"
#include "texsynth/dictionary.hpp"
#include "texsynth/evaluation.hpp"
#include "texsynth/filterbank.hpp"
#include "texsynth/gram.hpp"
#include "texsynth/image_io.hpp"
#include "texsynth/lbfgsb.hpp"
#include "texsynth/parallel.hpp"
#include "texsynth/patches.hpp"
#include "texsynth/rng.hpp"
#include "texsynth/synthesis.hpp"
#include "texsynth/textures.hpp"

#pragma once

#include "mscat/coherence_lab.hpp"
#include "mscat/config.hpp"
#include "mscat/experiment.hpp"
#include "mscat/forward.hpp"
#include "mscat/geometry.hpp"
#include "mscat/illumination.hpp"
#include "mscat/music.hpp"
#include "mscat/reflectivity.hpp"
#include "mscat/sparse_recovery.hpp"
#include "mscat/types.hpp"

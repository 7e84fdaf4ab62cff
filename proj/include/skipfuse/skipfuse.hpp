#ifndef SKIPFUSE_SKIPFUSE_HPP_
#define SKIPFUSE_SKIPFUSE_HPP_

#include "skipfuse/analysis.hpp"
#include "skipfuse/config.hpp"
#include "skipfuse/error.hpp"
#include "skipfuse/forward.hpp"
#include "skipfuse/fusion.hpp"
#include "skipfuse/io.hpp"
#include "skipfuse/linalg.hpp"
#include "skipfuse/matrix.hpp"
#include "skipfuse/presets.hpp"
#include "skipfuse/random.hpp"
#include "skipfuse/weights.hpp"

#endif  // SKIPFUSE_SKIPFUSE_HPP_

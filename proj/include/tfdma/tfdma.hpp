#pragma once

#include "tfdma/combinatorics.hpp"
#include "tfdma/delay.hpp"
#include "tfdma/desync.hpp"
#include "tfdma/engine.hpp"
#include "tfdma/errors.hpp"
#include "tfdma/io.hpp"
#include "tfdma/protocol.hpp"
#include "tfdma/rng.hpp"
#include "tfdma/stability.hpp"

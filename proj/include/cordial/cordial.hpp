#pragma once

#include "cordial/block.hpp"
#include "cordial/blocklace.hpp"
#include "cordial/checks.hpp"
#include "cordial/config.hpp"
#include "cordial/crypto.hpp"
#include "cordial/dot.hpp"
#include "cordial/leader_election.hpp"
#include "cordial/miner.hpp"
#include "cordial/ordering.hpp"
#include "cordial/simnet.hpp"
#include "cordial/types.hpp"

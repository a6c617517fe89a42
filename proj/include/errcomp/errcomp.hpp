#pragma once

#include "errcomp/base_model.hpp"
#include "errcomp/compensator.hpp"
#include "errcomp/datastream.hpp"
#include "errcomp/errors.hpp"
#include "errcomp/harness.hpp"
#include "errcomp/lsh.hpp"
#include "errcomp/metrics.hpp"
#include "errcomp/oracle_memory.hpp"
#include "errcomp/random.hpp"
#include "errcomp/schema.hpp"
#include "errcomp/sketch_memory.hpp"

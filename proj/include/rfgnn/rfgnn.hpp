#pragma once

// Umbrella header: tabular data -> random forest -> proximity graph -> GCN.

#include "rfgnn/error.hpp"
#include "rfgnn/forest.hpp"
#include "rfgnn/gcn.hpp"
#include "rfgnn/graph_build.hpp"
#include "rfgnn/harness.hpp"
#include "rfgnn/metrics.hpp"
#include "rfgnn/proximity.hpp"
#include "rfgnn/rng.hpp"
#include "rfgnn/synthetic.hpp"
#include "rfgnn/tabular_io.hpp"

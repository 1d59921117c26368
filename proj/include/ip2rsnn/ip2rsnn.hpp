#pragma once

#include "ip2rsnn/rng.hpp"
#include "ip2rsnn/snn.hpp"
#include "ip2rsnn/optimizer.hpp"
#include "ip2rsnn/plasticity.hpp"
#include "ip2rsnn/tasks.hpp"
#include "ip2rsnn/objective.hpp"
#include "ip2rsnn/gradients.hpp"
#include "ip2rsnn/tensor_io.hpp"
#include "ip2rsnn/config.hpp"
#include "ip2rsnn/checkpoint.hpp"
#include "ip2rsnn/harness.hpp"
#include "ip2rsnn/manifest.hpp"
#include "ip2rsnn/analysis/lesion.hpp"
#include "ip2rsnn/analysis/stats.hpp"
#include "ip2rsnn/analysis/modularity.hpp"
#include "ip2rsnn/analysis/pca.hpp"

#pragma once

// Umbrella header.

#include "mrsr/core/conv.hpp"
#include "mrsr/core/error.hpp"
#include "mrsr/core/grad_check.hpp"
#include "mrsr/core/image.hpp"
#include "mrsr/core/ops.hpp"
#include "mrsr/core/params.hpp"
#include "mrsr/core/tensor.hpp"
#include "mrsr/data/loader.hpp"
#include "mrsr/data/phantom.hpp"
#include "mrsr/data/pipeline.hpp"
#include "mrsr/disentangle/autoencoder.hpp"
#include "mrsr/disentangle/training.hpp"
#include "mrsr/io/checkpoint.hpp"
#include "mrsr/io/png.hpp"
#include "mrsr/metrics/quality.hpp"
#include "mrsr/metrics/resize.hpp"
#include "mrsr/nn/layers.hpp"
#include "mrsr/plot/chart.hpp"
#include "mrsr/sr/network.hpp"
#include "mrsr/sr/training.hpp"
#include "mrsr/train/config.hpp"
#include "mrsr/train/optim.hpp"
#include "mrsr/train/phases.hpp"
#include "mrsr/train/record.hpp"
#include "mrsr/vit/vit.hpp"

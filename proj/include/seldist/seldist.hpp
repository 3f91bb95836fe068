#pragma once

#include "seldist/core/config.hpp"
#include "seldist/core/rng.hpp"
#include "seldist/core/sample.hpp"
#include "seldist/core/tensor.hpp"
#include "seldist/core/types.hpp"
#include "seldist/autodiff/ops.hpp"
#include "seldist/autodiff/var.hpp"
#include "seldist/checkpoint.hpp"
#include "seldist/data.hpp"
#include "seldist/distill_select.hpp"
#include "seldist/distill_ts.hpp"
#include "seldist/eval.hpp"
#include "seldist/io/png.hpp"
#include "seldist/networks.hpp"
#include "seldist/optim.hpp"
#include "seldist/photometric.hpp"
#include "seldist/plot.hpp"
#include "seldist/proxy.hpp"
#include "seldist/trainer.hpp"
#include "seldist/warping.hpp"

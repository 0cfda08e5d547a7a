// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/// Umbrella header.

#pragma once

#include "demorph/bio/comparator.hpp"
#include "demorph/cli/run_config.hpp"
#include "demorph/core/error.hpp"
#include "demorph/core/image.hpp"
#include "demorph/core/png_io.hpp"
#include "demorph/core/rng.hpp"
#include "demorph/data/corpus.hpp"
#include "demorph/data/manifest_io.hpp"
#include "demorph/data/split.hpp"
#include "demorph/data/synthetic.hpp"
#include "demorph/data/transforms.hpp"
#include "demorph/eval/iqa.hpp"
#include "demorph/eval/metrics.hpp"
#include "demorph/eval/report.hpp"
#include "demorph/eval/scores.hpp"
#include "demorph/losses/losses.hpp"
#include "demorph/model/discriminator.hpp"
#include "demorph/model/encoder.hpp"
#include "demorph/model/generator.hpp"
#include "demorph/nn/layers.hpp"
#include "demorph/nn/ops.hpp"
#include "demorph/nn/tape.hpp"
#include "demorph/nn/tensor.hpp"
#include "demorph/train/adam.hpp"
#include "demorph/train/checkpoint.hpp"
#include "demorph/train/config.hpp"
#include "demorph/train/trainer.hpp"

#pragma once

#include "m2mfp/common.hpp"
#include "m2mfp/ce_model.hpp"
#include "m2mfp/bsfe.hpp"
#include "m2mfp/hierarchy.hpp"
#include "m2mfp/gbdt.hpp"
#include "m2mfp/dimm_tree.hpp"
#include "m2mfp/baselines.hpp"
#include "m2mfp/eval.hpp"
#include "m2mfp/synth.hpp"
#include "m2mfp/pipeline.hpp"

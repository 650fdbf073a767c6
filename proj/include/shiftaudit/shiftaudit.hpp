#pragma once

#include "shiftaudit/attack.hpp"
#include "shiftaudit/audit.hpp"
#include "shiftaudit/dataset.hpp"
#include "shiftaudit/error.hpp"
#include "shiftaudit/heatmap.hpp"
#include "shiftaudit/idx.hpp"
#include "shiftaudit/io.hpp"
#include "shiftaudit/mlp.hpp"
#include "shiftaudit/model_io.hpp"
#include "shiftaudit/patterns.hpp"
#include "shiftaudit/pgm.hpp"
#include "shiftaudit/report.hpp"
#include "shiftaudit/rng.hpp"
#include "shiftaudit/saliency.hpp"
#include "shiftaudit/stats.hpp"
#include "shiftaudit/synthetic.hpp"
#include "shiftaudit/tensor.hpp"

#pragma once

#include "deeplda/adam.hpp"
#include "deeplda/analysis.hpp"
#include "deeplda/calibration.hpp"
#include "deeplda/covariance.hpp"
#include "deeplda/dataset.hpp"
#include "deeplda/encoder.hpp"
#include "deeplda/errors.hpp"
#include "deeplda/experiments.hpp"
#include "deeplda/gradcheck.hpp"
#include "deeplda/head.hpp"
#include "deeplda/losses.hpp"
#include "deeplda/matrix.hpp"
#include "deeplda/plot.hpp"
#include "deeplda/rng.hpp"
#include "deeplda/train.hpp"

#pragma once

#include "ftirpad/calibration.hpp"
#include "ftirpad/dataset.hpp"
#include "ftirpad/error.hpp"
#include "ftirpad/evaluation.hpp"
#include "ftirpad/experiment.hpp"
#include "ftirpad/image.hpp"
#include "ftirpad/imgproc.hpp"
#include "ftirpad/io.hpp"
#include "ftirpad/lbp.hpp"
#include "ftirpad/optics.hpp"
#include "ftirpad/parallel.hpp"
#include "ftirpad/pipeline.hpp"
#include "ftirpad/png_io.hpp"
#include "ftirpad/rng.hpp"
#include "ftirpad/simulator.hpp"
#include "ftirpad/svm.hpp"

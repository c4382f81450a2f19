#pragma once

#include "mvpa/attention.hpp"
#include "mvpa/autodiff.hpp"
#include "mvpa/evaluation.hpp"
#include "mvpa/model.hpp"
#include "mvpa/objectives.hpp"
#include "mvpa/rng.hpp"
#include "mvpa/series.hpp"
#include "mvpa/tensor.hpp"
#include "mvpa/trainer.hpp"
#include "mvpa/wavelet.hpp"

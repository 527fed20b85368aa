#pragma once

#include "portmanteau/data.hpp"
#include "portmanteau/decoding.hpp"
#include "portmanteau/errors.hpp"
#include "portmanteau/evaluation.hpp"
#include "portmanteau/layers.hpp"
#include "portmanteau/models.hpp"
#include "portmanteau/parallel.hpp"
#include "portmanteau/pipeline.hpp"
#include "portmanteau/random.hpp"
#include "portmanteau/serialization.hpp"
#include "portmanteau/tensor.hpp"
#include "portmanteau/training.hpp"

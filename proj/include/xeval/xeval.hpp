/*
 * Copyright 2026 The xeval Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "xeval/aggregate.hpp"
#include "xeval/ava.hpp"
#include "xeval/data.hpp"
#include "xeval/error.hpp"
#include "xeval/explain.hpp"
#include "xeval/io.hpp"
#include "xeval/metrics.hpp"
#include "xeval/metrics_ext.hpp"
#include "xeval/model.hpp"
#include "xeval/parallel.hpp"
#include "xeval/rng.hpp"
#include "xeval/train.hpp"
#include "xeval/vector_ops.hpp"

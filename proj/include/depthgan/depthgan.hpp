// Copyright 2026 The depthgan Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "depthgan/attention.hpp"
#include "depthgan/autodiff.hpp"
#include "depthgan/errors.hpp"
#include "depthgan/image.hpp"
#include "depthgan/image_io.hpp"
#include "depthgan/losses.hpp"
#include "depthgan/metrics.hpp"
#include "depthgan/model.hpp"
#include "depthgan/normals.hpp"
#include "depthgan/scene.hpp"
#include "depthgan/tensor.hpp"

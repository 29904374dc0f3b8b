// Copyright 2026 The Seqevade Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SEQEVADE_ATTACK_HPP_
#define SEQEVADE_ATTACK_HPP_

#include "seqevade/attack/attack.hpp"
#include "seqevade/attack/benign.hpp"
#include "seqevade/attack/hybrid.hpp"
#include "seqevade/attack/optimizers.hpp"

#endif  // SEQEVADE_ATTACK_HPP_

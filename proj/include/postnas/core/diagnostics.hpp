// Copyright 2026 The PostNAS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <vector>

namespace postnas {

// Process-wide warning log. Degenerate-input policies (zero-norm vectors,
// empty search grids) record here instead of throwing.
void record_warning(std::string message);
std::vector<std::string> take_warnings();
std::size_t warning_count();

// When set, warnings are echoed to stderr as they are recorded.
void set_warning_echo(bool enabled);

}  // namespace postnas

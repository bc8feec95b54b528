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

// Binary checkpoint: the model config, the mixer paths each block holds and
// every named tensor.
//
//   "PNASCKPT" | u32 version | u64 header bytes | header JSON
//   | u32 tensor count | per tensor: u32 name bytes, name, u32 rank,
//     i64 dims[rank], f32 values | u64 FNV-1a of all preceding bytes
//
// Integers and floats are little-endian.

#include <filesystem>
#include <map>
#include <string>

#include "postnas/model/model.hpp"

namespace postnas::io {

struct Checkpoint {
  model::ModelParams params;
  std::map<std::string, std::string> meta;  // free-form, e.g. role, linear kind
};

void save_checkpoint(const std::filesystem::path& path, const model::ModelParams& params,
                     const std::map<std::string, std::string>& meta = {});

// Throws Error(Io) on missing, truncated or corrupt files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace postnas::io

// Copyright 2026 The FedPass Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Structured-text (JSON) checkpoints of a trained federation.
//
// A checkpoint holds layer shapes, parameters and the defense spec. Passport
// keys are never written to it: a party's channel means go to a separate key
// file created with owner-only permissions (0600).
//
// Tensors are {"shape": [...], "data": [...]} with row-major data printed at
// full round-trip precision.

#ifndef FEDPASS_CHECKPOINT_H_
#define FEDPASS_CHECKPOINT_H_

#include <string>
#include <vector>

#include "json.hpp"

#include "fedpass/defenses.h"
#include "fedpass/network.h"
#include "fedpass/protocol.h"
#include "fedpass/tensor.h"

namespace fedpass {

inline constexpr const char* kCheckpointFormat = "fedpass-checkpoint";
inline constexpr const char* kKeyFileFormat = "fedpass-keys";
inline constexpr int kCheckpointVersion = 1;

nlohmann::json TensorToJson(const Tensor& t);
Tensor TensorFromJson(const nlohmann::json& j);

nlohmann::json NetworkToJson(const Network& net);
// Throws FormatError on unknown layer kinds or missing fields.
Network NetworkFromJson(const nlohmann::json& j);

nlohmann::json DefenseToJson(const DefenseSpec& spec);
DefenseSpec DefenseFromJson(const nlohmann::json& j);

struct Checkpoint {
  DefenseSpec defense;
  std::uint64_t seed = 0;
  std::vector<Network> passive;  // One per party, in party order.
  Network active;
  nlohmann::json experiment;     // The config that produced it, for provenance.
};

struct KeyFile {
  std::vector<PassportMeans> passive;
  PassportMeans active;
};

void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint LoadCheckpoint(const std::string& path);

// Writes with permissions 0600; the file is created before any key is written.
void SaveKeys(const std::string& path, const KeyFile& keys);
KeyFile LoadKeys(const std::string& path);

}  // namespace fedpass

#endif  // FEDPASS_CHECKPOINT_H_

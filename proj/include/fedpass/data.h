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


// Dataset ingestion and vertical partitioning.

#ifndef FEDPASS_DATA_H_
#define FEDPASS_DATA_H_

#include <cstdint>
#include <string>
#include <vector>

#include "fedpass/random.h"
#include "fedpass/tensor.h"

namespace fedpass {

struct Dataset {
  Tensor features;  // [n x ...]
  std::vector<int> labels;

  Index size() const { return features.empty() ? 0 : features.dim(0); }
  // First `n` records (all of them when n <= 0 or n > size()).
  Dataset Head(Index n) const;
};

// Big-endian IDX files as distributed for MNIST: magic 0x00000803 for images
// and 0x00000801 for labels. Pixels are scaled to [0, 1] and returned as
// [n x 1 x rows x cols]. Throws FormatError on a bad magic, truncation or an
// image/label count mismatch.
Tensor ReadIdxImages(const std::string& path);
std::vector<int> ReadIdxLabels(const std::string& path);
Dataset LoadMnistIdx(const std::string& images_path, const std::string& labels_path);

struct SynthSpec {
  Index n = 1000;
  Index dims = 8;
  int classes = 2;
  double blob_sep = 4.0;
};

// Gaussian blobs: class c is centred at a random unit direction scaled by
// blob_sep, with identity covariance. Labels cycle through the classes before
// a seeded shuffle.
Dataset SynthDataset(const SynthSpec& spec, Rng& rng);

// Splits features column-wise into K shards: image width for [n x c x h x w],
// coordinates for [n x d]. Shard widths differ by at most one; the first
// (width mod K) shards take the extra column.
std::vector<Tensor> VerticalSplit(const Tensor& features, int parties);
// Inverse of VerticalSplit.
Tensor Reassemble(const std::vector<Tensor>& shards);

}  // namespace fedpass

#endif  // FEDPASS_DATA_H_

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


#include "fedpass/data.h"

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "fedpass/errors.h"

namespace fedpass {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t BigEndian32(const std::vector<unsigned char>& b, std::size_t at,
                          const std::string& path) {
  if (b.size() < at + 4) throw FormatError(path + ": truncated header");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

std::string Hex(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex;
  os.width(8);
  os.fill('0');
  os << v;
  return os.str();
}

void CheckMagic(std::uint32_t actual, std::uint32_t expected, const std::string& path) {
  if (actual != expected) {
    throw FormatError(path + ": bad magic, expected " + Hex(expected) + ", got " + Hex(actual));
  }
}

// Widths of `parties` contiguous blocks over `total` columns.
std::vector<Index> BlockWidths(Index total, int parties) {
  if (parties < 1) throw InvalidArgument("need at least one party");
  if (parties > total) {
    throw InvalidArgument(std::to_string(parties) + " parties for " + std::to_string(total) +
                          " feature columns");
  }
  std::vector<Index> widths(static_cast<std::size_t>(parties), total / parties);
  for (Index i = 0; i < total % parties; ++i) ++widths[static_cast<std::size_t>(i)];
  return widths;
}

}  // namespace

Dataset Dataset::Head(Index n) const {
  if (n <= 0 || n >= size()) return *this;
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  return {GatherRows(features, idx), std::vector<int>(labels.begin(), labels.begin() + n)};
}

Tensor ReadIdxImages(const std::string& path) {
  const std::vector<unsigned char> b = ReadFile(path);
  CheckMagic(BigEndian32(b, 0, path), kImageMagic, path);
  const Index n = BigEndian32(b, 4, path), rows = BigEndian32(b, 8, path),
              cols = BigEndian32(b, 12, path);
  const std::size_t need = 16 + static_cast<std::size_t>(n * rows * cols);
  if (b.size() < need) {
    throw FormatError(path + ": truncated, expected " + std::to_string(need) + " bytes, got " +
                      std::to_string(b.size()));
  }
  if (n == 0 || rows == 0 || cols == 0) throw FormatError(path + ": empty image set");
  Tensor images({n, 1, rows, cols});
  for (Index i = 0; i < images.size(); ++i) images[i] = b[16 + static_cast<std::size_t>(i)] / 255.0;
  return images;
}

std::vector<int> ReadIdxLabels(const std::string& path) {
  const std::vector<unsigned char> b = ReadFile(path);
  CheckMagic(BigEndian32(b, 0, path), kLabelMagic, path);
  const std::size_t n = BigEndian32(b, 4, path);
  if (b.size() < 8 + n) {
    throw FormatError(path + ": truncated, expected " + std::to_string(8 + n) + " bytes, got " +
                      std::to_string(b.size()));
  }
  return std::vector<int>(b.begin() + 8, b.begin() + 8 + static_cast<std::ptrdiff_t>(n));
}

Dataset LoadMnistIdx(const std::string& images_path, const std::string& labels_path) {
  Dataset d{ReadIdxImages(images_path), ReadIdxLabels(labels_path)};
  if (d.size() != static_cast<Index>(d.labels.size())) {
    throw FormatError("image/label count mismatch: " + std::to_string(d.size()) + " images, " +
                      std::to_string(d.labels.size()) + " labels");
  }
  return d;
}

Dataset SynthDataset(const SynthSpec& spec, Rng& rng) {
  if (spec.classes < 2) throw InvalidArgument("synthetic data needs at least two classes");
  if (spec.n < 1 || spec.dims < 1) throw InvalidArgument("synthetic data needs n, dims >= 1");
  Matrix centres(spec.classes, spec.dims);
  for (int c = 0; c < spec.classes; ++c) {
    Vector dir(spec.dims);
    do {
      for (Index j = 0; j < spec.dims; ++j) dir[j] = rng.Normal(0.0, 1.0);
    } while (dir.norm() == 0.0);
    centres.row(c) = spec.blob_sep * dir.normalized().transpose();
  }
  const std::vector<Index> order = rng.Permutation(spec.n);
  Dataset d{Tensor({spec.n, spec.dims}), std::vector<int>(static_cast<std::size_t>(spec.n))};
  auto x = d.features.matrix();
  for (Index r = 0; r < spec.n; ++r) {
    const int c = static_cast<int>(order[static_cast<std::size_t>(r)] % spec.classes);
    d.labels[static_cast<std::size_t>(r)] = c;
    for (Index j = 0; j < spec.dims; ++j) x(r, j) = centres(c, j) + rng.Normal(0.0, 1.0);
  }
  return d;
}

std::vector<Tensor> VerticalSplit(const Tensor& features, int parties) {
  const Shape& s = features.shape();
  if (s.size() != 2 && s.size() != 4) {
    throw ShapeError("vertical split expects [n x d] or [n x c x h x w], got " + ShapeString(s));
  }
  const Index width = s.back();
  const Index outer = features.size() / width;  // Rows of width-length runs.
  std::vector<Tensor> shards;
  Index offset = 0;
  for (Index w : BlockWidths(width, parties)) {
    Shape shape = s;
    shape.back() = w;
    Tensor shard(shape);
    for (Index r = 0; r < outer; ++r) {
      shard.vec().segment(r * w, w) = features.vec().segment(r * width + offset, w);
    }
    shards.push_back(std::move(shard));
    offset += w;
  }
  return shards;
}

Tensor Reassemble(const std::vector<Tensor>& shards) {
  if (shards.empty()) throw InvalidArgument("nothing to reassemble");
  Shape shape = shards.front().shape();
  Index width = 0;
  for (const Tensor& t : shards) {
    if (t.rank() != shards.front().rank() ||
        !std::equal(shape.begin(), shape.end() - 1, t.shape().begin())) {
      throw ShapeError("shards disagree outside the split axis");
    }
    width += t.shape().back();
  }
  const Index outer = shards.front().size() / shards.front().shape().back();
  shape.back() = width;
  Tensor out(shape);
  Index offset = 0;
  for (const Tensor& t : shards) {
    const Index w = t.shape().back();
    for (Index r = 0; r < outer; ++r) {
      out.vec().segment(r * width + offset, w) = t.vec().segment(r * w, w);
    }
    offset += w;
  }
  return out;
}

}  // namespace fedpass

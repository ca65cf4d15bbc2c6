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

#ifndef FEDPASS_ERRORS_H_
#define FEDPASS_ERRORS_H_

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace fedpass {

// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes. When raised from a network pass, `layer_index`
// names the offending layer.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what,
                      std::optional<std::size_t> layer_index = std::nullopt)
      : Error(layer_index ? "layer " + std::to_string(*layer_index) + ": " + what
                          : what),
        layer_index_(layer_index) {}

  std::optional<std::size_t> layer_index() const { return layer_index_; }

 private:
  std::optional<std::size_t> layer_index_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Violations of the split-learning message ordering or party state.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated on-disk data (IDX files, checkpoints, configs).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Iterative procedures that produced NaN/Inf or failed to converge.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedpass

#endif  // FEDPASS_ERRORS_H_

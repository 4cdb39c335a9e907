/*
 * Copyright 2026 The Prunex Authors.
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

#ifndef PRUNEX_CONTAINER_H_
#define PRUNEX_CONTAINER_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "prunex/tensor.h"

namespace prunex {

// Binary tensor container:
//   "PXB1" | u64 LE manifest length | manifest JSON | payloads (LE, row-major)
// The manifest is {"tensors": [{name, dtype, shape, offset, nbytes}, ...],
// "metadata": {...}} with offsets relative to the first payload byte.
using AnyTensor = std::variant<Tensor<float>, Tensor<double>, Tensor<std::uint8_t>>;

class ContainerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TensorContainer {
  std::map<std::string, AnyTensor> tensors;
  nlohmann::json metadata = nlohmann::json::object();

  template <typename T>
  void Put(const std::string& name, Tensor<T> t) {
    tensors.insert_or_assign(name, AnyTensor(std::move(t)));
  }

  bool contains(const std::string& name) const { return tensors.count(name) != 0; }

  // Throws ContainerError if absent or stored with another dtype.
  template <typename T>
  const Tensor<T>& Get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ContainerError("container: no tensor '" + name + "'");
    const auto* t = std::get_if<Tensor<T>>(&it->second);
    if (t == nullptr) throw ContainerError("container: tensor '" + name + "' has another dtype");
    return *t;
  }

  std::string Serialize() const;
  static TensorContainer Deserialize(std::string_view bytes);

  void Save(const std::filesystem::path& path) const;
  static TensorContainer Load(const std::filesystem::path& path);
  // Reads only the manifest.
  static nlohmann::json ReadManifest(const std::filesystem::path& path);
};

}  // namespace prunex

#endif  // PRUNEX_CONTAINER_H_

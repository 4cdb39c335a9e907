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

#include "prunex/container.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace prunex {
namespace {

static_assert(std::endian::native == std::endian::little,
              "container payloads are written in host order");

constexpr char kMagic[4] = {'P', 'X', 'B', '1'};

template <typename T>
constexpr const char* DtypeName() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  if constexpr (std::is_same_v<T, double>) return "f64";
  return "u8";
}

void AppendU64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t ReadU64(std::string_view bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  }
  return v;
}

template <typename T>
AnyTensor DecodeTensor(const Shape& shape, std::string_view payload) {
  if (payload.size() != NumElements(shape) * sizeof(T)) {
    throw ContainerError("container: payload size does not match shape " +
                         ShapeToString(shape));
  }
  std::vector<T> data(NumElements(shape));
  if (!data.empty()) std::memcpy(data.data(), payload.data(), payload.size());
  return Tensor<T>(shape, std::move(data));
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContainerError("container: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string TensorContainer::Serialize() const {
  nlohmann::json entries = nlohmann::json::array();
  std::string payload;
  for (const auto& [name, any] : tensors) {
    std::visit(
        [&](const auto& t) {
          using T = typename std::decay_t<decltype(t)>::value_type;
          const std::size_t nbytes = t.size() * sizeof(T);
          entries.push_back({{"name", name},
                             {"dtype", DtypeName<T>()},
                             {"shape", t.shape()},
                             {"offset", payload.size()},
                             {"nbytes", nbytes}});
          payload.append(reinterpret_cast<const char*>(t.data().data()), nbytes);
        },
        any);
  }
  const std::string manifest =
      nlohmann::json{{"tensors", entries}, {"metadata", metadata}}.dump();
  std::string out(kMagic, sizeof(kMagic));
  AppendU64(out, manifest.size());
  out += manifest;
  out += payload;
  return out;
}

TensorContainer TensorContainer::Deserialize(std::string_view bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ContainerError("container: missing PXB1 magic");
  }
  const std::uint64_t manifest_len = ReadU64(bytes.substr(4, 8));
  if (manifest_len > bytes.size() - 12) throw ContainerError("container: truncated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(12, manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw ContainerError(std::string("container: bad manifest: ") + e.what());
  }
  const std::string_view payload = bytes.substr(12 + manifest_len);

  TensorContainer c;
  c.metadata = manifest.value("metadata", nlohmann::json::object());
  for (const auto& e : manifest.at("tensors")) {
    const auto name = e.at("name").get<std::string>();
    const auto dtype = e.at("dtype").get<std::string>();
    const auto shape = e.at("shape").get<Shape>();
    const auto offset = e.at("offset").get<std::uint64_t>();
    const auto nbytes = e.at("nbytes").get<std::uint64_t>();
    if (offset > payload.size() || nbytes > payload.size() - offset) {
      throw ContainerError("container: tensor '" + name + "' runs past end of file");
    }
    const std::string_view data = payload.substr(offset, nbytes);
    if (dtype == "f32") {
      c.tensors.emplace(name, DecodeTensor<float>(shape, data));
    } else if (dtype == "f64") {
      c.tensors.emplace(name, DecodeTensor<double>(shape, data));
    } else if (dtype == "u8") {
      c.tensors.emplace(name, DecodeTensor<std::uint8_t>(shape, data));
    } else {
      throw ContainerError("container: unknown dtype '" + dtype + "'");
    }
  }
  return c;
}

void TensorContainer::Save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write-then-rename so an interrupted run never leaves a half-written file.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ContainerError("container: cannot write " + tmp.string());
    const std::string bytes = Serialize();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ContainerError("container: short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TensorContainer TensorContainer::Load(const std::filesystem::path& path) {
  return Deserialize(ReadFile(path));
}

nlohmann::json TensorContainer::ReadManifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContainerError("container: cannot open " + path.string());
  std::string head(12, '\0');
  in.read(head.data(), 12);
  if (in.gcount() != 12 || std::memcmp(head.data(), kMagic, 4) != 0) {
    throw ContainerError("container: missing PXB1 magic in " + path.string());
  }
  std::string manifest(ReadU64(std::string_view(head).substr(4)), '\0');
  in.read(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  if (static_cast<std::size_t>(in.gcount()) != manifest.size()) {
    throw ContainerError("container: truncated manifest in " + path.string());
  }
  return nlohmann::json::parse(manifest);
}

}  // namespace prunex

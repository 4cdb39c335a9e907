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

#ifndef PRUNEX_SRC_CSV_H_
#define PRUNEX_SRC_CSV_H_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace prunex::internal {

// Shortest text that parses back to exactly `value`.
std::string FormatNumber(double value);

// Writes `provenance` as '#'-prefixed lines, then the header and rows.
void WriteCsv(const std::filesystem::path& path, std::string_view provenance,
              const std::vector<std::string>& header,
              const std::vector<std::vector<std::string>>& rows);

void WriteTextFile(const std::filesystem::path& path, std::string_view text);

}  // namespace prunex::internal

#endif  // PRUNEX_SRC_CSV_H_

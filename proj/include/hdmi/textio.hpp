// Copyright 2026 The hdmi_lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Locale-independent number formatting and file helpers shared by the CSV
// and JSON writers.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hdmi {

// 17 significant digits, '.' decimal point; round-trips every double.
std::string format_real(double v);
// Shortest representation that round-trips (0.1 -> "0.1"); for names and
// parameter echoes.
std::string format_short(double v);

// Parses a full field as a double; returns false on trailing junk.
bool parse_real(std::string_view field, double& out);
bool parse_int(std::string_view field, int& out);

std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');

// Throws IoError on failure.
void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace hdmi

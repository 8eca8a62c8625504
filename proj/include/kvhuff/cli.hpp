// Copyright 2026 The kvhuff Authors
// SPDX-License-Identifier: Apache-2.0
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

#ifndef KVHUFF_CLI_HPP_
#define KVHUFF_CLI_HPP_

#include <ostream>

namespace kvhuff::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the kvhuff tool. Verbs: compress, decompress, simulate,
// ratio-sweep. Returns the process exit code; never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kvhuff::cli

#endif  // KVHUFF_CLI_HPP_

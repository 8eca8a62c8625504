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

#ifndef KVHUFF_ERROR_HPP_
#define KVHUFF_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace kvhuff {

// Base of every error thrown by the library. The CLI maps IoError and
// UsageError to exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File missing, unreadable, unwritable.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed on-disk data: bad magic, version, truncation, non-finite values.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or mismatched dimensions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Entropy coding failures: codes absent from a codebook, corrupt bitstreams,
// Kraft violations.
class CodecError : public Error {
 public:
  using Error::Error;
};

// Arena reservation would exceed its configured limit.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace kvhuff

#endif  // KVHUFF_ERROR_HPP_

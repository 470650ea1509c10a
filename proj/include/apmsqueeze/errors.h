// Copyright 2026 The apmsqueeze Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#ifndef APMSQUEEZE_ERRORS_H_
#define APMSQUEEZE_ERRORS_H_

#include <stdexcept>
#include <string>

namespace apmsqueeze {

// Base class for every error raised by the library. Callers that only need
// to report failures can catch this; tests match the concrete subclasses.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand lengths disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A value outside the operation's domain (negative sqrt, NaN input, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or construction parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed serialized chunk.
class DecodeError : public Error {
 public:
  using Error::Error;
};

// Operation invoked in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace apmsqueeze

#endif  // APMSQUEEZE_ERRORS_H_

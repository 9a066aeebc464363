/*
 * Copyright 2026 The nlammr Authors.
 *
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

#pragma once

#include <stdexcept>
#include <string>

namespace nlammr {

// Root of every error thrown by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not line up for an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A precondition of an API call was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Input data is well-formed but semantically invalid (unknown code, bad
// graph, empty prescription, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Input bytes or text cannot be decoded (bad JSON, bad magic, truncation).
class FormatError : public Error {
 public:
  using Error::Error;
};

// An embedding key is not present in the table.
class LookupError : public Error {
 public:
  using Error::Error;
};

// A checkpoint does not match the model it is loaded into.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Training produced a NaN or infinite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace nlammr

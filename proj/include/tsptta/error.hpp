// Copyright 2026 The tsptta Authors
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

// Exception hierarchy shared by every tsptta module.

#pragma once

#include <stdexcept>
#include <string>

namespace tsptta {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not agree for the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Every position of a masked softmax is masked out.
class InvalidMaskError : public Error {
 public:
  using Error::Error;
};

// Caller broke a documented precondition (bad permutation, wrong width, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class InvalidSizeError : public Error {
 public:
  using Error::Error;
};

// Exact solvers refuse instances whose state space would not fit in memory.
class SizeLimitError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class CorruptionError : public Error {
 public:
  using Error::Error;
};

// A file or model was built for a different configuration (e.g. city count).
class IncompatibilityError : public ContractViolation {
 public:
  using ContractViolation::ContractViolation;
};

class TrainingDivergence : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace tsptta

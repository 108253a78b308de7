// Copyright 2026 The crosscam Authors. All Rights Reserved.
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

#pragma once

#include <stdexcept>
#include <string>

namespace crosscam {

/// Base class for all library errors. Each subclass maps to one failure
/// category so callers (and the CLI) can distinguish usage problems from
/// runtime failures.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration values or combinations (exit code 2 at the CLI).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Tensor shape mismatches between operands.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Non-finite values, zero norms and similar numeric failures.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Use of state that has not been initialized (e.g. running statistics).
class StateError : public Error {
public:
    using Error::Error;
};

/// A caller broke an API contract, e.g. passed a gradient-carrying target.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent data on disk (manifests, checkpoints, images).
class DataError : public Error {
public:
    using Error::Error;
};

/// A batch that lacks the sample types a loss needs.
class BatchCompositionError : public Error {
public:
    using Error::Error;
};

}  // namespace crosscam

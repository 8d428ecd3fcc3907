// Copyright 2026 The cocstress Authors
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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cocstress
{

// Root of every exception thrown by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

// Input data violates a domain invariant (waypoint count, value ranges, ...).
class ValidationError : public Error
{
public:
  using Error::Error;
};

class IoError : public Error
{
public:
  using Error::Error;
};

class ConfigError : public Error
{
public:
  using Error::Error;
};

// Degenerate input for a statistical routine (zero variance, too few samples).
class StatsError : public Error
{
public:
  using Error::Error;
};

class AnalysisError : public Error
{
public:
  using Error::Error;
};

// A corrupt line in a line-delimited record file.
class RecordError : public Error
{
public:
  RecordError(std::size_t line, const std::string & what)
  : Error("line " + std::to_string(line) + ": " + what), line_(line)
  {
  }

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

}  // namespace cocstress

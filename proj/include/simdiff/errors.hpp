// Copyright 2026 The SimDiff Authors
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

namespace simdiff {

// Bad arguments, shapes, or configuration values.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// The simulator lost the reference (escape radius exceeded or state blew up).
struct TrackingFailure : std::runtime_error {
  TrackingFailure(const std::string& what, int frame_index)
      : std::runtime_error(what), frame(frame_index) {}
  int frame;
};

// Non-finite values encountered inside an iterative numeric procedure.
struct NumericDivergence : std::runtime_error {
  NumericDivergence(const std::string& what, int step_index)
      : std::runtime_error(what), step(step_index) {}
  int step;
};

// Corpus generation retained zero clips.
struct EmptyCorpusError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed serialized data; line is 1-based for line-oriented formats.
struct ParseError : std::runtime_error {
  ParseError(const std::string& what, int line_number)
      : std::runtime_error(what), line(line_number) {}
  int line;
};

}  // namespace simdiff

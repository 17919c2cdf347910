// Copyright 2026 The LMF Authors
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

#ifndef LMF_ERRORS_HPP_
#define LMF_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace lmf {

// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kInput,       // malformed files, bad arguments, shape mismatches
  kDivergence,  // non-finite objective during optimization
  kDegenerate,  // empty inputs, unsplittable graphs, undefined metrics
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  // line is 1-based; 0 when the error is not tied to a line.
  explicit ParseError(const std::string& what, long line = 0)
      : Error(ErrorKind::kInput, what), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

class DuplicateEntryError : public Error {
 public:
  explicit DuplicateEntryError(const std::string& what)
      : Error(ErrorKind::kInput, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what)
      : Error(ErrorKind::kInput, what) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what)
      : Error(ErrorKind::kInput, what) {}
};

class DegenerateError : public Error {
 public:
  explicit DegenerateError(const std::string& what)
      : Error(ErrorKind::kDegenerate, what) {}
};

// Graph too small to bisect, or every bisection leaves an empty side.
class NoSplitError : public DegenerateError {
 public:
  using DegenerateError::DegenerateError;
};

// No single vector promotion raises pooled block density.
class DegenerateBlockError : public DegenerateError {
 public:
  using DegenerateError::DegenerateError;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int iteration)
      : Error(ErrorKind::kDivergence, what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

// Failure inside one block of a localized fit; keeps the original kind.
class BlockError : public Error {
 public:
  BlockError(const Error& cause, int block)
      : Error(cause.kind(), "block " + std::to_string(block) + ": " + cause.what()),
        block_(block) {}
  int block() const { return block_; }

 private:
  int block_;
};

}  // namespace lmf

#endif  // LMF_ERRORS_HPP_

// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#ifndef GRAPHNLP_ERRORS_HPP
#define GRAPHNLP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace graphnlp {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// --- expression / evaluation ---
class DomainError : public Error {
 public:
  using Error::Error;
};
class IndexError : public Error {
 public:
  using Error::Error;
};

// --- model construction ---
class CrossNodeExpression : public Error {
 public:
  using Error::Error;
};
class SingleNodeLink : public Error {
 public:
  using Error::Error;
};
class UnreachableNode : public Error {
 public:
  using Error::Error;
};
class LengthMismatch : public Error {
 public:
  using Error::Error;
};
class EmptyPart : public Error {
 public:
  using Error::Error;
};
class InvalidPartCount : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class TopologyError : public Error {
 public:
  using Error::Error;
};

// --- linear algebra ---
class StructurallySingular : public Error {
 public:
  StructurallySingular(const std::string& what, int zero_pivots)
      : Error(what), zero_pivots(zero_pivots) {}
  int zero_pivots;
};

// --- solver ---
class LineSearchFailure : public Error {
 public:
  using Error::Error;
};
class MaxIterations : public Error {
 public:
  using Error::Error;
};

// --- KKT backends ---
class SingularKKT : public Error {
 public:
  using Error::Error;
};
class SingularBlock : public Error {
 public:
  SingularBlock(const std::string& what, int block) : Error(what), block(block) {}
  int block;
};
class SingularSchur : public Error {
 public:
  using Error::Error;
};
class NonAffineLink : public Error {
 public:
  using Error::Error;
};
class NotTwoStage : public Error {
 public:
  using Error::Error;
};

// --- file formats ---
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace graphnlp

#endif  // GRAPHNLP_ERRORS_HPP

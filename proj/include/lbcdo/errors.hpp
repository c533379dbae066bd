/*
   Copyright 2026 The lbcdo Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <stdexcept>
#include <string>

namespace lbcdo {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A model or configuration parameter is outside its admissible set.
class InvalidParameter : public Error {
public:
    using Error::Error;
};

/// T / alpha is not an integer number of periods.
class ScheduleError : public Error {
public:
    using Error::Error;
};

/// A spread formula has a vanishing premium leg.
class DegenerateQuote : public Error {
public:
    using Error::Error;
};

/// A root search found no solution in its bracket.
class NoSolution : public Error {
public:
    NoSolution(const std::string& what, double lo, double hi)
        : Error(what), attainable_lo(lo), attainable_hi(hi) {}

    double attainable_lo;
    double attainable_hi;
};

/// Overflow, non-convergence, singular factorisation and friends.
class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed weight file. `layer` is -1 for header-level problems.
class LoadError : public Error {
public:
    LoadError(const std::string& what, int layer_index)
        : Error(what), layer(layer_index) {}

    int layer;
};

} // namespace lbcdo

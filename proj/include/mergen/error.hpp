//
// Copyright 2026 The Mergen Authors
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
//

#pragma once

#include <stdexcept>
#include <string>

namespace mergen {

enum class Err {
  NotASyllable,
  UnmappableCharacter,
  AmbiguousParse,
  MalformedLine,
  EmptySide,
  TooSmall,
  OutOfVocabulary,
  ZeroVector,
  NonFiniteLoss,
  AllMasked,
  LengthMismatch,
  EmptyCorpus,
  MissingRun,
  BadConfig,
  Io,
};

inline const char* err_name(Err e) {
  switch (e) {
    case Err::NotASyllable: return "NotASyllable";
    case Err::UnmappableCharacter: return "UnmappableCharacter";
    case Err::AmbiguousParse: return "AmbiguousParse";
    case Err::MalformedLine: return "MalformedLine";
    case Err::EmptySide: return "EmptySide";
    case Err::TooSmall: return "TooSmall";
    case Err::OutOfVocabulary: return "OutOfVocabulary";
    case Err::ZeroVector: return "ZeroVector";
    case Err::NonFiniteLoss: return "NonFiniteLoss";
    case Err::AllMasked: return "AllMasked";
    case Err::LengthMismatch: return "LengthMismatch";
    case Err::EmptyCorpus: return "EmptyCorpus";
    case Err::MissingRun: return "MissingRun";
    case Err::BadConfig: return "BadConfig";
    case Err::Io: return "Io";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& what)
      : std::runtime_error(std::string(err_name(code)) + ": " + what), code_(code) {}

  Err code() const { return code_; }

 private:
  Err code_;
};

}  // namespace mergen

#pragma once

#include <string>

#include "auggen/error.hpp"

namespace auggen::pipeline {

// Malformed or inconsistent configuration. Exit code 2.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// A stage's input is absent or was produced under different inputs. Exit code 3.
class UpstreamMissing : public Error {
 public:
  // `problem` reads like "missing upstream artifact out/train-gen".
  UpstreamMissing(const std::string& problem, const std::string& command)
      : Error(problem + "; run `auggen " + command + "` first"),
        command_(command) {}
  const std::string& command() const noexcept { return command_; }

 private:
  std::string command_;
};

}  // namespace auggen::pipeline

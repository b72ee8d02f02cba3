#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace omc {

enum class ErrorCode {
  kInvalidInput,
  kCorruptBuffer,
  kMissingVariable,
  kCorruptCheckpoint,
  kInvalidConfig,
  kSkippedClient,
  kDivergedClient,
  kRoundFailed,
};

const char* error_code_name(ErrorCode code);

// Single exception type for the library; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class CheckpointError : public Error {
 public:
  CheckpointError(std::uint64_t offset, const std::string& what)
      : Error(ErrorCode::kCorruptCheckpoint, what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class ClientError : public Error {
 public:
  ClientError(ErrorCode code, std::uint64_t round, std::uint64_t client, const std::string& what)
      : Error(code, what + " (round " + std::to_string(round) + ", client " +
                        std::to_string(client) + ")"),
        round_(round),
        client_(client) {}

  std::uint64_t round() const noexcept { return round_; }
  std::uint64_t client() const noexcept { return client_; }

 private:
  std::uint64_t round_;
  std::uint64_t client_;
};

}  // namespace omc

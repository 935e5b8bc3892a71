#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "oko/theoryverify.hpp"

namespace oko {

// Exit statuses shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitFailure = 2;

int cmd_train(const std::filesystem::path& config, std::size_t workers, std::ostream& out, std::ostream& err);
int cmd_verify(const VerifyOptions& opts, const std::optional<std::filesystem::path>& json_out,
               std::ostream& out, std::ostream& err, bool parallel = true);
int cmd_report(const std::filesystem::path& dir, std::ostream& out, std::ostream& err);

// Parses argv (CLI11) and dispatches.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace oko

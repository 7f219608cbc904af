#include <CLI11.hpp>
#include <filesystem>
#include <fmt/format.h>

#include <cstdio>
#include <exception>

#include "commands.hpp"
#include "dfetrack/error.hpp"

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

int report(const char* kind, const std::exception& e, int code) {
  fmt::print(stderr, "dfetrack: {}: {}\n", kind, e.what());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse feature tracking with deep feature encodings, pyramidal Lucas-Kanade and chi-square error analysis.",
               "dfetrack"};
  app.set_version_flag("--version", DFETRACK_VERSION);
  app.require_subcommand(1);
  dfetrack::cli::add_commands(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  } catch (const dfetrack::InvalidInput& e) {
    return report("invalid input", e, kExitInvalid);
  } catch (const dfetrack::NumericError& e) {
    return report("numeric failure", e, kExitNumeric);
  } catch (const dfetrack::IoError& e) {
    return report("i/o error", e, kExitIo);
  } catch (const std::filesystem::filesystem_error& e) {
    return report("i/o error", e, kExitIo);
  } catch (const std::exception& e) {
    return report("error", e, 1);
  }
  return 0;
}

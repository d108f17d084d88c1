#pragma once

namespace feedloop {

/**
 * Full command-line entry point (subcommands: generate, annotate, pairs,
 * iterate, bon, judge, validate). Returns the process exit code: 0 on
 * success, 2 for configuration errors, 1 otherwise; failures also emit a
 * one-line JSON error report on stderr.
 */
int run_cli(int argc, const char* const* argv);

}  // namespace feedloop

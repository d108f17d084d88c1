#pragma once

#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace feedloop::util {

/// FNV-1a 64-bit. Used wherever a hash must be stable across runs and
/// platforms (mock synthesis, per-instruction RNG seed derivation);
/// std::hash gives no such guarantee.
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 14695981039346656037ull) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string trim(std::string_view s);
std::string_view trim_view(std::string_view s);

/// Splits into maximal runs of non-whitespace characters.
std::vector<std::string> split_words(std::string_view text);

/// Word count under the same definition as split_words.
std::size_t word_count(std::string_view text);

/// Splits on '\n', stripping a trailing '\r' from each line.
std::vector<std::string> split_lines(std::string_view text);

std::string lowercase_first(std::string s);

std::string base64_encode(const unsigned char* data, std::size_t len);

std::string read_text_file(const std::string& path);           // throws IoError
void write_text_file_atomic(const std::string& path, const std::string& content);

/// Replaces every occurrence of `{key}` in the template.
std::string fill_placeholder(std::string text, std::string_view key, std::string_view value);

/// Per-item outcome for fan-out stages that must not abort on one failure.
template <typename T>
struct Outcome {
  std::optional<T> value;
  std::string error_code;
  std::string error_message;

  bool ok() const { return value.has_value(); }
};

namespace detail {
void run_indexed(std::size_t count, int max_workers, const std::function<void(std::size_t)>& body);
}

/**
 * Applies `fn` to every element with at most `max_workers` threads.
 * Results land at their input index, so output order never depends on
 * scheduling. The first exception (lowest index) is rethrown.
 */
template <typename In, typename Fn>
auto parallel_map(const std::vector<In>& items, int max_workers, Fn fn)
    -> std::vector<decltype(fn(items[std::size_t{0}]))> {
  using Out = decltype(fn(items[std::size_t{0}]));
  std::vector<Out> results(items.size());
  std::vector<std::exception_ptr> errors(items.size());
  detail::run_indexed(items.size(), max_workers, [&](std::size_t i) {
    try {
      results[i] = fn(items[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return results;
}

/// Like parallel_map but collects per-item failures instead of throwing.
template <typename In, typename Fn>
auto parallel_map_outcomes(const std::vector<In>& items, int max_workers, Fn fn)
    -> std::vector<Outcome<decltype(fn(items[std::size_t{0}]))>>;

}  // namespace feedloop::util

#include "feedloop/errors.hpp"

namespace feedloop::util {

template <typename In, typename Fn>
auto parallel_map_outcomes(const std::vector<In>& items, int max_workers, Fn fn)
    -> std::vector<Outcome<decltype(fn(items[std::size_t{0}]))>> {
  using Out = decltype(fn(items[std::size_t{0}]));
  std::vector<Outcome<Out>> results(items.size());
  detail::run_indexed(items.size(), max_workers, [&](std::size_t i) {
    try {
      results[i].value = fn(items[i]);
    } catch (const Error& e) {
      results[i].error_code = e.code();
      results[i].error_message = e.what();
    } catch (const std::exception& e) {
      results[i].error_code = "internal_error";
      results[i].error_message = e.what();
    }
  });
  return results;
}

}  // namespace feedloop::util

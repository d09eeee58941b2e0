// Small text I/O helpers: exact decimal float formatting and CSV primitives.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace connlab {

// Formats with up to 17 significant digits (printf %.17g semantics), which
// round-trips every finite double exactly.
std::string format_double(double v);

// Parses a decimal float; `context` (e.g. "file.csv:12") prefixes the error.
double parse_double(const std::string& token, const std::string& context);

std::vector<std::string> split_csv_line(const std::string& line);

std::vector<std::string> read_lines(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& content);

std::string read_text_file(const std::filesystem::path& path);

// FNV-1a 64-bit, used for input fingerprints in run manifests.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64_file(const std::filesystem::path& path, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string to_hex(std::uint64_t v);

// Writes "[connlab] ..." notes to stderr; informational, never fatal.
void log_note(const std::string& message);

// As log_note, but each distinct message is emitted once per process.
// For notes that would otherwise repeat inside prediction loops.
void log_note_once(const std::string& message);

}  // namespace connlab
